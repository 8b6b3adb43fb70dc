"""MQTT client session.

Works against the embedded micro-broker or any external MQTT 3.1.1 broker;
nothing here assumes broker internals. Inbound publishes are handed to a
single ``on_message`` callback when one is installed, otherwise queued for
``next_message()``. A housekeeping thread keeps the connection alive with
PINGREQ while idle. QoS 1 publishes block until the PUBACK arrives and are
resent with the DUP flag on timeout.
"""

from __future__ import annotations

import queue
import secrets
import socket
import threading
import time
from dataclasses import dataclass
from typing import Callable

from myno.mqtt.packets import (
    Connack,
    Connect,
    Disconnect,
    MalformedPacket,
    MqttError,
    NeedMoreBytes,
    Pingreq,
    Pingresp,
    Puback,
    Publish,
    Suback,
    Subscribe,
    Unsuback,
    Unsubscribe,
    decode_packet,
    encode_packet,
)


class ConnectionLost(MqttError):
    """The TCP session died; the caller decides the reconnect policy."""


@dataclass(frozen=True)
class Message:
    topic: str
    payload: bytes
    qos: int = 0
    retain: bool = False
    dup: bool = False

    @property
    def text(self) -> str:
        return self.payload.decode("utf-8", errors="replace")


class MqttClient:
    """One broker connection; safe to publish from multiple threads."""

    def __init__(
        self,
        host: str,
        port: int,
        client_id: str | None = None,
        keep_alive: int = 60,
        clean_session: bool = True,
        on_message: Callable[[Message], None] | None = None,
        ack_timeout: float = 5.0,
        retry_interval: float = 1.0,
    ):
        self.host = host
        self.port = port
        self.client_id = client_id or f"myno-{secrets.token_hex(6)}"
        self.keep_alive = keep_alive
        self.clean_session = clean_session
        self.on_message = on_message
        self.ack_timeout = ack_timeout
        self.retry_interval = retry_interval
        self._sock: socket.socket | None = None
        self._write_lock = threading.Lock()
        self._next_packet_id = 1
        self._id_lock = threading.Lock()
        self._acks: dict[int, "queue.Queue"] = {}
        self._inbox: "queue.Queue[Message]" = queue.Queue()
        self._closed = threading.Event()
        self._connected = threading.Event()
        self._last_tx = time.monotonic()
        self._threads: list[threading.Thread] = []
        self.published = 0
        self.received = 0

    # -- lifecycle ---------------------------------------------------------

    def connect(self, timeout: float = 10.0) -> "MqttClient":
        sock = socket.create_connection((self.host, self.port), timeout=timeout)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        sock.settimeout(None)
        self._sock = sock
        self._send(
            Connect(
                client_id=self.client_id,
                clean_session=self.clean_session,
                keep_alive=self.keep_alive,
            )
        )
        reply = queue.Queue()
        self._acks[0] = reply  # CONNACK carries no id; slot 0 is reserved for it
        self._start_thread(self._reader_loop, f"mqtt-reader-{self.client_id}")
        try:
            connack = reply.get(timeout=timeout)
        except queue.Empty:
            self.close()
            raise ConnectionLost("no CONNACK from broker") from None
        finally:
            self._acks.pop(0, None)
        if not isinstance(connack, Connack) or connack.return_code != 0:
            self.close()
            raise ConnectionLost(f"broker refused connection: {connack}")
        self._connected.set()
        self._start_thread(self._keepalive_loop, f"mqtt-keepalive-{self.client_id}")
        return self

    def close(self) -> None:
        if self._closed.is_set():
            return
        self._closed.set()
        if self._sock is not None:
            try:
                with self._write_lock:
                    self._sock.sendall(encode_packet(Disconnect()))
            except OSError:
                pass
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()
        for thread in self._threads:
            if thread is not threading.current_thread():
                thread.join(timeout=2)

    @property
    def is_connected(self) -> bool:
        return self._connected.is_set() and not self._closed.is_set()

    # -- operations --------------------------------------------------------

    def subscribe(self, topic_filter: str, qos: int = 0) -> int:
        """Subscribe and return the granted QoS. Raises on broker refusal."""
        pid = self._allocate_id()
        suback = self._request(Subscribe(packet_id=pid, topics=((topic_filter, qos),)), pid)
        code = suback.return_codes[0]
        if code == 0x80:
            raise MqttError(f"subscription refused for {topic_filter!r}")
        return code

    def unsubscribe(self, topic_filter: str) -> None:
        pid = self._allocate_id()
        self._request(Unsubscribe(packet_id=pid, topics=(topic_filter,)), pid)

    def publish(self, topic: str, payload: bytes | str, qos: int = 0, retain: bool = False) -> None:
        if isinstance(payload, str):
            payload = payload.encode("utf-8")
        if qos == 0:
            self._send(Publish(topic=topic, payload=payload, retain=retain))
            self.published += 1
            return
        pid = self._allocate_id()
        reply: "queue.Queue" = queue.Queue()
        self._acks[pid] = reply
        try:
            packet = Publish(topic=topic, payload=payload, qos=1, retain=retain, packet_id=pid)
            self._send(packet)
            deadline = time.monotonic() + self.ack_timeout
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise MqttError(f"no PUBACK for packet {pid} within {self.ack_timeout}s")
                try:
                    ack = reply.get(timeout=min(remaining, self.retry_interval))
                    if ack is None:
                        raise ConnectionLost("session closed while awaiting PUBACK")
                    self.published += 1
                    return
                except queue.Empty:
                    if self._closed.is_set():
                        raise ConnectionLost("session closed while awaiting PUBACK") from None
                    self._send(
                        Publish(
                            topic=topic, payload=payload, qos=1, retain=retain, dup=True, packet_id=pid
                        )
                    )
        finally:
            self._acks.pop(pid, None)

    def next_message(self, timeout: float | None = None) -> Message | None:
        """Pop the next inbound publish; None on timeout or after close."""
        if self.on_message is not None:
            raise MqttError("messages are routed to the on_message callback")
        try:
            return self._inbox.get(timeout=timeout)
        except queue.Empty:
            return None

    # -- internals ---------------------------------------------------------

    def _start_thread(self, target, name) -> None:
        thread = threading.Thread(target=target, name=name, daemon=True)
        thread.start()
        self._threads.append(thread)

    def _allocate_id(self) -> int:
        with self._id_lock:
            pid = self._next_packet_id
            self._next_packet_id = pid % 65535 + 1
            return pid

    def _send(self, packet) -> None:
        if self._sock is None or self._closed.is_set():
            raise ConnectionLost("session is closed")
        data = encode_packet(packet)
        try:
            with self._write_lock:
                self._sock.sendall(data)
                self._last_tx = time.monotonic()
        except OSError as exc:
            self._closed.set()
            raise ConnectionLost(str(exc)) from exc

    def _request(self, packet, pid: int):
        reply: "queue.Queue" = queue.Queue()
        self._acks[pid] = reply
        try:
            self._send(packet)
            try:
                ack = reply.get(timeout=self.ack_timeout)
            except queue.Empty:
                raise MqttError(f"no acknowledgement for packet {pid}") from None
            if ack is None:
                raise ConnectionLost("session closed while awaiting acknowledgement")
            return ack
        finally:
            self._acks.pop(pid, None)

    def _reader_loop(self) -> None:
        assert self._sock is not None
        buffer = bytearray()
        try:
            while not self._closed.is_set():
                try:
                    packet, consumed = decode_packet(bytes(buffer))
                except NeedMoreBytes:
                    chunk = self._sock.recv(65536)
                    if not chunk:
                        break
                    buffer += chunk
                    continue
                del buffer[:consumed]
                self._dispatch(packet)
        except (OSError, MalformedPacket):
            pass
        finally:
            self._closed.set()
            self._connected.clear()
            # unblock any waiter so it can observe the closed flag
            for waiter in list(self._acks.values()):
                waiter.put(None)

    def _dispatch(self, packet) -> None:
        if isinstance(packet, Publish):
            if packet.qos == 1 and packet.packet_id is not None:
                self._send(Puback(packet_id=packet.packet_id))
            self.received += 1
            message = Message(
                topic=packet.topic,
                payload=packet.payload,
                qos=packet.qos,
                retain=packet.retain,
                dup=packet.dup,
            )
            if self.on_message is not None:
                self.on_message(message)
            else:
                self._inbox.put(message)
        elif isinstance(packet, (Suback, Unsuback, Puback)):
            waiter = self._acks.get(packet.packet_id)
            if waiter is not None:
                waiter.put(packet)
        elif isinstance(packet, Connack):
            waiter = self._acks.get(0)
            if waiter is not None:
                waiter.put(packet)
        elif isinstance(packet, Pingresp):
            pass

    def _keepalive_loop(self) -> None:
        if self.keep_alive <= 0:
            return
        interval = max(self.keep_alive / 4, 0.05)
        while not self._closed.wait(interval):
            idle = time.monotonic() - self._last_tx
            if idle >= self.keep_alive * 0.75:
                try:
                    self._send(Pingreq())
                except ConnectionLost:
                    return


def connect(host: str, port: int, **kwargs) -> MqttClient:
    """Convenience wrapper: build a client and open the connection."""
    return MqttClient(host, port, **kwargs).connect()
