"""Embedded MQTT 3.1.1 micro-broker.

Stands in for an external broker so the whole suite runs self-contained:
CONNECT/SUBSCRIBE/UNSUBSCRIBE/PUBLISH/PING/DISCONNECT with QoS 0 and QoS 1
(store-and-ack, at-least-once redelivery with DUP), retained messages, and
session takeover on duplicate client ids. One reader thread per connection;
the subscription table sits behind a single lock. QoS 2 subscriptions are
refused with the 0x80 failure return code.
"""

from __future__ import annotations

import argparse
import logging
import os
import secrets
import socket
import threading
import time
from dataclasses import dataclass

from myno.mqtt.packets import (
    Connack,
    Connect,
    Disconnect,
    MalformedPacket,
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
from myno.mqtt.topics import TopicFilter

log = logging.getLogger("myno.broker")

CONNACK_ACCEPTED = 0
CONNACK_BAD_PROTOCOL = 1
CONNACK_ID_REJECTED = 2
SUBACK_FAILURE = 0x80


@dataclass
class _Pending:
    publish: Publish
    deadline: float


class _Session:
    """Server-side connection state; owned by its reader thread."""

    def __init__(self, broker: "MicroBroker", sock: socket.socket, peer: str):
        self.broker = broker
        self.sock = sock
        self.peer = peer
        self.client_id = ""
        self.connected = False
        self.keep_alive = 0
        self.last_rx = time.monotonic()
        self.will: Publish | None = None
        self.closed = threading.Event()
        self._write_lock = threading.Lock()
        self._next_packet_id = 1
        self.unacked: dict[int, _Pending] = {}

    def allocate_packet_id(self) -> int:
        with self._write_lock:
            pid = self._next_packet_id
            self._next_packet_id = pid % 65535 + 1
            return pid

    def send(self, packet) -> None:
        data = encode_packet(packet)
        with self._write_lock:
            self.sock.sendall(data)

    def close(self) -> None:
        if self.closed.is_set():
            return
        self.closed.set()
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


class MicroBroker:
    """In-process MQTT broker bound to a TCP listener.

    ``port=0`` binds an ephemeral port; read it back from ``.port`` after
    ``start()``.
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 1883,
        retry_interval: float = 1.0,
    ):
        self.host = host
        self._requested_port = port
        self.port: int | None = None
        self.retry_interval = retry_interval
        self._server: socket.socket | None = None
        self._sessions: dict[str, _Session] = {}  # connected, by client_id
        self._subscriptions: list[tuple[_Session, TopicFilter, int]] = []
        self._retained: dict[str, Publish] = {}
        self._lock = threading.Lock()
        self._stopping = threading.Event()
        self._threads: list[threading.Thread] = []
        # observability for tests and the experiment harness
        self.published_count = 0
        self.delivered_count = 0

    def start(self) -> "MicroBroker":
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((self.host, self._requested_port))
        server.listen(64)
        self._server = server
        self.port = server.getsockname()[1]
        self._spawn(self._accept_loop, "mqtt-broker-accept")
        self._spawn(self._housekeeping_loop, "mqtt-broker-housekeeping")
        log.info("broker listening on %s:%d", self.host, self.port)
        return self

    def stop(self) -> None:
        self._stopping.set()
        if self._server is not None:
            try:
                # shutdown wakes the blocked accept(); close alone does not
                self._server.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                self._server.close()
            except OSError:
                pass
        with self._lock:
            sessions = list(self._sessions.values())
        for session in sessions:
            session.close()
        for thread in self._threads:
            thread.join(timeout=2)

    def _spawn(self, target, name) -> None:
        thread = threading.Thread(target=target, name=name, daemon=True)
        thread.start()
        self._threads.append(thread)

    def _accept_loop(self) -> None:
        assert self._server is not None
        while not self._stopping.is_set():
            try:
                sock, addr = self._server.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            session = _Session(self, sock, f"{addr[0]}:{addr[1]}")
            thread = threading.Thread(
                target=self._session_loop, args=(session,), name=f"mqtt-conn-{addr[1]}", daemon=True
            )
            thread.start()

    def _session_loop(self, session: _Session) -> None:
        buffer = bytearray()
        abnormal = True
        try:
            while not self._stopping.is_set():
                try:
                    packet, consumed = decode_packet(bytes(buffer))
                except NeedMoreBytes:
                    chunk = session.sock.recv(65536)
                    if not chunk:
                        return
                    buffer += chunk
                    continue
                del buffer[:consumed]
                session.last_rx = time.monotonic()
                if isinstance(packet, Disconnect):
                    abnormal = False
                    session.will = None
                    return
                self._handle(session, packet)
        except MalformedPacket as exc:
            log.warning("closing %s: %s", session.peer, exc)
        except OSError:
            pass
        finally:
            self._drop_session(session, abnormal)

    def _handle(self, session: _Session, packet) -> None:
        if isinstance(packet, Connect):
            self._handle_connect(session, packet)
            return
        if not session.connected:
            raise MalformedPacket("first packet must be CONNECT")
        if isinstance(packet, Pingreq):
            session.send(Pingresp())
        elif isinstance(packet, Subscribe):
            codes = []
            retained: list[tuple[Publish, int]] = []
            with self._lock:
                for topic_filter, qos in packet.topics:
                    if qos > 1:
                        codes.append(SUBACK_FAILURE)
                        continue
                    parsed = TopicFilter.parse(topic_filter)
                    self._subscriptions = [
                        (s, f, q)
                        for (s, f, q) in self._subscriptions
                        if not (s is session and str(f) == topic_filter)
                    ]
                    self._subscriptions.append((session, parsed, qos))
                    codes.append(qos)
                    for topic, publish in self._retained.items():
                        if parsed.matches(topic):
                            retained.append((publish, min(publish.qos, qos)))
            session.send(Suback(packet_id=packet.packet_id, return_codes=tuple(codes)))
            for publish, qos in retained:
                self._deliver(session, publish, qos, retain=True)
        elif isinstance(packet, Unsubscribe):
            with self._lock:
                self._subscriptions = [
                    (s, f, q)
                    for (s, f, q) in self._subscriptions
                    if not (s is session and str(f) in packet.topics)
                ]
            session.send(Unsuback(packet_id=packet.packet_id))
        elif isinstance(packet, Publish):
            self._handle_publish(session, packet)
        elif isinstance(packet, Puback):
            with self._lock:
                session.unacked.pop(packet.packet_id, None)
        else:
            raise MalformedPacket(f"unexpected {type(packet).__name__} from client")

    def _handle_connect(self, session: _Session, packet: Connect) -> None:
        if session.connected:
            raise MalformedPacket("duplicate CONNECT")
        if packet.protocol_level != 4:
            session.send(Connack(return_code=CONNACK_BAD_PROTOCOL))
            raise MalformedPacket(f"protocol level {packet.protocol_level}")
        client_id = packet.client_id
        if not client_id:
            if not packet.clean_session:
                session.send(Connack(return_code=CONNACK_ID_REJECTED))
                raise MalformedPacket("empty client id with persistent session")
            client_id = f"myno-{secrets.token_hex(6)}"
        with self._lock:
            previous = self._sessions.get(client_id)
        if previous is not None:
            # MQTT takeover rule: the earlier session is closed
            log.info("client id %r taken over, closing previous session", client_id)
            previous.close()
        session.client_id = client_id
        session.keep_alive = packet.keep_alive
        session.connected = True
        if packet.will_topic is not None:
            session.will = Publish(
                topic=packet.will_topic,
                payload=packet.will_payload,
                qos=packet.will_qos,
                retain=packet.will_retain,
            )
        with self._lock:
            self._sessions[client_id] = session
        session.send(Connack(session_present=False, return_code=CONNACK_ACCEPTED))

    def _handle_publish(self, session: _Session, packet: Publish) -> None:
        if packet.qos == 1:
            assert packet.packet_id is not None
            session.send(Puback(packet_id=packet.packet_id))
        self.published_count += 1
        self._route(packet)

    def _route(self, packet: Publish) -> None:
        if packet.retain:
            with self._lock:
                if packet.payload:
                    self._retained[packet.topic] = packet
                else:
                    self._retained.pop(packet.topic, None)
        with self._lock:
            targets = [
                (s, min(packet.qos, qos))
                for (s, topic_filter, qos) in self._subscriptions
                if topic_filter.matches(packet.topic)
            ]
        for target, qos in targets:
            self._deliver(target, packet, qos, retain=False)

    def _deliver(self, session: _Session, packet: Publish, qos: int, retain: bool) -> None:
        out = Publish(
            topic=packet.topic,
            payload=packet.payload,
            qos=qos,
            # retain flag is only set when replaying a retained message
            retain=retain,
            packet_id=session.allocate_packet_id() if qos == 1 else None,
        )
        if qos == 1:
            with self._lock:
                session.unacked[out.packet_id] = _Pending(
                    publish=out, deadline=time.monotonic() + self.retry_interval
                )
        try:
            session.send(out)
            self.delivered_count += 1
        except OSError:
            session.close()

    def _housekeeping_loop(self) -> None:
        while not self._stopping.wait(min(self.retry_interval / 4, 0.25)):
            now = time.monotonic()
            with self._lock:
                sessions = list(self._sessions.values())
            for session in sessions:
                if session.closed.is_set():
                    continue
                if session.keep_alive and now - session.last_rx > session.keep_alive * 1.5:
                    log.info("keep-alive expired for %s", session.client_id)
                    session.close()
                    continue
                with self._lock:
                    due = [p for p in session.unacked.values() if p.deadline <= now]
                    for pending in due:
                        pending.deadline = now + self.retry_interval
                for pending in due:
                    resend = Publish(
                        topic=pending.publish.topic,
                        payload=pending.publish.payload,
                        qos=1,
                        dup=True,
                        packet_id=pending.publish.packet_id,
                    )
                    try:
                        session.send(resend)
                    except OSError:
                        session.close()

    def _drop_session(self, session: _Session, abnormal: bool) -> None:
        will = session.will if abnormal else None
        session.close()
        with self._lock:
            if self._sessions.get(session.client_id) is session:
                del self._sessions[session.client_id]
            self._subscriptions = [(s, f, q) for (s, f, q) in self._subscriptions if s is not session]
        if will is not None and not self._stopping.is_set():
            self._route(will)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="myno-broker", description="Run the embedded MQTT broker")
    parser.add_argument("--host", default="0.0.0.0")
    parser.add_argument("--port", type=int, default=int(os.environ.get("MYNO_MQTT_PORT", "1883")))
    parser.add_argument("--verbose", "-v", action="store_true")
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    broker = MicroBroker(host=args.host, port=args.port).start()
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        broker.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
