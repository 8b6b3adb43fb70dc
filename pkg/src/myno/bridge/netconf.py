"""NETCONF-lite northbound server.

RFC 6241 subset over plain TCP: hello exchange with the base:1.0
capability, ``<get>`` for the live device tree, ``<rpc>`` children named
after generated rpcs, and ``<close-session>``. Messages use the classic
end-of-message delimiter ``]]>]]>``; there is no chunked framing, no
datastore locking, and no SSH.
"""

from __future__ import annotations

import logging
import socket
import threading
from xml.etree import ElementTree
from xml.sax.saxutils import escape

from myno.bridge.core import ArgTypeError, UnknownRpc

log = logging.getLogger("myno.netconf")

EOM = b"]]>]]>"
BASE_NS = "urn:ietf:params:xml:ns:netconf:base:1.0"
MYNO_NS = "urn:myno:management"


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


class NetconfServer:
    def __init__(self, bridge, host: str = "127.0.0.1", port: int = 8300):
        self.bridge = bridge
        self.host = host
        self._requested_port = port
        self.port: int | None = None
        self._server: socket.socket | None = None
        self._stopping = threading.Event()
        self._thread: threading.Thread | None = None
        self._session_counter = 0

    def start(self) -> "NetconfServer":
        server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        server.bind((self.host, self._requested_port))
        server.listen(8)
        self._server = server
        self.port = server.getsockname()[1]
        self._thread = threading.Thread(target=self._accept_loop, name="netconf-accept", daemon=True)
        self._thread.start()
        log.info("netconf-lite listening on %s:%d", self.host, self.port)
        return self

    def stop(self) -> None:
        self._stopping.set()
        if self._server is not None:
            try:
                self._server.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._server.close()
        if self._thread is not None:
            self._thread.join(timeout=2)

    def _accept_loop(self) -> None:
        assert self._server is not None
        while not self._stopping.is_set():
            try:
                sock, _addr = self._server.accept()
            except OSError:
                return
            threading.Thread(
                target=self._session, args=(sock,), name="netconf-session", daemon=True
            ).start()

    def _session(self, sock: socket.socket) -> None:
        self._session_counter += 1
        session_id = self._session_counter
        try:
            _send(sock, self._hello(session_id))
            buffer = bytearray()
            while not self._stopping.is_set():
                end = buffer.find(EOM)
                if end < 0:
                    chunk = sock.recv(65536)
                    if not chunk:
                        return
                    buffer += chunk
                    continue
                raw = bytes(buffer[:end])
                del buffer[: end + len(EOM)]
                if not self._handle(sock, raw):
                    return
        except OSError:
            pass
        finally:
            try:
                sock.close()
            except OSError:
                pass

    def _hello(self, session_id: int) -> str:
        return (
            f'<hello xmlns="{BASE_NS}">'
            "<capabilities>"
            "<capability>urn:ietf:params:netconf:base:1.0</capability>"
            "</capabilities>"
            f"<session-id>{session_id}</session-id>"
            "</hello>"
        )

    def _handle(self, sock: socket.socket, raw: bytes) -> bool:
        """Process one framed message; False ends the session."""
        try:
            root = ElementTree.fromstring(raw.decode("utf-8"))
        except (ElementTree.ParseError, UnicodeDecodeError) as exc:
            _send(sock, _rpc_error("1", "malformed-message", f"cannot parse message: {exc}"))
            return True
        tag = _local(root.tag)
        if tag == "hello":
            return True  # client capabilities are accepted as-is
        if tag != "rpc":
            _send(sock, _rpc_error("1", "malformed-message", f"unexpected element {tag!r}"))
            return True
        message_id = root.attrib.get("message-id", "1")
        operation = next(iter(root), None)
        if operation is None:
            _send(sock, _rpc_error(message_id, "malformed-message", "rpc without operation"))
            return True
        op_name = _local(operation.tag)
        if op_name == "close-session":
            _send(sock, _rpc_reply(message_id, "<ok/>"))
            return False
        if op_name == "get":
            _send(sock, _rpc_reply(message_id, f"<data>{self._device_tree()}</data>"))
            return True
        self._generated_rpc(sock, message_id, op_name, operation)
        return True

    def _generated_rpc(self, sock, message_id: str, op_name: str, operation) -> None:
        args = {_local(child.tag): (child.text or "").strip() for child in operation}
        try:
            response = self.bridge.dispatch_rpc(op_name, args)
        except UnknownRpc:
            _send(
                sock,
                _rpc_error(message_id, "operation-not-supported", f"unknown rpc {op_name!r}"),
            )
            return
        except ArgTypeError as exc:
            _send(sock, _rpc_error(message_id, "invalid-value", str(exc)))
            return
        if response.status == "ok":
            _send(sock, _rpc_reply(message_id, "<ok/>"))
        else:
            detail = response.detail if isinstance(response.detail, str) else "device error"
            _send(sock, _rpc_error(message_id, "operation-failed", detail))

    def _device_tree(self) -> str:
        state = self.bridge.state_snapshot()
        parts = [f'<devices xmlns="{MYNO_NS}">']
        for device in state["devices"]:
            parts.append("<device>")
            parts.append(f"<uuid>{escape(device['uuid'])}</uuid>")
            parts.append(f"<name>{escape(device['name'])}</name>")
            parts.append(f"<state>{escape(device['state'])}</state>")
            parts.append("<sensors>")
            for name in sorted(device["sensors"]):
                sensor = device["sensors"][name]
                value = sensor["value"]
                parts.append("<sensor>")
                parts.append(f"<name>{escape(name)}</name>")
                parts.append(f"<value>{escape(value) if value is not None else ''}</value>")
                parts.append(f"<unit>{escape(sensor['unit'])}</unit>")
                parts.append("</sensor>")
            parts.append("</sensors>")
            parts.append("<actuators>")
            for name in sorted(device["actuators"]):
                actuator_state = device["actuators"][name]
                parts.append("<actuator>")
                parts.append(f"<name>{escape(name)}</name>")
                parts.append(f"<state>{escape(actuator_state) if actuator_state else ''}</state>")
                parts.append("</actuator>")
            parts.append("</actuators>")
            parts.append("</device>")
        parts.append("</devices>")
        return "".join(parts)


def _rpc_reply(message_id: str, body: str) -> str:
    return f'<rpc-reply message-id="{escape(message_id)}" xmlns="{BASE_NS}">{body}</rpc-reply>'


def _rpc_error(message_id: str, tag: str, message: str) -> str:
    body = (
        "<rpc-error>"
        "<error-type>protocol</error-type>"
        f"<error-tag>{escape(tag)}</error-tag>"
        "<error-severity>error</error-severity>"
        f"<error-message>{escape(message)}</error-message>"
        "</rpc-error>"
    )
    return _rpc_reply(message_id, body)


def _send(sock: socket.socket, message: str) -> None:
    sock.sendall(message.encode("utf-8") + b"\n" + EOM + b"\n")
