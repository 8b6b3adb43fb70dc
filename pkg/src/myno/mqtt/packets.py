"""MQTT 3.1.1 control packet codec.

Pure functions over bytes: no sockets, no threads. The broker and client
both frame their traffic through ``encode_packet`` / ``decode_packet`` so
the wire format is tested once, here. QoS 2 is not part of the supported
surface: PUBLISH packets carrying QoS 2 are rejected as malformed, while
SUBSCRIBE may *request* QoS 2 so a broker can refuse it with the 0x80
return code.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum

MAX_REMAINING_LENGTH = 268_435_455  # largest value a 4-byte varint encodes

PROTOCOL_NAME = "MQTT"
PROTOCOL_LEVEL = 4  # MQTT 3.1.1


class MqttError(Exception):
    """Base class for MQTT codec and session errors."""


class InvalidPacket(MqttError):
    """Packet violates an invariant and cannot be encoded."""


class MalformedPacket(MqttError):
    """Byte stream is not a valid MQTT 3.1.1 packet."""


class NeedMoreBytes(MqttError):
    """Buffer holds only a prefix of a packet; read more and retry."""


class PacketType(IntEnum):
    CONNECT = 1
    CONNACK = 2
    PUBLISH = 3
    PUBACK = 4
    SUBSCRIBE = 8
    SUBACK = 9
    UNSUBSCRIBE = 10
    UNSUBACK = 11
    PINGREQ = 12
    PINGRESP = 13
    DISCONNECT = 14


@dataclass(frozen=True)
class Connect:
    client_id: str
    clean_session: bool = True
    keep_alive: int = 60
    username: str | None = None
    password: bytes | None = None
    will_topic: str | None = None
    will_payload: bytes = b""
    will_qos: int = 0
    will_retain: bool = False
    protocol_level: int = PROTOCOL_LEVEL


@dataclass(frozen=True)
class Connack:
    session_present: bool = False
    return_code: int = 0


@dataclass(frozen=True)
class Publish:
    topic: str
    payload: bytes = b""
    qos: int = 0
    retain: bool = False
    dup: bool = False
    packet_id: int | None = None  # required iff qos > 0


@dataclass(frozen=True)
class Puback:
    packet_id: int


@dataclass(frozen=True)
class Subscribe:
    packet_id: int
    # (filter, requested_qos); qos 2 allowed here so brokers can refuse it
    topics: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class Suback:
    packet_id: int
    return_codes: tuple[int, ...]  # granted qos, or 0x80 = failure


@dataclass(frozen=True)
class Unsubscribe:
    packet_id: int
    topics: tuple[str, ...]


@dataclass(frozen=True)
class Unsuback:
    packet_id: int


@dataclass(frozen=True)
class Pingreq:
    pass


@dataclass(frozen=True)
class Pingresp:
    pass


@dataclass(frozen=True)
class Disconnect:
    pass


MqttPacket = (
    Connect
    | Connack
    | Publish
    | Puback
    | Subscribe
    | Suback
    | Unsubscribe
    | Unsuback
    | Pingreq
    | Pingresp
    | Disconnect
)


def encode_varint(value: int) -> bytes:
    if value < 0 or value > MAX_REMAINING_LENGTH:
        raise InvalidPacket(f"remaining length {value} out of range")
    out = bytearray()
    while True:
        byte = value % 128
        value //= 128
        if value > 0:
            byte |= 0x80
        out.append(byte)
        if value == 0:
            return bytes(out)


def decode_varint(buf: bytes, offset: int) -> tuple[int, int]:
    """Decode a varint at ``offset``; returns (value, bytes consumed).

    Raises NeedMoreBytes on a truncated varint and MalformedPacket if the
    continuation runs past the 4-byte limit.
    """
    multiplier = 1
    value = 0
    for i in range(4):
        if offset + i >= len(buf):
            raise NeedMoreBytes("truncated varint")
        byte = buf[offset + i]
        value += (byte & 0x7F) * multiplier
        if not byte & 0x80:
            return value, i + 1
        multiplier *= 128
    raise MalformedPacket("varint longer than 4 bytes")


def _encode_utf8(value: str) -> bytes:
    data = value.encode("utf-8")
    if len(data) > 0xFFFF:
        raise InvalidPacket("string exceeds 65535 bytes")
    return struct.pack("!H", len(data)) + data


def _encode_binary(value: bytes) -> bytes:
    if len(value) > 0xFFFF:
        raise InvalidPacket("binary field exceeds 65535 bytes")
    return struct.pack("!H", len(value)) + value


class _Reader:
    """Cursor over the body of a packet whose length is already known."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedPacket("field extends past remaining length")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("!H", self.take(2))[0]

    def packet_id(self) -> int:
        value = self.u16()
        if value == 0:
            raise MalformedPacket("packet id 0 is reserved")
        return value

    def binary(self) -> bytes:
        return self.take(self.u16())

    def utf8(self) -> str:
        raw = self.binary()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPacket(f"invalid UTF-8 string: {exc}") from None
        if "\x00" in text:
            raise MalformedPacket("NUL character in string")
        return text

    def remaining(self) -> bytes:
        out = self.data[self.pos :]
        self.pos = len(self.data)
        return out

    def done(self) -> None:
        if self.pos != len(self.data):
            raise MalformedPacket("trailing bytes after packet body")


def _check_packet_id(packet_id: int) -> int:
    if not 1 <= packet_id <= 0xFFFF:
        raise InvalidPacket(f"packet id {packet_id} out of range 1..65535")
    return packet_id


def _check_publish_topic(topic: str) -> str:
    if not topic:
        raise InvalidPacket("publish topic is empty")
    if "+" in topic or "#" in topic:
        raise InvalidPacket(f"wildcard in publish topic {topic!r}")
    if "\x00" in topic:
        raise InvalidPacket("NUL in publish topic")
    return topic


def encode_packet(packet: MqttPacket) -> bytes:
    """Encode one control packet to its MQTT 3.1.1 wire form."""
    if isinstance(packet, Connect):
        flags = 0
        if packet.clean_session:
            flags |= 0x02
        body = bytearray()
        body += _encode_utf8(PROTOCOL_NAME)
        body.append(packet.protocol_level)
        payload = bytearray(_encode_utf8(packet.client_id))
        if packet.will_topic is not None:
            if packet.will_qos not in (0, 1):
                raise InvalidPacket("will qos must be 0 or 1")
            flags |= 0x04 | (packet.will_qos << 3)
            if packet.will_retain:
                flags |= 0x20
            payload += _encode_utf8(packet.will_topic)
            payload += _encode_binary(packet.will_payload)
        if packet.username is not None:
            flags |= 0x80
            payload += _encode_utf8(packet.username)
            if packet.password is not None:
                flags |= 0x40
                payload += _encode_binary(packet.password)
        elif packet.password is not None:
            raise InvalidPacket("password requires username")
        body.append(flags)
        if not 0 <= packet.keep_alive <= 0xFFFF:
            raise InvalidPacket("keep_alive out of range")
        body += struct.pack("!H", packet.keep_alive)
        body += payload
        return _frame(PacketType.CONNECT, 0, bytes(body))

    if isinstance(packet, Connack):
        body = bytes([0x01 if packet.session_present else 0x00, packet.return_code])
        return _frame(PacketType.CONNACK, 0, body)

    if isinstance(packet, Publish):
        _check_publish_topic(packet.topic)
        if packet.qos not in (0, 1):
            raise InvalidPacket(f"qos {packet.qos} unsupported (QoS 2 not offered)")
        flags = (packet.qos << 1) | (0x01 if packet.retain else 0) | (0x08 if packet.dup else 0)
        body = bytearray(_encode_utf8(packet.topic))
        if packet.qos > 0:
            if packet.packet_id is None:
                raise InvalidPacket("qos 1 publish requires packet id")
            body += struct.pack("!H", _check_packet_id(packet.packet_id))
        elif packet.packet_id is not None:
            raise InvalidPacket("qos 0 publish must not carry a packet id")
        body += packet.payload
        return _frame(PacketType.PUBLISH, flags, bytes(body))

    if isinstance(packet, Puback):
        return _frame(PacketType.PUBACK, 0, struct.pack("!H", _check_packet_id(packet.packet_id)))

    if isinstance(packet, Subscribe):
        if not packet.topics:
            raise InvalidPacket("subscribe needs at least one filter")
        body = bytearray(struct.pack("!H", _check_packet_id(packet.packet_id)))
        for topic_filter, qos in packet.topics:
            if qos not in (0, 1, 2):
                raise InvalidPacket(f"requested qos {qos} invalid")
            body += _encode_utf8(topic_filter)
            body.append(qos)
        return _frame(PacketType.SUBSCRIBE, 0x02, bytes(body))

    if isinstance(packet, Suback):
        if not packet.return_codes:
            raise InvalidPacket("suback needs at least one return code")
        body = bytearray(struct.pack("!H", _check_packet_id(packet.packet_id)))
        for code in packet.return_codes:
            if code not in (0, 1, 2, 0x80):
                raise InvalidPacket(f"suback return code {code:#x} invalid")
            body.append(code)
        return _frame(PacketType.SUBACK, 0, bytes(body))

    if isinstance(packet, Unsubscribe):
        if not packet.topics:
            raise InvalidPacket("unsubscribe needs at least one filter")
        body = bytearray(struct.pack("!H", _check_packet_id(packet.packet_id)))
        for topic_filter in packet.topics:
            body += _encode_utf8(topic_filter)
        return _frame(PacketType.UNSUBSCRIBE, 0x02, bytes(body))

    if isinstance(packet, Unsuback):
        return _frame(PacketType.UNSUBACK, 0, struct.pack("!H", _check_packet_id(packet.packet_id)))

    if isinstance(packet, Pingreq):
        return _frame(PacketType.PINGREQ, 0, b"")
    if isinstance(packet, Pingresp):
        return _frame(PacketType.PINGRESP, 0, b"")
    if isinstance(packet, Disconnect):
        return _frame(PacketType.DISCONNECT, 0, b"")

    raise InvalidPacket(f"cannot encode {type(packet).__name__}")


def _frame(ptype: PacketType, flags: int, body: bytes) -> bytes:
    return bytes([(ptype << 4) | flags]) + encode_varint(len(body)) + body


_EXPECTED_FLAGS = {
    PacketType.CONNECT: 0,
    PacketType.CONNACK: 0,
    PacketType.PUBACK: 0,
    PacketType.SUBSCRIBE: 0x02,
    PacketType.SUBACK: 0,
    PacketType.UNSUBSCRIBE: 0x02,
    PacketType.UNSUBACK: 0,
    PacketType.PINGREQ: 0,
    PacketType.PINGRESP: 0,
    PacketType.DISCONNECT: 0,
}


def decode_packet(buf: bytes) -> tuple[MqttPacket, int]:
    """Decode exactly one packet from the head of ``buf``.

    Returns (packet, bytes consumed). Raises NeedMoreBytes when ``buf``
    holds only a prefix, MalformedPacket on protocol violations.
    """
    if len(buf) < 1:
        raise NeedMoreBytes("empty buffer")
    first = buf[0]
    type_value = first >> 4
    flags = first & 0x0F
    try:
        ptype = PacketType(type_value)
    except ValueError:
        raise MalformedPacket(f"reserved or unsupported packet type {type_value}") from None

    length, varint_size = decode_varint(buf, 1)
    header_size = 1 + varint_size
    if len(buf) < header_size + length:
        raise NeedMoreBytes("incomplete packet body")
    body = _Reader(bytes(buf[header_size : header_size + length]))
    consumed = header_size + length

    if ptype is PacketType.PUBLISH:
        qos = (flags >> 1) & 0x03
        if qos == 3:
            raise MalformedPacket("publish qos bits 11 are invalid")
        if qos == 2:
            raise MalformedPacket("QoS 2 publishes are not supported")
        topic = body.utf8()
        if "+" in topic or "#" in topic:
            raise MalformedPacket(f"wildcard in publish topic {topic!r}")
        if not topic:
            raise MalformedPacket("empty publish topic")
        packet_id = None
        if qos > 0:
            packet_id = body.packet_id()
        payload = body.remaining()
        return (
            Publish(
                topic=topic,
                payload=payload,
                qos=qos,
                retain=bool(flags & 0x01),
                dup=bool(flags & 0x08),
                packet_id=packet_id,
            ),
            consumed,
        )

    if flags != _EXPECTED_FLAGS[ptype]:
        raise MalformedPacket(f"invalid flags {flags:#x} for {ptype.name}")

    if ptype is PacketType.CONNECT:
        name = body.utf8()
        if name != PROTOCOL_NAME:
            raise MalformedPacket(f"unknown protocol name {name!r}")
        level = body.u8()
        connect_flags = body.u8()
        if connect_flags & 0x01:
            raise MalformedPacket("connect reserved flag set")
        keep_alive = body.u16()
        client_id = body.utf8()
        will_topic = None
        will_payload = b""
        will_qos = 0
        will_retain = False
        if connect_flags & 0x04:
            will_qos = (connect_flags >> 3) & 0x03
            if will_qos == 3:
                raise MalformedPacket("will qos bits 11 are invalid")
            will_retain = bool(connect_flags & 0x20)
            will_topic = body.utf8()
            will_payload = body.binary()
        elif connect_flags & 0x38:
            raise MalformedPacket("will qos/retain without will flag")
        username = None
        password = None
        if connect_flags & 0x80:
            username = body.utf8()
        if connect_flags & 0x40:
            if username is None:
                raise MalformedPacket("password flag without username flag")
            password = body.binary()
        body.done()
        return (
            Connect(
                client_id=client_id,
                clean_session=bool(connect_flags & 0x02),
                keep_alive=keep_alive,
                username=username,
                password=password,
                will_topic=will_topic,
                will_payload=will_payload,
                will_qos=will_qos,
                will_retain=will_retain,
                protocol_level=level,
            ),
            consumed,
        )

    if ptype is PacketType.CONNACK:
        ack_flags = body.u8()
        if ack_flags & 0xFE:
            raise MalformedPacket("connack reserved flags set")
        return_code = body.u8()
        body.done()
        return Connack(session_present=bool(ack_flags & 0x01), return_code=return_code), consumed

    if ptype is PacketType.PUBACK:
        packet_id = body.packet_id()
        body.done()
        return Puback(packet_id=packet_id), consumed

    if ptype is PacketType.SUBSCRIBE:
        packet_id = body.packet_id()
        topics: list[tuple[str, int]] = []
        while body.pos < len(body.data):
            topic_filter = body.utf8()
            qos = body.u8()
            if qos > 2:
                raise MalformedPacket(f"requested qos {qos} invalid")
            topics.append((topic_filter, qos))
        if not topics:
            raise MalformedPacket("subscribe without filters")
        return Subscribe(packet_id=packet_id, topics=tuple(topics)), consumed

    if ptype is PacketType.SUBACK:
        packet_id = body.packet_id()
        codes = tuple(body.remaining())
        if not codes:
            raise MalformedPacket("suback without return codes")
        for code in codes:
            if code not in (0, 1, 2, 0x80):
                raise MalformedPacket(f"suback return code {code:#x} invalid")
        return Suback(packet_id=packet_id, return_codes=codes), consumed

    if ptype is PacketType.UNSUBSCRIBE:
        packet_id = body.packet_id()
        names: list[str] = []
        while body.pos < len(body.data):
            names.append(body.utf8())
        if not names:
            raise MalformedPacket("unsubscribe without filters")
        return Unsubscribe(packet_id=packet_id, topics=tuple(names)), consumed

    if ptype is PacketType.UNSUBACK:
        packet_id = body.packet_id()
        body.done()
        return Unsuback(packet_id=packet_id), consumed

    body.done()
    if ptype is PacketType.PINGREQ:
        return Pingreq(), consumed
    if ptype is PacketType.PINGRESP:
        return Pingresp(), consumed
    return Disconnect(), consumed
