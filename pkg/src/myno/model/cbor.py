"""CBOR codec (RFC 8949 subset).

Supported values: unsigned/negative integers, byte strings, text strings,
arrays, maps, booleans, null, and floats. Integers use the smallest
encoding; floats are always written as 8-byte doubles (halves and singles
are still accepted on decode). Indefinite lengths and tags are outside the
subset and rejected.
"""

from __future__ import annotations

import math
import struct

CborValue = None | bool | int | float | str | bytes | list | dict


class MalformedCbor(Exception):
    pass


def _head(major: int, argument: int) -> bytes:
    if argument < 24:
        return bytes([(major << 5) | argument])
    if argument < 0x100:
        return bytes([(major << 5) | 24, argument])
    if argument < 0x10000:
        return bytes([(major << 5) | 25]) + struct.pack("!H", argument)
    if argument < 0x100000000:
        return bytes([(major << 5) | 26]) + struct.pack("!I", argument)
    if argument < 0x10000000000000000:
        return bytes([(major << 5) | 27]) + struct.pack("!Q", argument)
    raise ValueError(f"argument {argument} exceeds 64 bits")


def encode_cbor(value: CborValue) -> bytes:
    out = bytearray()
    _encode(value, out)
    return bytes(out)


def _encode(value: CborValue, out: bytearray) -> None:
    if value is None:
        out.append(0xF6)
    elif value is True:
        out.append(0xF5)
    elif value is False:
        out.append(0xF4)
    elif isinstance(value, int):
        if value >= 0:
            out += _head(0, value)
        else:
            out += _head(1, -1 - value)
    elif isinstance(value, float):
        out.append(0xFB)
        out += struct.pack("!d", value)
    elif isinstance(value, bytes):
        out += _head(2, len(value))
        out += value
    elif isinstance(value, str):
        data = value.encode("utf-8")
        out += _head(3, len(data))
        out += data
    elif isinstance(value, (list, tuple)):
        out += _head(4, len(value))
        for item in value:
            _encode(item, out)
    elif isinstance(value, dict):
        out += _head(5, len(value))
        for key, item in value.items():
            _encode(key, out)
            _encode(item, out)
    else:
        raise TypeError(f"cannot encode {type(value).__name__} as CBOR")


class _Decoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedCbor("truncated CBOR input")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def argument(self, info: int) -> int:
        if info < 24:
            return info
        if info == 24:
            return self.take(1)[0]
        if info == 25:
            return struct.unpack("!H", self.take(2))[0]
        if info == 26:
            return struct.unpack("!I", self.take(4))[0]
        if info == 27:
            return struct.unpack("!Q", self.take(8))[0]
        raise MalformedCbor(f"indefinite or reserved length info {info}")

    def value(self, depth: int = 0) -> CborValue:
        if depth > 128:
            raise MalformedCbor("nesting too deep")
        initial = self.take(1)[0]
        major = initial >> 5
        info = initial & 0x1F
        if major == 0:
            return self.argument(info)
        if major == 1:
            return -1 - self.argument(info)
        if major == 2:
            return bytes(self.take(self.argument(info)))
        if major == 3:
            raw = self.take(self.argument(info))
            try:
                return raw.decode("utf-8")
            except UnicodeDecodeError as exc:
                raise MalformedCbor(f"invalid UTF-8 text string: {exc}") from None
        if major == 4:
            return [self.value(depth + 1) for _ in range(self.argument(info))]
        if major == 5:
            out = {}
            for _ in range(self.argument(info)):
                key = self.value(depth + 1)
                if isinstance(key, (list, dict)):
                    raise MalformedCbor("container map keys are not supported")
                out[key] = self.value(depth + 1)
            return out
        if major == 6:
            raise MalformedCbor("tags are outside the supported subset")
        # major 7: simple values and floats
        if info == 20:
            return False
        if info == 21:
            return True
        if info == 22:
            return None
        if info == 25:
            return _decode_half(self.take(2))
        if info == 26:
            return struct.unpack("!f", self.take(4))[0]
        if info == 27:
            return struct.unpack("!d", self.take(8))[0]
        raise MalformedCbor(f"unsupported simple value {info}")


def _decode_half(raw: bytes) -> float:
    # IEEE 754 binary16, RFC 8949 appendix D
    half = struct.unpack("!H", raw)[0]
    sign = -1.0 if half & 0x8000 else 1.0
    exponent = (half >> 10) & 0x1F
    mantissa = half & 0x3FF
    if exponent == 0:
        value = mantissa * 2.0**-24
    elif exponent != 31:
        value = (mantissa + 1024) * 2.0 ** (exponent - 25)
    else:
        value = math.inf if mantissa == 0 else math.nan
    return sign * value


def decode_cbor(data: bytes) -> CborValue:
    decoder = _Decoder(data)
    value = decoder.value()
    if decoder.pos != len(data):
        raise MalformedCbor(f"{len(data) - decoder.pos} trailing byte(s) after value")
    return value
