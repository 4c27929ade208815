"""Protobuf wire-format primitives for writing ONNX files.

Only the encoding side lives here; field layout knowledge is kept in
onnx_writer.  Scalar fields follow proto3 rules: varints for ints,
little-endian fixed32/64 for floats, length-delimited for everything
else.
"""

from __future__ import annotations

import struct


def uvarint(value: int) -> bytes:
    if value < 0:
        raise ValueError("uvarint cannot encode negatives")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def ivarint(value: int) -> bytes:
    """int64 varint; negatives use 64-bit two's complement."""
    return uvarint(value & 0xFFFFFFFFFFFFFFFF)


def tag(field: int, wire_type: int) -> bytes:
    return uvarint((field << 3) | wire_type)


def varint_field(field: int, value: int) -> bytes:
    return tag(field, 0) + ivarint(value)


def bytes_field(field: int, payload: bytes) -> bytes:
    return tag(field, 2) + uvarint(len(payload)) + payload


def string_field(field: int, value: str) -> bytes:
    return bytes_field(field, value.encode("utf-8"))


def float32_field(field: int, value: float) -> bytes:
    return tag(field, 5) + struct.pack("<f", value)


def packed_varints(field: int, values) -> bytes:
    return bytes_field(field, b"".join(ivarint(v) for v in values))


def packed_floats(field: int, values) -> bytes:
    return bytes_field(field, struct.pack(f"<{len(values)}f", *values))
