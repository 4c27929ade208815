"""Builders for the ONNX protobuf messages an encoder bundle needs.

The writer emits standard ONNX: ModelProto with one opset import,
GraphProto with nodes in topological order, initializers as raw-data
TensorProtos, and typed graph inputs/outputs.
"""

from __future__ import annotations

import numpy as np

from . import protowire as pw

ONNX_IR_VERSION = 8
DEFAULT_OPSET = 17

DTYPE_CODES = {
    np.dtype(np.float32): 1,
    np.dtype(np.uint8): 2,
    np.dtype(np.int32): 6,
    np.dtype(np.int64): 7,
    np.dtype(np.bool_): 9,
    np.dtype(np.float64): 11,
}

# AttributeProto.AttributeType
_ATTR_FLOAT, _ATTR_INT, _ATTR_STRING, _ATTR_TENSOR = 1, 2, 3, 4
_ATTR_FLOATS, _ATTR_INTS = 6, 7


def tensor(name: str, array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array)
    code = DTYPE_CODES.get(array.dtype)
    if code is None:
        raise ValueError(f"unsupported initializer dtype {array.dtype}")
    payload = b"".join(pw.varint_field(1, d) for d in array.shape)
    payload += pw.varint_field(2, code)
    payload += pw.string_field(8, name)
    payload += pw.bytes_field(9, array.tobytes())
    return payload


def attribute(name: str, value) -> bytes:
    body = pw.string_field(1, name)
    if isinstance(value, bool):
        raise TypeError("ambiguous bool attribute; pass an int")
    if isinstance(value, int):
        return body + pw.varint_field(3, value) + pw.varint_field(20, _ATTR_INT)
    if isinstance(value, float):
        return body + pw.float32_field(2, value) + pw.varint_field(20, _ATTR_FLOAT)
    if isinstance(value, str):
        return body + pw.string_field(4, value) + pw.varint_field(20, _ATTR_STRING)
    if isinstance(value, np.ndarray):
        return (
            body
            + pw.bytes_field(5, tensor("", value))
            + pw.varint_field(20, _ATTR_TENSOR)
        )
    if isinstance(value, (list, tuple)):
        if all(isinstance(v, int) for v in value):
            return body + pw.packed_varints(8, value) + pw.varint_field(20, _ATTR_INTS)
        if all(isinstance(v, (int, float)) for v in value):
            return (
                body
                + pw.packed_floats(7, [float(v) for v in value])
                + pw.varint_field(20, _ATTR_FLOATS)
            )
    raise TypeError(f"unsupported attribute value for {name!r}: {value!r}")


def node(op_type: str, inputs, outputs, name: str = "", **attrs) -> bytes:
    payload = b"".join(pw.string_field(1, i) for i in inputs)
    payload += b"".join(pw.string_field(2, o) for o in outputs)
    if name:
        payload += pw.string_field(3, name)
    payload += pw.string_field(4, op_type)
    payload += b"".join(
        pw.bytes_field(5, attribute(k, v)) for k, v in sorted(attrs.items())
    )
    return payload


def value_info(name: str, dtype: np.dtype, shape) -> bytes:
    dims = b"".join(pw.bytes_field(1, pw.varint_field(1, d)) for d in shape)
    tensor_type = pw.varint_field(1, DTYPE_CODES[np.dtype(dtype)]) + pw.bytes_field(
        2, dims
    )
    return pw.string_field(1, name) + pw.bytes_field(2, pw.bytes_field(1, tensor_type))


def graph(name: str, nodes, inputs, outputs, initializers) -> bytes:
    payload = b"".join(pw.bytes_field(1, n) for n in nodes)
    payload += pw.string_field(2, name)
    payload += b"".join(pw.bytes_field(5, t) for t in initializers)
    payload += b"".join(pw.bytes_field(11, v) for v in inputs)
    payload += b"".join(pw.bytes_field(12, v) for v in outputs)
    return payload


def model(
    graph_payload: bytes,
    producer: str = "clip-bundle-export",
    opset: int = DEFAULT_OPSET,
) -> bytes:
    payload = pw.varint_field(1, ONNX_IR_VERSION)
    payload += pw.string_field(2, producer)
    payload += pw.bytes_field(7, graph_payload)
    payload += pw.bytes_field(8, pw.varint_field(2, opset))
    return payload
