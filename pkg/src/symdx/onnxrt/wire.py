"""Protobuf wire-format reader for serialized ONNX graphs.

Decodes the subset of the ONNX schema needed to execute inference
graphs: model/graph/node structure, initializers, attributes, and
tensor payloads.  No protobuf runtime is required; the wire format
(varints, length-delimited fields, fixed 32/64-bit scalars) is decoded
directly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import BackendError

# TensorProto.DataType -> numpy dtype
TENSOR_DTYPES: dict[int, np.dtype] = {
    1: np.dtype(np.float32),
    2: np.dtype(np.uint8),
    3: np.dtype(np.int8),
    4: np.dtype(np.uint16),
    5: np.dtype(np.int16),
    6: np.dtype(np.int32),
    7: np.dtype(np.int64),
    9: np.dtype(np.bool_),
    10: np.dtype(np.float16),
    11: np.dtype(np.float64),
    12: np.dtype(np.uint32),
    13: np.dtype(np.uint64),
}

_VARINT = 0
_FIXED64 = 1
_LENGTH = 2
_FIXED32 = 5


class _Reader:
    """Cursor over one protobuf message body."""

    __slots__ = ("data", "pos", "end")

    def __init__(self, data, pos: int = 0, end: int | None = None):
        self.data = data
        self.pos = pos
        self.end = len(data) if end is None else end

    def eof(self) -> bool:
        return self.pos >= self.end

    def varint(self) -> int:
        result = 0
        shift = 0
        while True:
            if self.pos >= self.end:
                raise BackendError("truncated varint in graph file")
            byte = self.data[self.pos]
            self.pos += 1
            result |= (byte & 0x7F) << shift
            if not byte & 0x80:
                return result
            shift += 7
            if shift > 70:
                raise BackendError("oversized varint in graph file")

    def int64(self) -> int:
        raw = self.varint() & 0xFFFFFFFFFFFFFFFF
        return raw - (1 << 64) if raw >= (1 << 63) else raw

    def key(self) -> tuple[int, int]:
        tag = self.varint()
        return tag >> 3, tag & 0x7

    def bytes_field(self) -> bytes:
        size = self.varint()
        if self.pos + size > self.end:
            raise BackendError("truncated length-delimited field")
        out = bytes(self.data[self.pos : self.pos + size])
        self.pos += size
        return out

    def sub_reader(self) -> "_Reader":
        size = self.varint()
        if self.pos + size > self.end:
            raise BackendError("truncated submessage")
        sub = _Reader(self.data, self.pos, self.pos + size)
        self.pos += size
        return sub

    def fixed32(self) -> float:
        (val,) = struct.unpack_from("<f", self.data, self.pos)
        self.pos += 4
        return val

    def fixed64(self) -> float:
        (val,) = struct.unpack_from("<d", self.data, self.pos)
        self.pos += 8
        return val

    def skip(self, wire_type: int) -> None:
        if wire_type == _VARINT:
            self.varint()
        elif wire_type == _FIXED64:
            self.pos += 8
        elif wire_type == _LENGTH:
            self.pos += self.varint()
        elif wire_type == _FIXED32:
            self.pos += 4
        else:
            raise BackendError(f"unsupported wire type {wire_type}")
        if self.pos > self.end:
            raise BackendError("field overruns message boundary")


@dataclass
class OnnxNode:
    op_type: str
    name: str
    inputs: list[str]
    outputs: list[str]
    attrs: dict[str, object]


@dataclass
class OnnxGraph:
    name: str
    nodes: list[OnnxNode]
    initializers: dict[str, np.ndarray]
    input_names: list[str]
    output_names: list[str]
    input_shapes: dict[str, tuple] = field(default_factory=dict)
    input_dtypes: dict[str, np.dtype] = field(default_factory=dict)


@dataclass
class OnnxModel:
    ir_version: int
    producer_name: str
    opset_version: int
    graph: OnnxGraph


def _parse_tensor(r: _Reader) -> tuple[str, np.ndarray]:
    dims: list[int] = []
    data_type = 1
    name = ""
    raw: bytes | None = None
    float_data: list[float] = []
    int32_data: list[int] = []
    int64_data: list[int] = []
    double_data: list[float] = []
    while not r.eof():
        fieldno, wtype = r.key()
        if fieldno == 1:  # dims
            if wtype == _LENGTH:
                sub = _Reader(r.bytes_field())
                while not sub.eof():
                    dims.append(sub.int64())
            else:
                dims.append(r.int64())
        elif fieldno == 2:
            data_type = r.varint()
        elif fieldno == 4:  # float_data
            if wtype == _LENGTH:
                payload = r.bytes_field()
                float_data.extend(
                    struct.unpack(f"<{len(payload) // 4}f", payload)
                )
            else:
                float_data.append(r.fixed32())
        elif fieldno == 5:  # int32_data
            if wtype == _LENGTH:
                sub = _Reader(r.bytes_field())
                while not sub.eof():
                    int32_data.append(sub.int64())
            else:
                int32_data.append(r.int64())
        elif fieldno == 7:  # int64_data
            if wtype == _LENGTH:
                sub = _Reader(r.bytes_field())
                while not sub.eof():
                    int64_data.append(sub.int64())
            else:
                int64_data.append(r.int64())
        elif fieldno == 8:
            name = r.bytes_field().decode("utf-8")
        elif fieldno == 9:
            raw = r.bytes_field()
        elif fieldno == 10:  # double_data
            if wtype == _LENGTH:
                payload = r.bytes_field()
                double_data.extend(
                    struct.unpack(f"<{len(payload) // 8}d", payload)
                )
            else:
                double_data.append(r.fixed64())
        else:
            r.skip(wtype)

    dtype = TENSOR_DTYPES.get(data_type)
    if dtype is None:
        raise BackendError(f"tensor {name!r} has unsupported data type {data_type}")
    if raw is not None:
        arr = np.frombuffer(raw, dtype=dtype).copy()
    elif float_data:
        arr = np.asarray(float_data, dtype=dtype)
    elif int64_data:
        arr = np.asarray(int64_data, dtype=dtype)
    elif int32_data:
        arr = np.asarray(int32_data, dtype=dtype)
    elif double_data:
        arr = np.asarray(double_data, dtype=dtype)
    else:
        arr = np.zeros(0, dtype=dtype)
    try:
        arr = arr.reshape(dims) if dims else arr.reshape(())
    except ValueError as e:
        raise BackendError(f"tensor {name!r}: payload does not match dims") from e
    return name, arr


def _parse_attribute(r: _Reader) -> tuple[str, object]:
    name = ""
    value: object = None
    floats: list[float] = []
    ints: list[int] = []
    strings: list[str] = []
    while not r.eof():
        fieldno, wtype = r.key()
        if fieldno == 1:
            name = r.bytes_field().decode("utf-8")
        elif fieldno == 2:
            value = r.fixed32()
        elif fieldno == 3:
            value = r.int64()
        elif fieldno == 4:
            value = r.bytes_field().decode("utf-8", errors="replace")
        elif fieldno == 5:
            _, tensor = _parse_tensor(r.sub_reader())
            value = tensor
        elif fieldno == 7:  # floats
            if wtype == _LENGTH:
                payload = r.bytes_field()
                floats.extend(struct.unpack(f"<{len(payload) // 4}f", payload))
            else:
                floats.append(r.fixed32())
        elif fieldno == 8:  # ints
            if wtype == _LENGTH:
                sub = _Reader(r.bytes_field())
                while not sub.eof():
                    ints.append(sub.int64())
            else:
                ints.append(r.int64())
        elif fieldno == 9:
            strings.append(r.bytes_field().decode("utf-8", errors="replace"))
        elif fieldno == 20:
            r.varint()  # declared type; value fields are authoritative
        else:
            r.skip(wtype)
    if floats:
        value = floats
    elif ints:
        value = ints
    elif strings:
        value = strings
    return name, value


def _parse_node(r: _Reader) -> OnnxNode:
    node = OnnxNode(op_type="", name="", inputs=[], outputs=[], attrs={})
    while not r.eof():
        fieldno, wtype = r.key()
        if fieldno == 1:
            node.inputs.append(r.bytes_field().decode("utf-8"))
        elif fieldno == 2:
            node.outputs.append(r.bytes_field().decode("utf-8"))
        elif fieldno == 3:
            node.name = r.bytes_field().decode("utf-8")
        elif fieldno == 4:
            node.op_type = r.bytes_field().decode("utf-8")
        elif fieldno == 5:
            attr_name, attr_value = _parse_attribute(r.sub_reader())
            node.attrs[attr_name] = attr_value
        else:
            r.skip(wtype)
    return node


def _parse_value_info(r: _Reader) -> tuple[str, tuple, np.dtype | None]:
    name = ""
    shape: list = []
    dtype: np.dtype | None = None
    while not r.eof():
        fieldno, wtype = r.key()
        if fieldno == 1:
            name = r.bytes_field().decode("utf-8")
        elif fieldno == 2:  # TypeProto
            tr = r.sub_reader()
            while not tr.eof():
                tfield, twtype = tr.key()
                if tfield == 1:  # tensor_type
                    tt = tr.sub_reader()
                    while not tt.eof():
                        ttfield, ttwtype = tt.key()
                        if ttfield == 1:
                            dtype = TENSOR_DTYPES.get(tt.varint())
                        elif ttfield == 2:  # TensorShapeProto
                            sr = tt.sub_reader()
                            while not sr.eof():
                                sfield, swtype = sr.key()
                                if sfield == 1:  # Dimension
                                    dr = sr.sub_reader()
                                    dim: object = None
                                    while not dr.eof():
                                        dfield, dwtype = dr.key()
                                        if dfield == 1:
                                            dim = dr.int64()
                                        elif dfield == 2:
                                            dim = dr.bytes_field().decode("utf-8")
                                        else:
                                            dr.skip(dwtype)
                                    shape.append(dim)
                                else:
                                    sr.skip(swtype)
                        else:
                            tt.skip(ttwtype)
                else:
                    tr.skip(twtype)
        else:
            r.skip(wtype)
    return name, tuple(shape), dtype


def _parse_graph(r: _Reader) -> OnnxGraph:
    graph = OnnxGraph(
        name="", nodes=[], initializers={}, input_names=[], output_names=[]
    )
    while not r.eof():
        fieldno, wtype = r.key()
        if fieldno == 1:
            graph.nodes.append(_parse_node(r.sub_reader()))
        elif fieldno == 2:
            graph.name = r.bytes_field().decode("utf-8")
        elif fieldno == 5:
            tname, tensor = _parse_tensor(r.sub_reader())
            graph.initializers[tname] = tensor
        elif fieldno == 11:
            vname, vshape, vdtype = _parse_value_info(r.sub_reader())
            graph.input_names.append(vname)
            graph.input_shapes[vname] = vshape
            if vdtype is not None:
                graph.input_dtypes[vname] = vdtype
        elif fieldno == 12:
            vname, _, _ = _parse_value_info(r.sub_reader())
            graph.output_names.append(vname)
        else:
            r.skip(wtype)
    # initializers double as defaulted graph inputs in some producers
    graph.input_names = [
        n for n in graph.input_names if n not in graph.initializers
    ]
    return graph


def parse_model(data: bytes) -> OnnxModel:
    """Decode a serialized ONNX model."""
    r = _Reader(memoryview(data))
    ir_version = 0
    producer = ""
    opset = 0
    graph: OnnxGraph | None = None
    while not r.eof():
        fieldno, wtype = r.key()
        if fieldno == 1:
            ir_version = r.int64()
        elif fieldno == 2:
            producer = r.bytes_field().decode("utf-8")
        elif fieldno == 7:
            graph = _parse_graph(r.sub_reader())
        elif fieldno == 8:  # OperatorSetIdProto
            sub = r.sub_reader()
            domain, version = "", 0
            while not sub.eof():
                sfield, swtype = sub.key()
                if sfield == 1:
                    domain = sub.bytes_field().decode("utf-8")
                elif sfield == 2:
                    version = sub.int64()
                else:
                    sub.skip(swtype)
            if domain == "":
                opset = version
        else:
            r.skip(wtype)
    if graph is None:
        raise BackendError("model file contains no graph")
    return OnnxModel(
        ir_version=ir_version,
        producer_name=producer,
        opset_version=opset,
        graph=graph,
    )
