"""Decoder/engine tests against a test-local protobuf writer.

The writer below builds ONNX model bytes independently of the package
code, so these tests cross-check the wire decoder and the kernels
rather than round-tripping one implementation through itself.
"""

import struct

import numpy as np
import pytest

from symdx.errors import BackendError
from symdx.onnxrt import NumpyOnnxRuntime, parse_model
from symdx.onnxrt.engine import LoadedGraph

# --- minimal protobuf writer -------------------------------------------------

NP_TO_ONNX_DTYPE = {
    np.dtype(np.float32): 1,
    np.dtype(np.int64): 7,
    np.dtype(np.float64): 11,
    np.dtype(np.bool_): 9,
    np.dtype(np.int32): 6,
}


def uvarint(n):
    out = bytearray()
    while True:
        b = n & 0x7F
        n >>= 7
        if n:
            out.append(b | 0x80)
        else:
            out.append(b)
            return bytes(out)


def ivarint(n):
    return uvarint(n & 0xFFFFFFFFFFFFFFFF)


def tag(field, wire):
    return uvarint((field << 3) | wire)


def blob(field, payload):
    return tag(field, 2) + uvarint(len(payload)) + payload


def string(field, s):
    return blob(field, s.encode("utf-8"))


def varint_field(field, n):
    return tag(field, 0) + ivarint(n)


def tensor(name, arr):
    arr = np.ascontiguousarray(arr)
    payload = b"".join(varint_field(1, d) for d in arr.shape)
    payload += varint_field(2, NP_TO_ONNX_DTYPE[arr.dtype])
    payload += string(8, name)
    payload += blob(9, arr.tobytes())
    return payload


def attr_int(name, value):
    return string(1, name) + varint_field(3, value) + varint_field(20, 2)


def attr_float(name, value):
    return string(1, name) + tag(2, 5) + struct.pack("<f", value) + varint_field(20, 1)


def attr_ints(name, values, packed=False):
    if packed:
        payload = b"".join(ivarint(v) for v in values)
        body = blob(8, payload)
    else:
        body = b"".join(varint_field(8, v) for v in values)
    return string(1, name) + body + varint_field(20, 7)


def attr_tensor(name, arr):
    return string(1, name) + blob(5, tensor("", arr)) + varint_field(20, 4)


def node(op_type, inputs, outputs, name="", attrs=()):
    payload = b"".join(string(1, i) for i in inputs)
    payload += b"".join(string(2, o) for o in outputs)
    payload += string(3, name)
    payload += string(4, op_type)
    payload += b"".join(blob(5, a) for a in attrs)
    return payload


def value_info(name, dtype_code, shape):
    dims = b"".join(blob(1, varint_field(1, d)) for d in shape)
    tensor_type = varint_field(1, dtype_code) + blob(2, dims)
    return string(1, name) + blob(2, blob(1, tensor_type))


def graph(nodes, inputs, outputs, initializers=(), name="g"):
    payload = b"".join(blob(1, n) for n in nodes)
    payload += string(2, name)
    payload += b"".join(blob(5, t) for t in initializers)
    payload += b"".join(blob(11, v) for v in inputs)
    payload += b"".join(blob(12, v) for v in outputs)
    return payload


def model(graph_payload, opset=17):
    payload = varint_field(1, 8)  # ir_version
    payload += string(2, "test-writer")
    payload += blob(7, graph_payload)
    payload += blob(8, varint_field(2, opset))
    return payload


def build_and_load(nodes, inputs, outputs, initializers=()):
    data = model(graph(nodes, inputs, outputs, initializers))
    return LoadedGraph(parse_model(data))


FLOAT, INT64 = 1, 7


# --- tests --------------------------------------------------------------------

def test_parse_model_metadata():
    data = model(graph([], [], []))
    parsed = parse_model(data)
    assert parsed.ir_version == 8
    assert parsed.producer_name == "test-writer"
    assert parsed.opset_version == 17


def test_single_add_node():
    g = build_and_load(
        [node("Add", ["x", "y"], ["z"])],
        [value_info("x", FLOAT, [2, 3]), value_info("y", FLOAT, [2, 3])],
        [value_info("z", FLOAT, [2, 3])],
    )
    x = np.arange(6, dtype=np.float32).reshape(2, 3)
    y = np.full((2, 3), 2.0, dtype=np.float32)
    out = g.run({"x": x, "y": y})
    np.testing.assert_array_equal(out["z"], x + y)
    assert g.input_names == ["x", "y"]
    assert g.output_names == ["z"]


def test_initializer_matmul_and_gemm():
    rng = np.random.default_rng(0)
    w = rng.standard_normal((4, 3)).astype(np.float32)
    b = rng.standard_normal(3).astype(np.float32)
    g = build_and_load(
        [
            node("MatMul", ["x", "w"], ["h"]),
            node("Gemm", ["x", "w2", "b"], ["y"], attrs=[attr_int("transB", 1)]),
        ],
        [value_info("x", FLOAT, [2, 4])],
        [value_info("h", FLOAT, [2, 3]), value_info("y", FLOAT, [2, 3])],
        initializers=[tensor("w", w), tensor("w2", w.T.copy()), tensor("b", b)],
    )
    x = rng.standard_normal((2, 4)).astype(np.float32)
    out = g.run({"x": x})
    np.testing.assert_allclose(out["h"], x @ w, rtol=1e-6)
    np.testing.assert_allclose(out["y"], x @ w + b, rtol=1e-6)


def test_layer_normalization_matches_reference():
    scale = np.array([1.5, 0.5, 2.0, 1.0], dtype=np.float32)
    bias = np.array([0.1, -0.2, 0.0, 0.3], dtype=np.float32)
    g = build_and_load(
        [
            node(
                "LayerNormalization",
                ["x", "scale", "bias"],
                ["y"],
                attrs=[attr_int("axis", -1), attr_float("epsilon", 1e-5)],
            )
        ],
        [value_info("x", FLOAT, [3, 4])],
        [value_info("y", FLOAT, [3, 4])],
        initializers=[tensor("scale", scale), tensor("bias", bias)],
    )
    x = np.random.default_rng(1).standard_normal((3, 4)).astype(np.float32)
    out = g.run({"x": x})["y"]
    mean = x.mean(-1, keepdims=True)
    var = ((x - mean) ** 2).mean(-1, keepdims=True)
    expected = (x - mean) / np.sqrt(var + 1e-5) * scale + bias
    np.testing.assert_allclose(out, expected, atol=1e-6)


def test_softmax_rows_sum_to_one():
    g = build_and_load(
        [node("Softmax", ["x"], ["y"], attrs=[attr_int("axis", -1)])],
        [value_info("x", FLOAT, [2, 5])],
        [value_info("y", FLOAT, [2, 5])],
    )
    x = np.random.default_rng(2).standard_normal((2, 5)).astype(np.float32) * 50
    y = g.run({"x": x})["y"]
    np.testing.assert_allclose(y.sum(-1), [1.0, 1.0], atol=1e-6)
    assert np.all(y >= 0)


def test_conv_against_hand_loop():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((1, 3, 4, 4)).astype(np.float32)
    w = rng.standard_normal((2, 3, 2, 2)).astype(np.float32)
    b = rng.standard_normal(2).astype(np.float32)
    g = build_and_load(
        [
            node(
                "Conv",
                ["x", "w", "b"],
                ["y"],
                attrs=[attr_ints("strides", [2, 2]), attr_ints("kernel_shape", [2, 2])],
            )
        ],
        [value_info("x", FLOAT, [1, 3, 4, 4])],
        [value_info("y", FLOAT, [1, 2, 2, 2])],
        initializers=[tensor("w", w), tensor("b", b)],
    )
    out = g.run({"x": x})["y"]
    expected = np.zeros((1, 2, 2, 2), dtype=np.float64)
    for m in range(2):
        for i in range(2):
            for j in range(2):
                acc = 0.0
                for c in range(3):
                    for di in range(2):
                        for dj in range(2):
                            acc += x[0, c, 2 * i + di, 2 * j + dj] * w[m, c, di, dj]
                expected[0, m, i, j] = acc + b[m]
    np.testing.assert_allclose(out, expected, atol=1e-5)


def test_transpose_reshape_concat_slice_gather_argmax():
    idx = np.array([2, 0], dtype=np.int64)
    new_shape = np.array([4, 2], dtype=np.int64)
    g = build_and_load(
        [
            node("Transpose", ["x"], ["t"], attrs=[attr_ints("perm", [1, 0], packed=True)]),
            node("Reshape", ["t", "shape"], ["r"]),
            node("Concat", ["r", "r"], ["c"], attrs=[attr_int("axis", 0)]),
            node("Gather", ["c", "idx"], ["g"], attrs=[attr_int("axis", 0)]),
            node("ArgMax", ["g"], ["a"], attrs=[attr_int("axis", -1), attr_int("keepdims", 0)]),
        ],
        [value_info("x", FLOAT, [2, 4])],
        [value_info("a", INT64, [2])],
        initializers=[tensor("shape", new_shape), tensor("idx", idx)],
    )
    x = np.array([[1, 2, 3, 4], [5, 6, 7, 8]], dtype=np.float32)
    out = g.run({"x": x})["a"]
    reference = np.concatenate([x.T.reshape(4, 2)] * 2)[idx].argmax(-1)
    np.testing.assert_array_equal(out, reference)


def test_negative_axis_attr_decodes_as_signed():
    g = build_and_load(
        [node("Softmax", ["x"], ["y"], attrs=[attr_int("axis", -1)])],
        [value_info("x", FLOAT, [2, 3])],
        [value_info("y", FLOAT, [2, 3])],
    )
    x = np.zeros((2, 3), dtype=np.float32)
    np.testing.assert_allclose(g.run({"x": x})["y"], np.full((2, 3), 1 / 3), atol=1e-6)


def test_constant_tensor_attribute():
    const = np.array([1.0, -2.0, 3.5], dtype=np.float32)
    g = build_and_load(
        [
            node("Constant", [], ["k"], attrs=[attr_tensor("value", const)]),
            node("Add", ["x", "k"], ["y"]),
        ],
        [value_info("x", FLOAT, [3])],
        [value_info("y", FLOAT, [3])],
    )
    out = g.run({"x": np.zeros(3, dtype=np.float32)})["y"]
    np.testing.assert_array_equal(out, const)


def test_unsupported_op_rejected_at_load():
    data = model(
        graph(
            [node("NonexistentOp", ["x"], ["y"])],
            [value_info("x", FLOAT, [1])],
            [value_info("y", FLOAT, [1])],
        )
    )
    with pytest.raises(BackendError, match="NonexistentOp"):
        LoadedGraph(parse_model(data))


def test_missing_and_unknown_feeds_rejected():
    g = build_and_load(
        [node("Identity", ["x"], ["y"])],
        [value_info("x", FLOAT, [1])],
        [value_info("y", FLOAT, [1])],
    )
    with pytest.raises(BackendError, match="missing inputs"):
        g.run({})
    with pytest.raises(BackendError, match="no inputs named"):
        g.run({"x": np.zeros(1), "bogus": np.zeros(1)})


def test_read_before_produce_rejected():
    g = build_and_load(
        [
            node("Add", ["x", "later"], ["y"]),
            node("Identity", ["x"], ["later"]),
        ],
        [value_info("x", FLOAT, [1])],
        [value_info("y", FLOAT, [1])],
    )
    with pytest.raises(BackendError, match="before it is produced"):
        g.run({"x": np.zeros(1, dtype=np.float32)})


def test_runtime_loads_from_file(tmp_path):
    data = model(
        graph(
            [node("Mul", ["x", "x"], ["y"])],
            [value_info("x", FLOAT, [2])],
            [value_info("y", FLOAT, [2])],
        )
    )
    path = tmp_path / "square.onnx"
    path.write_bytes(data)
    g = NumpyOnnxRuntime().load_graph(path)
    out = g.run({"x": np.array([3.0, -2.0], dtype=np.float32)})["y"]
    np.testing.assert_array_equal(out, [9.0, 4.0])


def test_corrupt_file_rejected(tmp_path):
    path = tmp_path / "bad.onnx"
    path.write_bytes(b"\xff\xff\xff\xff\xff\xff\xff\xff\xff\xff\xff")
    with pytest.raises(BackendError):
        NumpyOnnxRuntime().load_graph(path)
