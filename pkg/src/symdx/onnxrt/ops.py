"""Numpy kernels for the ONNX operators the engine supports.

Each kernel takes the node's resolved input arrays and attribute dict
and returns a list of output arrays.  Kernels follow ONNX semantics
for the attribute defaults they rely on; unsupported configurations
raise BackendError rather than silently miscomputing.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import BackendError
from .wire import TENSOR_DTYPES

_erf = np.vectorize(math.erf, otypes=[np.float64])


def _axes_arg(inputs, attrs, index=1):
    # opset >= 13 passes axes as an input; older graphs use an attribute
    if len(inputs) > index and inputs[index] is not None:
        return tuple(int(a) for a in np.asarray(inputs[index]).ravel())
    axes = attrs.get("axes")
    if axes is None:
        return None
    if isinstance(axes, (int, float)):
        return (int(axes),)
    return tuple(int(a) for a in axes)


def op_add(inputs, attrs):
    return [inputs[0] + inputs[1]]


def op_sub(inputs, attrs):
    return [inputs[0] - inputs[1]]


def op_mul(inputs, attrs):
    return [inputs[0] * inputs[1]]


def op_div(inputs, attrs):
    return [inputs[0] / inputs[1]]


def op_neg(inputs, attrs):
    return [-inputs[0]]


def op_pow(inputs, attrs):
    return [np.power(inputs[0], inputs[1])]


def op_sqrt(inputs, attrs):
    return [np.sqrt(inputs[0])]


def op_exp(inputs, attrs):
    return [np.exp(inputs[0])]


def op_log(inputs, attrs):
    return [np.log(inputs[0])]


def op_tanh(inputs, attrs):
    return [np.tanh(inputs[0])]


def op_erf(inputs, attrs):
    x = inputs[0]
    return [_erf(x).astype(x.dtype, copy=False)]


def op_relu(inputs, attrs):
    return [np.maximum(inputs[0], 0)]


def op_sigmoid(inputs, attrs):
    x = inputs[0]
    with np.errstate(over="ignore"):
        pos = 1.0 / (1.0 + np.exp(-np.clip(x, 0, None)))
        ex = np.exp(np.clip(x, None, 0))
        neg = ex / (1.0 + ex)
    return [np.where(x >= 0, pos, neg).astype(x.dtype, copy=False)]


def op_matmul(inputs, attrs):
    return [np.matmul(inputs[0], inputs[1])]


def op_gemm(inputs, attrs):
    a, b = inputs[0], inputs[1]
    if int(attrs.get("transA", 0)):
        a = a.T
    if int(attrs.get("transB", 0)):
        b = b.T
    y = float(attrs.get("alpha", 1.0)) * (a @ b)
    if len(inputs) > 2 and inputs[2] is not None:
        y = y + float(attrs.get("beta", 1.0)) * inputs[2]
    return [y.astype(inputs[0].dtype, copy=False)]


def op_conv(inputs, attrs):
    x, w = inputs[0], inputs[1]
    bias = inputs[2] if len(inputs) > 2 else None
    if x.ndim != 4 or w.ndim != 4:
        raise BackendError("Conv supports 2-D convolutions only")
    if int(attrs.get("group", 1)) != 1:
        raise BackendError("grouped Conv is not supported")
    dilations = attrs.get("dilations", [1, 1])
    if any(int(d) != 1 for d in dilations):
        raise BackendError("dilated Conv is not supported")
    strides = [int(s) for s in attrs.get("strides", [1, 1])]
    pads = [int(p) for p in attrs.get("pads", [0, 0, 0, 0])]
    if any(pads):
        x = np.pad(
            x,
            ((0, 0), (0, 0), (pads[0], pads[2]), (pads[1], pads[3])),
            mode="constant",
        )
    kh, kw = w.shape[2], w.shape[3]
    windows = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    windows = windows[:, :, :: strides[0], :: strides[1], :, :]
    y = np.einsum("nchwij,mcij->nmhw", windows, w, optimize=True)
    y = y.astype(x.dtype, copy=False)
    if bias is not None:
        y = y + bias.reshape(1, -1, 1, 1)
    return [y]


def op_layer_normalization(inputs, attrs):
    x, scale = inputs[0], inputs[1]
    bias = inputs[2] if len(inputs) > 2 else None
    axis = int(attrs.get("axis", -1))
    eps = float(attrs.get("epsilon", 1e-5))
    axes = tuple(range(axis % x.ndim, x.ndim))
    mean = x.mean(axis=axes, keepdims=True)
    centered = x - mean
    var = np.mean(centered * centered, axis=axes, keepdims=True)
    y = centered / np.sqrt(var + eps) * scale
    if bias is not None:
        y = y + bias
    return [y.astype(x.dtype, copy=False)]


def op_softmax(inputs, attrs):
    x = inputs[0]
    axis = int(attrs.get("axis", -1))
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return [(e / np.sum(e, axis=axis, keepdims=True)).astype(x.dtype, copy=False)]


def op_transpose(inputs, attrs):
    perm = attrs.get("perm")
    if perm is not None:
        perm = [int(p) for p in perm]
    return [np.transpose(inputs[0], perm)]


def op_reshape(inputs, attrs):
    x = inputs[0]
    shape = [int(s) for s in np.asarray(inputs[1]).ravel()]
    if not int(attrs.get("allowzero", 0)):
        shape = [x.shape[i] if s == 0 else s for i, s in enumerate(shape)]
    return [x.reshape(shape)]


def op_flatten(inputs, attrs):
    x = inputs[0]
    axis = int(attrs.get("axis", 1)) % (x.ndim + 1)
    lead = int(np.prod(x.shape[:axis])) if axis else 1
    return [x.reshape(lead, -1)]


def op_concat(inputs, attrs):
    return [np.concatenate([i for i in inputs if i is not None], axis=int(attrs["axis"]))]


def op_slice(inputs, attrs):
    x = inputs[0]
    if len(inputs) > 1 and inputs[1] is not None:
        starts = np.asarray(inputs[1]).ravel().tolist()
        ends = np.asarray(inputs[2]).ravel().tolist()
        axes = (
            np.asarray(inputs[3]).ravel().tolist()
            if len(inputs) > 3 and inputs[3] is not None
            else list(range(len(starts)))
        )
        steps = (
            np.asarray(inputs[4]).ravel().tolist()
            if len(inputs) > 4 and inputs[4] is not None
            else [1] * len(starts)
        )
    else:  # opset < 10 attribute form
        starts = [int(s) for s in attrs["starts"]]
        ends = [int(e) for e in attrs["ends"]]
        axes = [int(a) for a in attrs.get("axes", range(len(starts)))]
        steps = [1] * len(starts)
    slicer: list[slice] = [slice(None)] * x.ndim
    for start, end, axis, step in zip(starts, ends, axes, steps):
        slicer[int(axis)] = slice(int(start), int(end), int(step))
    return [x[tuple(slicer)]]


def op_gather(inputs, attrs):
    axis = int(attrs.get("axis", 0))
    indices = np.asarray(inputs[1], dtype=np.int64)
    return [np.take(inputs[0], indices, axis=axis)]


def op_gather_elements(inputs, attrs):
    axis = int(attrs.get("axis", 0))
    return [np.take_along_axis(inputs[0], np.asarray(inputs[1], dtype=np.int64), axis=axis)]


def op_argmax(inputs, attrs):
    x = inputs[0]
    axis = int(attrs.get("axis", 0))
    if int(attrs.get("select_last_index", 0)):
        raise BackendError("ArgMax select_last_index is not supported")
    idx = np.argmax(x, axis=axis)
    if int(attrs.get("keepdims", 1)):
        idx = np.expand_dims(idx, axis=axis)
    return [idx.astype(np.int64)]


def op_cast(inputs, attrs):
    dtype = TENSOR_DTYPES.get(int(attrs["to"]))
    if dtype is None:
        raise BackendError(f"Cast to unsupported data type {attrs['to']}")
    return [inputs[0].astype(dtype)]


def op_unsqueeze(inputs, attrs):
    axes = _axes_arg(inputs, attrs)
    x = inputs[0]
    out_ndim = x.ndim + len(axes)
    for axis in sorted(a % out_ndim for a in axes):
        x = np.expand_dims(x, axis=axis)
    return [x]


def op_squeeze(inputs, attrs):
    axes = _axes_arg(inputs, attrs)
    if axes is None:
        return [np.squeeze(inputs[0])]
    return [np.squeeze(inputs[0], axis=tuple(a % inputs[0].ndim for a in axes))]


def op_shape(inputs, attrs):
    return [np.asarray(inputs[0].shape, dtype=np.int64)]


def op_expand(inputs, attrs):
    x = inputs[0]
    target = tuple(int(s) for s in np.asarray(inputs[1]).ravel())
    shape = np.broadcast_shapes(x.shape, target)
    return [np.broadcast_to(x, shape).copy()]


def op_tile(inputs, attrs):
    reps = tuple(int(r) for r in np.asarray(inputs[1]).ravel())
    return [np.tile(inputs[0], reps)]


def op_range(inputs, attrs):
    start, limit, delta = (np.asarray(i).item() for i in inputs[:3])
    return [np.arange(start, limit, delta, dtype=np.asarray(inputs[0]).dtype)]


def op_constant(inputs, attrs):
    for key in ("value", "value_float", "value_int", "value_floats", "value_ints"):
        if key in attrs:
            val = attrs[key]
            if key == "value":
                return [np.asarray(val)]
            if key == "value_float":
                return [np.asarray(val, dtype=np.float32)]
            if key == "value_int":
                return [np.asarray(int(val), dtype=np.int64)]
            if key == "value_floats":
                return [np.asarray(val, dtype=np.float32)]
            return [np.asarray([int(v) for v in val], dtype=np.int64)]
    raise BackendError("Constant node carries no supported value attribute")


def op_constant_of_shape(inputs, attrs):
    shape = tuple(int(s) for s in np.asarray(inputs[0]).ravel())
    fill = attrs.get("value")
    if fill is None:
        return [np.zeros(shape, dtype=np.float32)]
    fill = np.asarray(fill)
    return [np.full(shape, fill.ravel()[0], dtype=fill.dtype)]


def op_equal(inputs, attrs):
    return [np.equal(inputs[0], inputs[1])]


def op_greater(inputs, attrs):
    return [np.greater(inputs[0], inputs[1])]


def op_less(inputs, attrs):
    return [np.less(inputs[0], inputs[1])]


def op_where(inputs, attrs):
    return [np.where(inputs[0], inputs[1], inputs[2])]


def op_reduce_mean(inputs, attrs):
    axes = _axes_arg(inputs, attrs)
    keepdims = bool(int(attrs.get("keepdims", 1)))
    return [np.mean(inputs[0], axis=axes, keepdims=keepdims, dtype=inputs[0].dtype)]


def op_reduce_sum(inputs, attrs):
    axes = _axes_arg(inputs, attrs)
    keepdims = bool(int(attrs.get("keepdims", 1)))
    return [np.sum(inputs[0], axis=axes, keepdims=keepdims, dtype=inputs[0].dtype)]


def op_identity(inputs, attrs):
    return [inputs[0]]


KERNELS = {
    "Add": op_add,
    "Sub": op_sub,
    "Mul": op_mul,
    "Div": op_div,
    "Neg": op_neg,
    "Pow": op_pow,
    "Sqrt": op_sqrt,
    "Exp": op_exp,
    "Log": op_log,
    "Tanh": op_tanh,
    "Erf": op_erf,
    "Relu": op_relu,
    "Sigmoid": op_sigmoid,
    "MatMul": op_matmul,
    "Gemm": op_gemm,
    "Conv": op_conv,
    "LayerNormalization": op_layer_normalization,
    "Softmax": op_softmax,
    "Transpose": op_transpose,
    "Reshape": op_reshape,
    "Flatten": op_flatten,
    "Concat": op_concat,
    "Slice": op_slice,
    "Gather": op_gather,
    "GatherElements": op_gather_elements,
    "ArgMax": op_argmax,
    "Cast": op_cast,
    "Unsqueeze": op_unsqueeze,
    "Squeeze": op_squeeze,
    "Shape": op_shape,
    "Expand": op_expand,
    "Tile": op_tile,
    "Range": op_range,
    "Constant": op_constant,
    "ConstantOfShape": op_constant_of_shape,
    "Equal": op_equal,
    "Greater": op_greater,
    "Less": op_less,
    "Where": op_where,
    "ReduceMean": op_reduce_mean,
    "ReduceSum": op_reduce_sum,
    "Identity": op_identity,
    "Dropout": op_identity,  # inference mode
}
