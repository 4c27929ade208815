"""Emit ONNX graphs for the dual encoder, op-for-op with the torch model.

Graphs are single-example: the visual graph maps a [3, S, S] float32
image to a [embed_dim] feature, the text graph maps a [context] int64
token sequence to a [embed_dim] feature.  Batch handling belongs to
the consumer, which keeps the graphs free of dynamic-shape machinery.
"""

from __future__ import annotations

import numpy as np

from . import onnx_writer as ow
from .model import DualEncoder


class _GraphBuilder:
    def __init__(self):
        self.nodes: list[bytes] = []
        self.initializers: list[bytes] = []
        self._names: set[str] = set()

    def init_tensor(self, name: str, array: np.ndarray) -> str:
        assert name not in self._names, name
        self._names.add(name)
        self.initializers.append(ow.tensor(name, array))
        return name

    def add(self, op_type: str, inputs: list[str], output: str, **attrs) -> str:
        assert output not in self._names, output
        self._names.add(output)
        self.nodes.append(
            ow.node(op_type, inputs, [output], name=f"{op_type}_{output}", **attrs)
        )
        return output


def _f32(tensor) -> np.ndarray:
    return tensor.detach().cpu().numpy().astype(np.float32)


def _linear(g: _GraphBuilder, x: str, linear, prefix: str) -> str:
    """torch Linear as MatMul against the transposed weight, then Add."""
    w = g.init_tensor(f"{prefix}_w", _f32(linear.weight).T.copy())
    b = g.init_tensor(f"{prefix}_b", _f32(linear.bias))
    h = g.add("MatMul", [x, w], f"{prefix}_mm")
    return g.add("Add", [h, b], f"{prefix}_out")


def _layer_norm(g: _GraphBuilder, x: str, ln, prefix: str) -> str:
    w = g.init_tensor(f"{prefix}_w", _f32(ln.weight))
    b = g.init_tensor(f"{prefix}_b", _f32(ln.bias))
    return g.add(
        "LayerNormalization",
        [x, w, b],
        f"{prefix}_out",
        axis=-1,
        epsilon=float(ln.eps),
    )


def _attention(g: _GraphBuilder, x: str, attn, prefix: str, mask: str | None) -> str:
    width = attn.in_proj.in_features
    heads, head_dim = attn.heads, attn.head_dim
    qkv = _linear(g, x, attn.in_proj, f"{prefix}_qkv")
    split_axes = g.init_tensor(f"{prefix}_axis1", np.array([1], dtype=np.int64))
    heads_first = g.init_tensor(
        f"{prefix}_heads_shape", np.array([-1, heads, head_dim], dtype=np.int64)
    )
    parts = []
    for i, part in enumerate(("q", "k", "v")):
        start = g.init_tensor(
            f"{prefix}_{part}_start", np.array([i * width], dtype=np.int64)
        )
        end = g.init_tensor(
            f"{prefix}_{part}_end", np.array([(i + 1) * width], dtype=np.int64)
        )
        sliced = g.add("Slice", [qkv, start, end, split_axes], f"{prefix}_{part}")
        shaped = g.add("Reshape", [sliced, heads_first], f"{prefix}_{part}_hd")
        parts.append(
            g.add("Transpose", [shaped], f"{prefix}_{part}_t", perm=[1, 0, 2])
        )
    q, k, v = parts
    k_t = g.add("Transpose", [k], f"{prefix}_k_tt", perm=[0, 2, 1])
    logits = g.add("MatMul", [q, k_t], f"{prefix}_logits")
    scale = g.init_tensor(
        f"{prefix}_scale", np.array(attn.scale, dtype=np.float32)
    )
    scaled = g.add("Mul", [logits, scale], f"{prefix}_scaled")
    if mask is not None:
        scaled = g.add("Add", [scaled, mask], f"{prefix}_masked")
    weights = g.add("Softmax", [scaled], f"{prefix}_weights", axis=-1)
    context = g.add("MatMul", [weights, v], f"{prefix}_ctx")
    merged = g.add("Transpose", [context], f"{prefix}_ctx_t", perm=[1, 0, 2])
    flat_shape = g.init_tensor(
        f"{prefix}_flat_shape", np.array([-1, width], dtype=np.int64)
    )
    flat = g.add("Reshape", [merged, flat_shape], f"{prefix}_ctx_flat")
    return _linear(g, flat, attn.out_proj, f"{prefix}_proj")


def _quick_gelu(g: _GraphBuilder, x: str, prefix: str) -> str:
    gain = g.init_tensor(f"{prefix}_gain", np.array(1.702, dtype=np.float32))
    scaled = g.add("Mul", [x, gain], f"{prefix}_scaled")
    gate = g.add("Sigmoid", [scaled], f"{prefix}_gate")
    return g.add("Mul", [x, gate], f"{prefix}_out")


def _block(g: _GraphBuilder, x: str, block, prefix: str, mask: str | None) -> str:
    normed = _layer_norm(g, x, block.ln_1, f"{prefix}_ln1")
    attended = _attention(g, normed, block.attn, f"{prefix}_attn", mask)
    x = g.add("Add", [x, attended], f"{prefix}_res1")
    normed = _layer_norm(g, x, block.ln_2, f"{prefix}_ln2")
    hidden = _linear(g, normed, block.mlp[0], f"{prefix}_fc")
    hidden = _quick_gelu(g, hidden, f"{prefix}_gelu")
    hidden = _linear(g, hidden, block.mlp[2], f"{prefix}_proj2")
    return g.add("Add", [x, hidden], f"{prefix}_res2")


def build_visual_graph(model: DualEncoder) -> bytes:
    cfg = model.cfg
    visual = model.visual
    g = _GraphBuilder()
    size = cfg.image_size
    batch_shape = g.init_tensor(
        "to_batch", np.array([1, 3, size, size], dtype=np.int64)
    )
    x = g.add("Reshape", ["image", batch_shape], "image_b")
    conv_w = g.init_tensor("patch_w", _f32(visual.conv1.weight))
    x = g.add(
        "Conv",
        [x, conv_w],
        "patches",
        strides=[cfg.patch_size, cfg.patch_size],
        kernel_shape=[cfg.patch_size, cfg.patch_size],
    )
    seq_shape = g.init_tensor(
        "seq_shape", np.array([cfg.vision_width, cfg.grid * cfg.grid], dtype=np.int64)
    )
    x = g.add("Reshape", [x, seq_shape], "patches_flat")
    x = g.add("Transpose", [x], "patch_tokens", perm=[1, 0])
    cls = g.init_tensor(
        "cls_token", _f32(visual.class_embedding).reshape(1, -1)
    )
    x = g.add("Concat", [cls, x], "tokens", axis=0)
    pos = g.init_tensor("pos_embed", _f32(visual.positional_embedding))
    x = g.add("Add", [x, pos], "tokens_pos")
    x = _layer_norm(g, x, visual.ln_pre, "ln_pre")
    for i, block in enumerate(visual.blocks):
        x = _block(g, x, block, f"v{i}", mask=None)
    row0_start = g.init_tensor("row0_start", np.array([0], dtype=np.int64))
    row0_end = g.init_tensor("row0_end", np.array([1], dtype=np.int64))
    row0_axis = g.init_tensor("row0_axis", np.array([0], dtype=np.int64))
    x = g.add("Slice", [x, row0_start, row0_end, row0_axis], "cls_out")
    x = _layer_norm(g, x, visual.ln_post, "ln_post")
    proj = g.init_tensor("proj", _f32(visual.proj))
    x = g.add("MatMul", [x, proj], "projected")
    out_shape = g.init_tensor("out_shape", np.array([cfg.embed_dim], dtype=np.int64))
    g.add("Reshape", [x, out_shape], "embedding")
    payload = ow.graph(
        "visual_tower",
        g.nodes,
        [ow.value_info("image", np.float32, [3, size, size])],
        [ow.value_info("embedding", np.float32, [cfg.embed_dim])],
        g.initializers,
    )
    return ow.model(payload)


def build_text_graph(model: DualEncoder) -> bytes:
    cfg = model.cfg
    text = model.text
    g = _GraphBuilder()
    table = g.init_tensor("token_table", _f32(text.token_embedding.weight))
    x = g.add("Gather", [table, "tokens"], "token_embeds", axis=0)
    pos = g.init_tensor("pos_embed", _f32(text.positional_embedding))
    x = g.add("Add", [x, pos], "tokens_pos")
    mask = g.init_tensor("causal_mask", _f32(text.attn_mask))
    for i, block in enumerate(text.blocks):
        x = _block(g, x, block, f"t{i}", mask=mask)
    x = _layer_norm(g, x, text.ln_final, "ln_final")
    eot = g.add("ArgMax", ["tokens"], "eot_index", axis=0, keepdims=1)
    pooled = g.add("Gather", [x, eot], "pooled", axis=0)
    proj = g.init_tensor("proj", _f32(text.text_projection))
    x = g.add("MatMul", [pooled, proj], "projected")
    out_shape = g.init_tensor("out_shape", np.array([cfg.embed_dim], dtype=np.int64))
    g.add("Reshape", [x, out_shape], "embedding")
    payload = ow.graph(
        "text_tower",
        g.nodes,
        [ow.value_info("tokens", np.int64, [cfg.context_length])],
        [ow.value_info("embedding", np.float32, [cfg.embed_dim])],
        g.initializers,
    )
    return ow.model(payload)
