"""Reference dual-encoder in PyTorch: a ViT image tower and a causal
text transformer projected into a shared embedding space.

The forward pass is written single-example and op-for-op in the same
order the graph builder emits, so reference outputs and exported-graph
outputs are comparable at float32 tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn


@dataclass(frozen=True)
class DualEncoderConfig:
    embed_dim: int
    image_size: int
    patch_size: int
    vision_width: int
    vision_layers: int
    vision_heads: int
    vocab_size: int
    context_length: int
    text_width: int
    text_layers: int
    text_heads: int

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size


class QuickGELU(nn.Module):
    def forward(self, x):
        return x * torch.sigmoid(1.702 * x)


class Attention(nn.Module):
    """Multi-head self-attention over a [T, C] sequence (no batch dim)."""

    def __init__(self, width: int, heads: int):
        super().__init__()
        if width % heads:
            raise ValueError("width must divide evenly into heads")
        self.heads = heads
        self.head_dim = width // heads
        self.scale = 1.0 / math.sqrt(self.head_dim)
        self.in_proj = nn.Linear(width, 3 * width)
        self.out_proj = nn.Linear(width, width)

    def forward(self, x, mask=None):
        t, c = x.shape
        qkv = self.in_proj(x)  # [T, 3C]
        q, k, v = qkv[:, :c], qkv[:, c : 2 * c], qkv[:, 2 * c :]
        q = q.reshape(t, self.heads, self.head_dim).permute(1, 0, 2)  # [H, T, hd]
        k = k.reshape(t, self.heads, self.head_dim).permute(1, 0, 2)
        v = v.reshape(t, self.heads, self.head_dim).permute(1, 0, 2)
        attn = torch.matmul(q, k.permute(0, 2, 1)) * self.scale  # [H, T, T]
        if mask is not None:
            attn = attn + mask
        attn = attn.softmax(dim=-1)
        out = torch.matmul(attn, v)  # [H, T, hd]
        out = out.permute(1, 0, 2).reshape(t, c)
        return self.out_proj(out)


class Block(nn.Module):
    def __init__(self, width: int, heads: int):
        super().__init__()
        self.ln_1 = nn.LayerNorm(width)
        self.attn = Attention(width, heads)
        self.ln_2 = nn.LayerNorm(width)
        self.mlp = nn.Sequential(
            nn.Linear(width, 4 * width), QuickGELU(), nn.Linear(4 * width, width)
        )

    def forward(self, x, mask=None):
        x = x + self.attn(self.ln_1(x), mask)
        x = x + self.mlp(self.ln_2(x))
        return x


class VisionTower(nn.Module):
    def __init__(self, cfg: DualEncoderConfig):
        super().__init__()
        self.cfg = cfg
        width = cfg.vision_width
        self.conv1 = nn.Conv2d(3, width, cfg.patch_size, cfg.patch_size, bias=False)
        self.class_embedding = nn.Parameter(torch.empty(width))
        self.positional_embedding = nn.Parameter(
            torch.empty(cfg.grid * cfg.grid + 1, width)
        )
        self.ln_pre = nn.LayerNorm(width)
        self.blocks = nn.ModuleList(
            Block(width, cfg.vision_heads) for _ in range(cfg.vision_layers)
        )
        self.ln_post = nn.LayerNorm(width)
        self.proj = nn.Parameter(torch.empty(width, cfg.embed_dim))

    def forward(self, image):
        # image: [3, S, S] -> [embed_dim]
        x = self.conv1(image.unsqueeze(0))  # [1, C, g, g]
        x = x.reshape(self.cfg.vision_width, -1).permute(1, 0)  # [g*g, C]
        x = torch.cat([self.class_embedding.unsqueeze(0), x], dim=0)
        x = x + self.positional_embedding
        x = self.ln_pre(x)
        for block in self.blocks:
            x = block(x)
        x = self.ln_post(x[0:1])  # class token, [1, C]
        return (x @ self.proj).reshape(-1)


class TextTower(nn.Module):
    def __init__(self, cfg: DualEncoderConfig):
        super().__init__()
        self.cfg = cfg
        width = cfg.text_width
        self.token_embedding = nn.Embedding(cfg.vocab_size, width)
        self.positional_embedding = nn.Parameter(
            torch.empty(cfg.context_length, width)
        )
        self.blocks = nn.ModuleList(
            Block(width, cfg.text_heads) for _ in range(cfg.text_layers)
        )
        self.ln_final = nn.LayerNorm(width)
        self.text_projection = nn.Parameter(torch.empty(width, cfg.embed_dim))
        mask = torch.full((cfg.context_length, cfg.context_length), float("-inf"))
        mask.triu_(1)  # zero on and below the diagonal
        self.register_buffer("attn_mask", mask, persistent=False)

    def forward(self, tokens):
        # tokens: [context_length] int64 -> [embed_dim]
        x = self.token_embedding(tokens)
        x = x + self.positional_embedding
        for block in self.blocks:
            x = block(x, self.attn_mask)
        x = self.ln_final(x)
        # the end marker carries the highest id, so argmax finds it
        eot = tokens.argmax(dim=0, keepdim=True)
        pooled = x.index_select(0, eot)  # [1, C]
        return (pooled @ self.text_projection).reshape(-1)


class DualEncoder(nn.Module):
    def __init__(self, cfg: DualEncoderConfig):
        super().__init__()
        self.cfg = cfg
        self.visual = VisionTower(cfg)
        self.text = TextTower(cfg)

    @torch.no_grad()
    def encode_image(self, image: torch.Tensor) -> torch.Tensor:
        return self.visual(image)

    @torch.no_grad()
    def encode_text(self, tokens: torch.Tensor) -> torch.Tensor:
        return self.text(tokens)


def init_weights(model: DualEncoder, seed: int) -> DualEncoder:
    """Deterministic initialization in the usual transformer ranges."""
    gen = torch.Generator().manual_seed(seed)

    def normal_(param, std):
        with torch.no_grad():
            param.copy_(
                torch.randn(param.shape, generator=gen, dtype=torch.float32) * std
            )

    cfg = model.cfg
    normal_(model.visual.conv1.weight, 0.02)
    normal_(model.visual.class_embedding, cfg.vision_width**-0.5)
    normal_(model.visual.positional_embedding, 0.01)
    normal_(model.visual.proj, cfg.vision_width**-0.5)
    normal_(model.text.token_embedding.weight, 0.02)
    normal_(model.text.positional_embedding, 0.01)
    normal_(model.text.text_projection, cfg.text_width**-0.5)
    for tower in (model.visual.blocks, model.text.blocks):
        for block in tower:
            normal_(block.attn.in_proj.weight, 0.02)
            normal_(block.attn.in_proj.bias, 0.001)
            normal_(block.attn.out_proj.weight, 0.02)
            normal_(block.attn.out_proj.bias, 0.001)
            normal_(block.mlp[0].weight, 0.02)
            normal_(block.mlp[0].bias, 0.001)
            normal_(block.mlp[2].weight, 0.02)
            normal_(block.mlp[2].bias, 0.001)
    model.eval()
    return model


TEST_CHECKPOINT_SEED = 20260809


def build_test_checkpoint(vocab_size: int, seed: int = TEST_CHECKPOINT_SEED):
    """Small deterministic checkpoint for offline builds and CI.

    Interface mirrors the public 32-pixel-patch ViT variant (224 input,
    77-token context) at reduced width so the exported assets stay a
    few hundred kilobytes.
    """
    cfg = DualEncoderConfig(
        embed_dim=64,
        image_size=224,
        patch_size=32,
        vision_width=64,
        vision_layers=2,
        vision_heads=4,
        vocab_size=vocab_size,
        context_length=77,
        text_width=64,
        text_layers=2,
        text_heads=4,
    )
    return init_weights(DualEncoder(cfg), seed)
