"""Load a public ViT-style checkpoint (OpenAI weight layout) into the
reference dual encoder.

Dimensions are inferred from tensor shapes, so any of the ViT variants
works from a local file; the convolutional ResNet variants use a
different image tower and are not supported here.
"""

from __future__ import annotations

from pathlib import Path

import torch

from .model import DualEncoder, DualEncoderConfig


class CheckpointError(RuntimeError):
    pass


def read_state_dict(path: str | Path) -> dict[str, torch.Tensor]:
    path = Path(path)
    try:
        scripted = torch.jit.load(str(path), map_location="cpu")
        return scripted.state_dict()
    except Exception:
        pass
    loaded = torch.load(str(path), map_location="cpu", weights_only=True)
    if isinstance(loaded, dict) and "state_dict" in loaded:
        loaded = loaded["state_dict"]
    if not isinstance(loaded, dict):
        raise CheckpointError(f"{path} does not contain a state dict")
    return loaded


def infer_config(sd: dict[str, torch.Tensor]) -> DualEncoderConfig:
    if "visual.conv1.weight" not in sd:
        raise CheckpointError(
            "checkpoint lacks a ViT image tower (convolutional variants "
            "are not supported by this exporter)"
        )
    conv = sd["visual.conv1.weight"]
    vision_width, _, patch, _ = conv.shape
    vision_layers = len(
        {k.split(".")[3] for k in sd if k.startswith("visual.transformer.resblocks.")}
    )
    grid_plus_1 = sd["visual.positional_embedding"].shape[0]
    grid = int(round((grid_plus_1 - 1) ** 0.5))
    embed_dim = sd["visual.proj"].shape[1]
    vocab_size, text_width = sd["token_embedding.weight"].shape
    context_length = sd["positional_embedding"].shape[0]
    text_layers = len(
        {k.split(".")[2] for k in sd if k.startswith("transformer.resblocks.")}
    )
    return DualEncoderConfig(
        embed_dim=embed_dim,
        image_size=grid * patch,
        patch_size=patch,
        vision_width=vision_width,
        vision_layers=vision_layers,
        vision_heads=max(1, vision_width // 64),
        vocab_size=vocab_size,
        context_length=context_length,
        text_width=text_width,
        text_layers=text_layers,
        text_heads=max(1, text_width // 64),
    )


def _copy_block(block, sd, prefix):
    block.ln_1.weight.data.copy_(sd[f"{prefix}.ln_1.weight"])
    block.ln_1.bias.data.copy_(sd[f"{prefix}.ln_1.bias"])
    block.attn.in_proj.weight.data.copy_(sd[f"{prefix}.attn.in_proj_weight"])
    block.attn.in_proj.bias.data.copy_(sd[f"{prefix}.attn.in_proj_bias"])
    block.attn.out_proj.weight.data.copy_(sd[f"{prefix}.attn.out_proj.weight"])
    block.attn.out_proj.bias.data.copy_(sd[f"{prefix}.attn.out_proj.bias"])
    block.ln_2.weight.data.copy_(sd[f"{prefix}.ln_2.weight"])
    block.ln_2.bias.data.copy_(sd[f"{prefix}.ln_2.bias"])
    block.mlp[0].weight.data.copy_(sd[f"{prefix}.mlp.c_fc.weight"])
    block.mlp[0].bias.data.copy_(sd[f"{prefix}.mlp.c_fc.bias"])
    block.mlp[2].weight.data.copy_(sd[f"{prefix}.mlp.c_proj.weight"])
    block.mlp[2].bias.data.copy_(sd[f"{prefix}.mlp.c_proj.bias"])


def load_openai_checkpoint(path: str | Path) -> DualEncoder:
    sd = {k: v.float() for k, v in read_state_dict(path).items()}
    cfg = infer_config(sd)
    model = DualEncoder(cfg)
    visual = model.visual
    visual.conv1.weight.data.copy_(sd["visual.conv1.weight"])
    visual.class_embedding.data.copy_(sd["visual.class_embedding"])
    visual.positional_embedding.data.copy_(sd["visual.positional_embedding"])
    visual.ln_pre.weight.data.copy_(sd["visual.ln_pre.weight"])
    visual.ln_pre.bias.data.copy_(sd["visual.ln_pre.bias"])
    for i, block in enumerate(visual.blocks):
        _copy_block(block, sd, f"visual.transformer.resblocks.{i}")
    visual.ln_post.weight.data.copy_(sd["visual.ln_post.weight"])
    visual.ln_post.bias.data.copy_(sd["visual.ln_post.bias"])
    visual.proj.data.copy_(sd["visual.proj"])

    text = model.text
    text.token_embedding.weight.data.copy_(sd["token_embedding.weight"])
    text.positional_embedding.data.copy_(sd["positional_embedding"])
    for i, block in enumerate(text.blocks):
        _copy_block(block, sd, f"transformer.resblocks.{i}")
    text.ln_final.weight.data.copy_(sd["ln_final.weight"])
    text.ln_final.bias.data.copy_(sd["ln_final.bias"])
    text.text_projection.data.copy_(sd["text_projection"])
    model.eval()
    return model
