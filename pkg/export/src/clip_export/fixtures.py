"""Golden fixture generation: reference inputs and outputs captured at
export time for cross-runtime parity checks.

Token ids come from the independently implemented reference tokenizer
(HuggingFace's byte-level BPE) over the exported vocabulary; image
tensors from the torchvision preprocessing pipeline; embeddings from
the source torch model.  Fixture images are synthesized
deterministically so no dataset content ships with the assets.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torchvision import transforms

from .model import DualEncoder

GOLDEN_TEXTS = [
    "Pleural effusion",
    "No visible cavities or consolidations",
    "a photo of normal lungs",
    "Venous beading and loops with scattered microaneurysms",
    "",
    # overlong input: exercises truncation with the end marker kept
    "interstitial infiltrates " * 40,
]


def make_fixture_images(out_dir: str | Path) -> list[Path]:
    """Three deterministic synthetic images covering the resize paths:
    square at target size, larger non-square, smaller than target."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []

    # radiograph-like: bright field, two dark lobes, faint rib bands
    yy, xx = np.mgrid[0:224, 0:224].astype(np.float64)
    field = 205 - 0.15 * np.hypot(xx - 112, yy - 112)
    for cx in (72, 152):
        lobe = np.hypot((xx - cx) / 0.72, (yy - 118) / 1.05)
        field -= 90 * np.exp(-((lobe / 58) ** 4))
    field += 9 * np.sin(yy / 11.0)
    gray = np.clip(field, 0, 255).astype(np.uint8)
    path = out_dir / "fixture_xray.png"
    Image.fromarray(gray, mode="L").save(path)
    paths.append(path)

    # structured color noise, larger than target and non-square
    rng = np.random.default_rng(42)
    base = rng.integers(0, 256, size=(20, 16, 3), dtype=np.uint8)
    big = np.asarray(
        Image.fromarray(base).resize((320, 400), Image.Resampling.NEAREST)
    )
    path = out_dir / "fixture_noise.png"
    Image.fromarray(big).save(path)
    paths.append(path)

    # small gradient image: forces bicubic upsampling
    yy, xx = np.mgrid[0:96, 0:128]
    small = np.stack(
        [
            (xx * 2) % 256,
            (yy * 2) % 256,
            ((xx + yy) * 1) % 256,
        ],
        axis=-1,
    ).astype(np.uint8)
    path = out_dir / "fixture_gradient.png"
    Image.fromarray(small).save(path)
    paths.append(path)

    # JPEG container coverage; quality pinned so re-export bytes are stable
    yy, xx = np.mgrid[0:260, 0:300].astype(np.float64)
    waves = 128 + 60 * np.sin(xx / 17) + 50 * np.cos(yy / 23)
    rgb = np.stack(
        [waves, np.roll(waves, 40, axis=1), waves[::-1]], axis=-1
    ).clip(0, 255).astype(np.uint8)
    path = out_dir / "fixture_waves.jpg"
    Image.fromarray(rgb).save(path, format="JPEG", quality=92)
    paths.append(path)
    return paths


def reference_preprocess(
    path: str | Path, image_size: int, mean, std
) -> np.ndarray:
    """The source pipeline the exported constants describe."""
    pipeline = transforms.Compose(
        [
            transforms.Resize(
                image_size, interpolation=transforms.InterpolationMode.BICUBIC
            ),
            transforms.CenterCrop(image_size),
            transforms.ToTensor(),
            transforms.Normalize(mean=mean, std=std),
        ]
    )
    with Image.open(path) as img:
        tensor = pipeline(img.convert("RGB"))
    return tensor.numpy().astype(np.float32)


def reference_token_ids(
    texts: list[str],
    vocab: dict[str, int],
    merges: list[tuple[str, str]],
    context_length: int = 77,
    pad_id: int = 0,
) -> list[list[int]]:
    """Ids from the reference BPE implementation, padded to fixed length."""
    from transformers import CLIPTokenizer

    tokenizer = CLIPTokenizer(vocab=dict(vocab), merges=list(merges))
    out = []
    for text in texts:
        ids = tokenizer(text, truncation=True, max_length=context_length)[
            "input_ids"
        ]
        ids = ids + [pad_id] * (context_length - len(ids))
        out.append(ids)
    return out


@torch.no_grad()
def reference_image_embeddings(
    model: DualEncoder, preprocessed: list[np.ndarray]
) -> list[list[float]]:
    return [
        model.encode_image(torch.from_numpy(arr)).numpy().astype(float).tolist()
        for arr in preprocessed
    ]


@torch.no_grad()
def reference_text_embeddings(
    model: DualEncoder, token_ids: list[list[int]]
) -> list[list[float]]:
    return [
        model.encode_text(torch.tensor(ids, dtype=torch.long))
        .numpy()
        .astype(float)
        .tolist()
        for ids in token_ids
    ]
