"""Byte-pair-encoding vocabulary construction for the text tower.

Two sources are supported: training merge rules from the built-in
corpus (used for the offline test checkpoint), or converting a
reference merge file shipped with a public checkpoint.  Either way the
emitted ``vocab.json``/``merges.txt`` pair follows the standard
byte-level layout: 256 byte symbols, their end-of-word variants,
merge products in rank order, then the two marker tokens.
"""

from __future__ import annotations

import gzip
import json
from collections import Counter
from pathlib import Path

from symdx.encoders.tokenizer import END_OF_WORD, byte_to_unicode, split_words

SOT = "<|startoftext|>"
EOT = "<|endoftext|>"

# Training corpus: radiology/ophthalmology reporting vocabulary plus the
# everyday glue words that symptom phrases are written with.  Frequencies
# are implied by repetition.
CORPUS = """
the the the the the of of of of in in in and and and with with a a a
or on at no not are is as an to for
normal normal normal lungs lungs lungs lung clear clear distinct distinct
visible visible absence absence absent presence present
pleural pleural pleural effusion effusion effusions thickening
cavities cavitation cavity consolidation consolidations consolidated
borders border boundary boundaries margins margin edges edge
opacity opacities opacification densities density dense
infiltrates infiltrate infiltration interstitial
nodules nodule nodular miliary pattern patterns
upper lower lobe lobes lobar bilateral unilateral diffuse focal
tuberculosis pneumonia bronchogram air sign signs
costophrenic angle angles sharp blunting
hilar mediastinal cardiac silhouette contour
retinopathy retinal retina proliferative nonproliferative severe mild moderate
hemorrhage hemorrhages microaneurysms exudates exudate cotton wool spots
venous beading loops neovascularization vessels vessel vascular
macular edema fundus disc optic
tumor tumour mass lesion lesions glioblastoma lymphoma multiforme
enhancement enhancing contrast homogeneous heterogeneous ring
necrosis necrotic calcification calcifications restricted diffusion
magnetic resonance imaging mri scan photo image
fibrous proliferation tractional detachment vitreous
tissue tissues structure structures symmetric asymmetric
texture smooth irregular regular shadow shadowing
apex apical basal bases costal rib ribs diaphragm
trachea tracheal deviation shift midline
fluid level levels cyst cystic solid
white gray grey dark bright intensity signal
increased decreased reduced elevated marked subtle
distinguishing features feature characteristic characteristics finding findings
""".split()


def _word_sequences(words: list[str]) -> Counter:
    """Pre-tokenize, byte-map, and suffix the corpus into BPE word units."""
    byte_map = byte_to_unicode()
    counts: Counter = Counter()
    for token in words:
        for word in split_words(token.lower()):
            mapped = "".join(byte_map[b] for b in word.encode("utf-8"))
            units = tuple(mapped[:-1]) + (mapped[-1] + END_OF_WORD,)
            counts[units] += 1
    return counts


def train_merges(words: list[str], n_merges: int) -> list[tuple[str, str]]:
    """Greedy BPE: repeatedly merge the most frequent adjacent pair.

    Ties break toward the lexicographically smallest pair, so training
    is deterministic for a fixed corpus.
    """
    sequences = _word_sequences(words)
    merges: list[tuple[str, str]] = []
    for _ in range(n_merges):
        pair_counts: Counter = Counter()
        for units, freq in sequences.items():
            for pair in zip(units, units[1:]):
                pair_counts[pair] += freq
        if not pair_counts:
            break
        best = min(pair_counts, key=lambda p: (-pair_counts[p], p))
        if pair_counts[best] < 2:
            break
        merges.append(best)
        merged_token = best[0] + best[1]
        updated: Counter = Counter()
        for units, freq in sequences.items():
            out = []
            i = 0
            while i < len(units):
                if i < len(units) - 1 and (units[i], units[i + 1]) == best:
                    out.append(merged_token)
                    i += 2
                else:
                    out.append(units[i])
                    i += 1
            updated[tuple(out)] += freq
        sequences = updated
    return merges


def build_vocab(merges: list[tuple[str, str]]) -> dict[str, int]:
    vocab: dict[str, int] = {}
    for ch in byte_to_unicode().values():
        vocab[ch] = len(vocab)
    for ch in byte_to_unicode().values():
        vocab[ch + END_OF_WORD] = len(vocab)
    for a, b in merges:
        product = a + b
        if product not in vocab:  # distinct rules can collide on the product
            vocab[product] = len(vocab)
    vocab[SOT] = len(vocab)
    vocab[EOT] = len(vocab)
    return vocab


def load_reference_merges(path: str | Path) -> list[tuple[str, str]]:
    """Convert a gzip'd or plain reference merge file (rank-ordered,
    one space-separated pair per line, optional header)."""
    path = Path(path)
    if path.suffix == ".gz":
        text = gzip.open(path, "rt", encoding="utf-8").read()
    else:
        text = path.read_text(encoding="utf-8")
    merges = []
    for line_no, line in enumerate(text.splitlines()):
        line = line.strip()
        if not line or (line_no == 0 and not len(line.split()) == 2):
            continue
        a, b = line.split()
        merges.append((a, b))
    return merges


def write_assets(
    vocab: dict[str, int], merges: list[tuple[str, str]], out_dir: str | Path
) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    vocab_path = out_dir / "vocab.json"
    merges_path = out_dir / "merges.txt"
    vocab_path.write_text(
        json.dumps(vocab, ensure_ascii=False, indent=0) + "\n", encoding="utf-8"
    )
    lines = ["#version: 0.2"] + [f"{a} {b}" for a, b in merges]
    merges_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return vocab_path, merges_path
