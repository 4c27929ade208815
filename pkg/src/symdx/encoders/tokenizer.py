"""Byte-level BPE tokenizer compatible with CLIP-style text encoders.

The vocabulary and merge table are loaded from the encoder bundle's
assets.  Encoding follows the reference pipeline: NFC-normalize,
collapse whitespace, lowercase, split into words (letter runs, single
digits, punctuation runs, contractions), map each word's UTF-8 bytes
into the byte-unicode alphabet, BPE-merge with an end-of-word suffix,
then wrap with start/end markers and pad to the fixed context length.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from ..errors import AssetError

END_OF_WORD = "</w>"
_WHITESPACE_RUN = re.compile(r"\s+")


@lru_cache(maxsize=1)
def byte_to_unicode() -> dict[int, str]:
    """Invertible map from byte values to printable unicode characters.

    Printable latin bytes map to themselves; the rest are displaced into
    unused codepoints starting at 256.  Identical to the convention the
    reference vocabularies are written in.
    """
    bs = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    cs = bs[:]
    n = 0
    for b in range(256):
        if b not in bs:
            bs.append(b)
            cs.append(256 + n)
            n += 1
    return dict(zip(bs, (chr(c) for c in cs)))


def _is_letter(ch: str) -> bool:
    return unicodedata.category(ch).startswith("L")


def _is_number(ch: str) -> bool:
    return unicodedata.category(ch).startswith("N")


_CONTRACTIONS = ("'s", "'t", "'re", "'ve", "'m", "'ll", "'d")


def split_words(text: str, specials: tuple[str, ...] = ()) -> list[str]:
    """Split normalized text into BPE word units.

    Mirrors the reference pattern: special-token literals, the common
    English contractions, letter runs, single digits, and runs of other
    non-space characters.  Whitespace separates words and is dropped.
    """
    words: list[str] = []
    i = 0
    n = len(text)
    while i < n:
        matched_special = None
        for lit in specials:
            if text.startswith(lit, i):
                matched_special = lit
                break
        if matched_special is not None:
            words.append(matched_special)
            i += len(matched_special)
            continue
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        if ch == "'":
            for suffix in _CONTRACTIONS:
                if text.startswith(suffix, i):
                    words.append(suffix)
                    i += len(suffix)
                    break
            else:
                j = i
                while j < n and not (
                    text[j].isspace() or _is_letter(text[j]) or _is_number(text[j])
                ):
                    j += 1
                words.append(text[i:j])
                i = j
            continue
        if _is_letter(ch):
            j = i
            while j < n and _is_letter(text[j]):
                j += 1
            words.append(text[i:j])
            i = j
            continue
        if _is_number(ch):
            words.append(ch)
            i += 1
            continue
        j = i
        while j < n and not (
            text[j].isspace() or _is_letter(text[j]) or _is_number(text[j])
        ):
            j += 1
        words.append(text[i:j])
        i = j
    return words


@dataclass(frozen=True)
class TokenSequence:
    """Fixed-length id sequence fed to the text encoder."""

    ids: tuple[int, ...]
    sot_index: int
    eot_index: int

    def __post_init__(self):
        if self.sot_index != 0:
            raise ValueError("start-of-text marker must be first")
        if not 0 < self.eot_index < len(self.ids):
            raise ValueError("end-of-text marker out of range")

    def __len__(self) -> int:
        return len(self.ids)


class BpeTokenizer:
    """Encoder over a fixed vocabulary and ranked merge table."""

    def __init__(
        self,
        vocab: dict[str, int],
        merges: list[tuple[str, str]],
        context_length: int = 77,
        sot_token: str = "<|startoftext|>",
        eot_token: str = "<|endoftext|>",
        pad_id: int = 0,
    ):
        self.vocab = dict(vocab)
        self.ranks = {pair: i for i, pair in enumerate(merges)}
        self.context_length = context_length
        self.sot_token = sot_token
        self.eot_token = eot_token
        self.pad_id = pad_id
        for special in (sot_token, eot_token):
            if special not in self.vocab:
                raise AssetError(f"vocabulary lacks marker token {special!r}")
        self.sot_id = self.vocab[sot_token]
        self.eot_id = self.vocab[eot_token]
        # tokenize() must be total: every byte unit has to be encodable
        alphabet = set(byte_to_unicode().values())
        missing = [
            u
            for ch in alphabet
            for u in (ch, ch + END_OF_WORD)
            if u not in self.vocab
        ]
        if missing:
            raise AssetError(
                f"vocabulary is missing {len(missing)} byte-level units "
                f"(e.g. {missing[0]!r}); cannot guarantee total tokenization"
            )
        self._bpe_cache: dict[str, tuple[str, ...]] = {}

    @classmethod
    def from_files(
        cls, vocab_path: str | Path, merges_path: str | Path, **kwargs
    ) -> "BpeTokenizer":
        try:
            vocab = json.loads(Path(vocab_path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise AssetError(f"cannot load vocabulary {vocab_path}: {e}") from e
        merges: list[tuple[str, str]] = []
        try:
            for line_no, line in enumerate(
                Path(merges_path).read_text(encoding="utf-8").splitlines()
            ):
                line = line.strip()
                if not line or (line_no == 0 and line.startswith("#version")):
                    continue
                parts = line.split(" ")
                if len(parts) != 2:
                    raise AssetError(
                        f"malformed merge rule at {merges_path}:{line_no + 1}"
                    )
                merges.append((parts[0], parts[1]))
        except OSError as e:
            raise AssetError(f"cannot load merges {merges_path}: {e}") from e
        return cls(vocab, merges, **kwargs)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    def _bpe(self, word: str) -> tuple[str, ...]:
        cached = self._bpe_cache.get(word)
        if cached is not None:
            return cached
        units = tuple(word[:-1]) + (word[-1] + END_OF_WORD,)
        while len(units) > 1:
            pairs = set(zip(units, units[1:]))
            best = min(pairs, key=lambda p: self.ranks.get(p, float("inf")))
            if best not in self.ranks:
                break
            merged: list[str] = []
            i = 0
            while i < len(units):
                if i < len(units) - 1 and (units[i], units[i + 1]) == best:
                    merged.append(units[i] + units[i + 1])
                    i += 2
                else:
                    merged.append(units[i])
                    i += 1
            units = tuple(merged)
        self._bpe_cache[word] = units
        return units

    def encode_text(self, text: str) -> list[int]:
        """Ids for the body of ``text``, without markers or padding."""
        text = unicodedata.normalize("NFC", text)
        text = _WHITESPACE_RUN.sub(" ", text).strip().lower()
        byte_map = byte_to_unicode()
        ids: list[int] = []
        for word in split_words(text, specials=(self.sot_token, self.eot_token)):
            if word == self.sot_token:
                ids.append(self.sot_id)
                continue
            if word == self.eot_token:
                ids.append(self.eot_id)
                continue
            mapped = "".join(byte_map[b] for b in word.encode("utf-8"))
            ids.extend(self.vocab[unit] for unit in self._bpe(mapped))
        return ids

    def tokenize(self, text: str) -> TokenSequence:
        """Full fixed-length sequence: markers, truncation, padding."""
        body = self.encode_text(text)
        limit = self.context_length - 2
        if len(body) > limit:
            body = body[:limit]
        ids = [self.sot_id, *body, self.eot_id]
        eot_index = len(ids) - 1
        ids.extend([self.pad_id] * (self.context_length - len(ids)))
        return TokenSequence(ids=tuple(ids), sot_index=0, eot_index=eot_index)
