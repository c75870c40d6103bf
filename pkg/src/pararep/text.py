"""Word-level tokenisation, vocabularies, pair packing and MLM masking."""
from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError
from .tensor import IGNORE_ID

PAD, BOS, EOS, SEP, MASK, UNK = range(6)
SPECIALS = ("<pad>", "<bos>", "<eos>", "<sep>", "<mask>", "<unk>")
NUM_SPECIAL = len(SPECIALS)

# Alphanumeric runs, or any single character that is neither a word
# character nor whitespace.  Underscore counts as punctuation.
_TOKEN_RE = re.compile(r"[^\W_]+|[^\w\s]|_")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, and split off punctuation characters.

    >>> tokenize("The cat sat.")
    ['the', 'cat', 'sat', '.']
    >>> tokenize("don't stop")
    ['don', "'", 't', 'stop']
    """
    return _TOKEN_RE.findall(text.lower())


class Vocab:
    """Immutable token <-> id mapping with the six reserved ids first."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:NUM_SPECIAL]) != SPECIALS:
            raise FormatError("vocabulary must start with " + ",".join(SPECIALS))
        if len(set(tokens)) != len(tokens):
            raise FormatError("vocabulary contains duplicate tokens")
        self._itos = tuple(tokens)
        self._stoi = {t: i for i, t in enumerate(self._itos)}

    def __len__(self):
        return len(self._itos)

    def __contains__(self, token):
        return token in self._stoi

    def __eq__(self, other):
        return isinstance(other, Vocab) and self._itos == other._itos

    def __hash__(self):
        return hash(self._itos)

    @property
    def tokens(self) -> tuple:
        return self._itos

    def id(self, token: str) -> int:
        return self._stoi.get(token, UNK)

    def token(self, idx: int) -> str:
        return self._itos[idx]

    def encode(self, text: str) -> list[int]:
        return [self._stoi.get(t, UNK) for t in tokenize(text)]

    def decode(self, ids, skip_special: bool = True) -> str:
        return " ".join(self._itos[i] for i in ids if not (skip_special and i < NUM_SPECIAL))

    def fingerprint(self) -> str:
        import hashlib
        return hashlib.sha256("\n".join(self._itos).encode()).hexdigest()[:16]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for t in self._itos:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocab":
        with open(path, encoding="utf-8") as fh:
            return cls(line.rstrip("\n") for line in fh if line.rstrip("\n"))


def build_vocab(corpus, max_size: int) -> Vocab:
    """Keep the ``max_size - 6`` most frequent tokens, ties broken lexicographically."""
    if max_size < NUM_SPECIAL + 1:
        raise ConfigError(f"max_size must be at least {NUM_SPECIAL + 1}, got {max_size}")
    corpus = list(corpus)
    if not corpus:
        raise ConfigError("cannot build a vocabulary from an empty corpus")
    counts = Counter()
    for text in corpus:
        counts.update(tokenize(text))
    for s in SPECIALS:
        counts.pop(s, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [t for t, _ in ranked[: max_size - NUM_SPECIAL]]
    return Vocab(list(SPECIALS) + keep)


@dataclass(frozen=True)
class PackedPair:
    ids: tuple
    segments: tuple

    @property
    def length(self) -> int:
        return len(self.ids)

    def unpack(self) -> tuple[list, list]:
        """Recover the (possibly truncated) reference and candidate ids."""
        sep = self.ids.index(SEP)
        return list(self.ids[1:sep]), list(self.ids[sep + 1:-1])


def pack_pair(ref, cand, max_len: int) -> PackedPair:
    """Lay out ``BOS ref SEP cand EOS``, truncating both tails proportionally."""
    if max_len < 5:
        raise ConfigError(f"max_len must be at least 5, got {max_len}")
    ref, cand = list(ref), list(cand)
    budget = max_len - 3
    total = len(ref) + len(cand)
    if total > budget:
        keep_ref = budget * len(ref) // total
        keep_cand = budget * len(cand) // total
        ref, cand = ref[:keep_ref], cand[:keep_cand]
    ids = (BOS, *ref, SEP, *cand, EOS)
    segments = (0,) * (len(ref) + 2) + (1,) * (len(cand) + 1)
    return PackedPair(ids, segments)


@dataclass
class MaskedBatch:
    input_ids: np.ndarray
    labels: np.ndarray
    mask: np.ndarray


def apply_mlm_mask(pair: PackedPair, rng: np.random.Generator, mask_prob: float,
                   vocab_size: int, force_mask: bool = False) -> MaskedBatch:
    """Select non-special positions with probability ``mask_prob``.

    Selected positions are replaced by MASK (80%), a random ordinary id (10%)
    or left unchanged (10%); ``force_mask`` replaces every selected position
    with MASK.  Labels hold the original id at selected positions.
    """
    if not 0.0 <= mask_prob <= 1.0:
        raise ConfigError(f"mask_prob must lie in [0, 1], got {mask_prob}")
    ids = np.asarray(pair.ids, dtype=np.int64)
    eligible = ids >= NUM_SPECIAL
    draws = rng.random(ids.shape[0])
    selected = eligible & (draws < mask_prob)
    labels = np.where(selected, ids, IGNORE_ID)
    out = ids.copy()
    if selected.any():
        if force_mask:
            out[selected] = MASK
        else:
            kind = rng.random(ids.shape[0])
            rand_ids = rng.integers(NUM_SPECIAL, max(vocab_size, NUM_SPECIAL + 1), size=ids.shape[0])
            out = np.where(selected & (kind < 0.8), MASK, out)
            out = np.where(selected & (kind >= 0.8) & (kind < 0.9), rand_ids, out)
    return MaskedBatch(out, labels, selected)
