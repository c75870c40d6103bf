"""Classical n-gram and edit-based text metrics.

Word-level metrics take token lists (use ``text.tokenize``); ``chrf_pp``
takes raw strings.  Every function returns a ``MetricValue``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

from . import kernels
from .errors import ContractError
from .text import tokenize

TER_MAX_BLOCK = 10
TER_MAX_ITERS = 50


@dataclass
class MetricValue:
    name: str
    value: float
    components: dict = field(default_factory=dict)

    def __float__(self):
        return self.value


def ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _intern(*seqs):
    table = {}
    return [[table.setdefault(t, len(table)) for t in s] for s in seqs]


# ---------------------------------------------------------------- BLEU

def _bleu_stats(ref, cand, max_n):
    stats = []
    for n in range(1, max_n + 1):
        c = ngrams(cand, n)
        r = ngrams(ref, n)
        matched = sum(min(k, r[g]) for g, k in c.items())
        stats.append((matched, sum(c.values())))
    return stats


def _brevity(ref_len, cand_len):
    if cand_len == 0:
        return 0.0
    return 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)


def bleu(refs, cands, max_n: int = 4) -> MetricValue:
    """Corpus BLEU over parallel token lists.

    Orders for which the candidates contain no n-grams at all are left out
    of the geometric mean, so short identical corpora still score 1.
    """
    refs, cands = list(refs), list(cands)
    if len(refs) != len(cands):
        raise ContractError(f"refs and cands differ in length ({len(refs)} vs {len(cands)})")
    if not refs:
        raise ContractError("bleu needs at least one pair")
    matched = [0] * max_n
    total = [0] * max_n
    ref_len = cand_len = 0
    for r, c in zip(refs, cands):
        for i, (m, t) in enumerate(_bleu_stats(r, c, max_n)):
            matched[i] += m
            total[i] += t
        ref_len += len(r)
        cand_len += len(c)
    precisions = [m / t if t else None for m, t in zip(matched, total)]
    used = [p for p in precisions if p is not None]
    bp = _brevity(ref_len, cand_len)
    if not used or min(used) == 0.0:
        value = 0.0
    else:
        value = bp * math.exp(sum(math.log(p) for p in used) / len(used))
    return MetricValue("bleu", value, {"precisions": precisions, "bp": bp,
                                       "ref_len": ref_len, "cand_len": cand_len})


def sentence_bleu(ref, cand, max_n: int = 4) -> MetricValue:
    """Sentence BLEU with add-one smoothing on orders 2 and above."""
    stats = _bleu_stats(ref, cand, max_n)
    precisions = []
    for n, (m, t) in enumerate(stats, start=1):
        if n == 1:
            precisions.append(m / t if t else 0.0)
        else:
            precisions.append((m + 1) / (t + 1))
    bp = _brevity(len(ref), len(cand))
    if min(precisions) == 0.0:
        value = 0.0
    else:
        value = bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return MetricValue("sentence_bleu", value, {"precisions": precisions, "bp": bp})


# ---------------------------------------------------------------- TER

def ter(ref, cand) -> MetricValue:
    """Translation edit rate with greedy block shifts."""
    if len(ref) == 0:
        raise ContractError("ter needs a non-empty reference")
    r, c = _intern(ref, cand)
    shifts, dist = kernels.ter_greedy(c, r, TER_MAX_BLOCK, TER_MAX_ITERS)
    edits = shifts + dist
    return MetricValue("ter", edits / len(ref), {"edits": edits, "shifts": shifts, "ref_len": len(ref)})


# ---------------------------------------------------------------- ROUGE-L

def rouge_l(ref, cand) -> MetricValue:
    if not ref or not cand:
        return MetricValue("rouge_l", 0.0, {"lcs": 0, "p": 0.0, "r": 0.0})
    r, c = _intern(ref, cand)
    lcs = kernels.lcs_length(r, c)
    if lcs == 0:
        return MetricValue("rouge_l", 0.0, {"lcs": 0, "p": 0.0, "r": 0.0})
    p, rc = lcs / len(cand), lcs / len(ref)
    return MetricValue("rouge_l", 2 * p * rc / (p + rc), {"lcs": lcs, "p": p, "r": rc})


# ---------------------------------------------------------------- METEOR (exact match only)

def meteor_alignment(ref, cand) -> tuple[int, int]:
    """(matches, chunks) of the exact-match alignment with the most matches
    and, among those, the fewest chunks."""
    ref, cand = tuple(ref), tuple(cand)
    positions = {}
    for j, t in enumerate(ref):
        positions.setdefault(t, []).append(j)

    @lru_cache(maxsize=None)
    def best(i, used, prev):
        # returns (matches, -chunks) for cand[i:]
        if i == len(cand):
            return (0, 0)
        m, neg_c = best(i + 1, used, -1)
        top = (m, neg_c)
        for j in positions.get(cand[i], ()):
            if used >> j & 1:
                continue
            m, neg_c = best(i + 1, used | (1 << j), j)
            cand_score = (m + 1, neg_c - (0 if prev >= 0 and j == prev + 1 else 1))
            if cand_score > top:
                top = cand_score
        return top

    matches, neg_chunks = best(0, 0, -1)
    return matches, -neg_chunks


def meteor_lite(ref, cand, exact_identity: bool = True) -> MetricValue:
    """METEOR without stemming or synonyms.

    The fragmentation penalty leaves identical inputs just short of 1; with
    ``exact_identity`` a single chunk spanning both sequences is unpenalised.
    """
    matches, chunks = meteor_alignment(ref, cand)
    if matches == 0:
        return MetricValue("meteor_lite", 0.0, {"matches": 0, "chunks": 0, "penalty": 0.0})
    p, r = matches / len(cand), matches / len(ref)
    fmean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (chunks / matches) ** 3
    if exact_identity and chunks == 1 and matches == len(ref) == len(cand):
        penalty = 0.0
    return MetricValue("meteor_lite", fmean * (1 - penalty),
                       {"matches": matches, "chunks": chunks, "p": p, "r": r, "penalty": penalty})


# ---------------------------------------------------------------- chrF++

def _char_ngrams(text, n):
    s = "".join(text.split())
    return Counter(s[i:i + n] for i in range(len(s) - n + 1))


def chrf_pp(ref: str, cand: str, char_n: int = 6, word_n: int = 2, beta: float = 2.0) -> MetricValue:
    """F-beta over precision and recall averaged across character and word n-gram orders.

    Orders with no n-grams on either side are skipped; an order present on
    one side only contributes zero.
    """
    ref_words, cand_words = tokenize(ref), tokenize(cand)
    tables = [(_char_ngrams(ref, n), _char_ngrams(cand, n)) for n in range(1, char_n + 1)]
    tables += [(ngrams(ref_words, n), ngrams(cand_words, n)) for n in range(1, word_n + 1)]
    ps, rs = [], []
    for r, c in tables:
        rt, ct = sum(r.values()), sum(c.values())
        if rt == 0 and ct == 0:
            continue
        m = sum((r & c).values())
        ps.append(m / ct if ct else 0.0)
        rs.append(m / rt if rt else 0.0)
    if not ps:
        # both sides empty
        return MetricValue("chrf_pp", 1.0, {"p": 1.0, "r": 1.0})
    p, r = sum(ps) / len(ps), sum(rs) / len(rs)
    b2 = beta * beta
    value = 0.0 if p == 0 and r == 0 else (1 + b2) * p * r / (b2 * p + r)
    return MetricValue("chrf_pp", value, {"p": p, "r": r, "orders": len(ps)})


# ---------------------------------------------------------------- pair-scoring adapters

def _words(fn):
    return lambda ref, cand: fn(tokenize(ref), tokenize(cand)).value


PAIR_METRICS = {
    "bleu": lambda ref, cand: sentence_bleu(tokenize(ref), tokenize(cand)).value,
    "ter": _words(ter),
    "rouge_l": _words(rouge_l),
    "meteor_lite": _words(meteor_lite),
    "chrf_pp": lambda ref, cand: chrf_pp(ref, cand).value,
}
