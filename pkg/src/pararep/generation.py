"""Beam-search decoding and one-shot conditional paraphrase generation."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .model import ParaphraseModel
from .text import BOS, EOS, MASK, PAD, SEP, UNK, Vocab, pack_pair, tokenize

FUNCTION_WORDS = frozenset({"the", "a", "an", "was", "by", "did", "not", "would", "have", "we"})


@dataclass
class BeamConfig:
    beam: int = 4
    max_len: int = 24  # counts BOS and the final token
    length_penalty: float = 0.6
    eos_id: int = EOS
    bos_id: int = BOS

    def validate(self):
        if self.beam < 1:
            raise ConfigError(f"beam width must be >= 1, got {self.beam}")
        if self.max_len < 2:
            raise ConfigError(f"max_len must be >= 2, got {self.max_len}")


@dataclass
class Hypothesis:
    tokens: tuple  # generated ids, BOS excluded, EOS included when present
    logprob: float
    score: float


def normalized_score(logprob: float, length: int, penalty: float) -> float:
    return logprob / (length ** penalty) if penalty else logprob


def beam_search_core(next_logprobs, cfg: BeamConfig) -> list[Hypothesis]:
    """Generic beam search over a scoring callback.

    ``next_logprobs(prefixes)`` receives a list of equal-length id tuples
    (each starting with BOS) and returns an array ``[len(prefixes), V]`` of
    log-probabilities for the next token.  At every step the ``beam``
    best-scoring expansions survive; those ending in EOS, or reaching
    ``max_len``, are finished and leave the beam.  Finished hypotheses are
    ranked by ``logprob / length ** length_penalty``; ties go to the
    lexicographically smaller id sequence, then the shorter one.
    """
    cfg.validate()
    live = [((cfg.bos_id,), 0.0)]
    finished: list[Hypothesis] = []
    while live:
        lp = np.asarray(next_logprobs([p for p, _ in live]), dtype=np.float64)
        v = lp.shape[1]
        scores = (np.array([s for _, s in live])[:, None] + lp).reshape(-1)
        order = _rank(scores, live, v)
        live_next = []
        for flat in order[: cfg.beam]:
            s = scores[flat]
            if not np.isfinite(s):
                continue
            parent, tok = divmod(int(flat), v)
            seq = live[parent][0] + (tok,)
            if tok == cfg.eos_id or len(seq) >= cfg.max_len:
                gen = seq[1:]
                finished.append(Hypothesis(gen, float(s), normalized_score(float(s), len(gen), cfg.length_penalty)))
            else:
                live_next.append((seq, float(s)))
        live = live_next
    finished.sort(key=lambda h: (-h.score, h.tokens, len(h.tokens)))
    return finished


def _rank(scores: np.ndarray, live: list, v: int) -> np.ndarray:
    # score descending; ties go to the lexicographically smaller extended
    # sequence, i.e. (parent sequence, token id)
    parent_keys = sorted(range(len(live)), key=lambda i: live[i][0])
    parent_pos = np.empty(len(live), dtype=np.int64)
    parent_pos[parent_keys] = np.arange(len(live))
    lex = (parent_pos[:, None] * v + np.arange(v)[None, :]).reshape(-1)
    return np.lexsort((lex, -scores))


def beam_search(next_logprobs, cfg: BeamConfig) -> tuple:
    """Best finished hypothesis' token ids (BOS excluded)."""
    return beam_search_core(next_logprobs, cfg)[0].tokens


def greedy_decode(next_logprobs, cfg: BeamConfig) -> tuple:
    seq = (cfg.bos_id,)
    while True:
        lp = np.asarray(next_logprobs([seq]))[0]
        tok = int(np.argmax(lp))
        seq = seq + (tok,)
        if tok == cfg.eos_id or len(seq) >= cfg.max_len:
            return seq[1:]


# ---------------------------------------------------------------- model adapters

_BANNED = (PAD, BOS, SEP, MASK, UNK)


def model_step_fn(model: ParaphraseModel, src_ids, z: T.Tensor | None):
    """Scoring callback for ``beam_search_core`` over a frozen model."""
    model.eval()
    src = np.asarray(src_ids, dtype=np.int64)[None, :]
    with T.no_grad():
        memory, mmask = model.memory(src, z)
    mem = memory.data

    def step(prefixes):
        n = len(prefixes)
        tgt = np.asarray(prefixes, dtype=np.int64)
        with T.no_grad():
            logits = model.decode(T.Tensor(np.repeat(mem, n, axis=0)), np.repeat(mmask, n, axis=0), tgt)
        last = logits.data[:, -1, :].astype(np.float64)
        last[:, _BANNED] = -np.inf
        last = last - last.max(axis=1, keepdims=True)
        return last - np.log(np.exp(last).sum(axis=1, keepdims=True))

    return step


def source_ids(vocab: Vocab, text: str, max_len: int) -> list[int]:
    return vocab.encode(text)[: max_len - 1] + [EOS]


@dataclass
class OneShotResult:
    text: str
    entailment: float
    beams: list = field(default_factory=list)
    leakage: float = 0.0

    def to_dict(self) -> dict:
        return {"text": self.text, "entailment": self.entailment,
                "beams": [{"text": t, "score": s} for t, s in self.beams], "leakage": self.leakage}


def leakage(generated: str, demo_cand: str, new_ref: str) -> float:
    """Fraction of generated content tokens found in the demo candidate but not the new reference."""
    gen = [t for t in tokenize(generated) if t not in FUNCTION_WORDS]
    if not gen:
        return 0.0
    demo, ref = set(tokenize(demo_cand)), set(tokenize(new_ref))
    return sum(1 for t in gen if t in demo and t not in ref) / len(gen)


def demo_encoding(model: ParaphraseModel, vocab: Vocab, demo_ref: str, demo_cand: str):
    """Edit vector and entailment probability of a demonstration pair."""
    model.eval()
    pair = pack_pair(vocab.encode(demo_ref), vocab.encode(demo_cand), model.cfg.max_len)
    ids = np.asarray(pair.ids)[None, :]
    segs = np.asarray(pair.segments)[None, :]
    with T.no_grad():
        pooled = model.pool(model.edit_encode(ids, segs))
        z = model.bottleneck(pooled)
        ent = T.sigmoid(model.entail_logit(pooled))
    return z, float(ent.data[0])


def one_shot(model: ParaphraseModel, vocab: Vocab, demo_ref: str, demo_cand: str, new_ref: str,
             cfg: BeamConfig | None = None) -> OneShotResult:
    """Encode the demonstration into z, then decode a paraphrase of ``new_ref``."""
    cfg = cfg or BeamConfig(max_len=model.cfg.max_len)
    z, ent = demo_encoding(model, vocab, demo_ref, demo_cand)
    step = model_step_fn(model, source_ids(vocab, new_ref, model.cfg.max_len), z)
    hyps = beam_search_core(step, cfg)
    beams = [(vocab.decode(h.tokens), h.score) for h in hyps[: cfg.beam]]
    text = beams[0][0]
    return OneShotResult(text, ent, beams, leakage(text, demo_cand, new_ref))
