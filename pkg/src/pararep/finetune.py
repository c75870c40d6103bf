"""Score regression on top of the pooled edit-encoder state.

Only the edit encoder and the score head are trained; the seq2seq side is
left untouched.  Targets are standardised over the training split and the
mean/std travel with the checkpoint so predictions come back in score units.
"""
from __future__ import annotations

import logging
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .correlation import pearson
from .errors import ConfigError, NumericalError, SplitError, UndefinedCorrelationError
from .model import ParaphraseModel
from .optim import Adam
from .text import PAD, Vocab, pack_pair

log = logging.getLogger(__name__)

CURVE_COLUMNS = ("step", "train_mse", "val_mse", "val_pearson")


@dataclass
class FinetuneConfig:
    batch_size: int = 32
    lr: float = 1e-5
    steps: int = 2000
    val_fraction: float = 0.10
    seed: int = 0
    eval_every: int = 100
    freeze_layers: int = 0  # freeze embeddings and this many bottom encoder blocks
    weight_decay: float = 0.0
    clip_norm: float = 0.0

    def validate(self):
        if not 0.0 < self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.batch_size < 1 or self.steps < 1 or self.eval_every < 1:
            raise ConfigError("batch_size, steps and eval_every must be positive")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.freeze_layers < 0:
            raise ConfigError("freeze_layers must be >= 0")


# ---------------------------------------------------------------- splitting

def split_by_reference(dataset, fraction: float, seed: int):
    """Assign whole reference groups to train or validation.

    Groups are visited in a seeded order; each joins validation only if that
    moves the validation size closer to ``fraction * len(dataset)``.
    """
    dataset = list(dataset)
    if not dataset:
        raise SplitError("cannot split an empty dataset")
    if not 0.0 < fraction < 1.0:
        raise ConfigError(f"fraction must lie in (0, 1), got {fraction}")
    groups: dict = {}
    for i, item in enumerate(dataset):
        groups.setdefault(item.ref, []).append(i)
    if len(groups) < 2:
        raise SplitError("all items share one reference; no leakage-free split exists")
    keys = sorted(groups)
    order = np.random.default_rng(seed).permutation(len(keys))
    target = fraction * len(dataset)
    val_keys, size = set(), 0
    for k in order:
        key = keys[k]
        n = len(groups[key])
        if abs(size + n - target) < abs(size - target):
            val_keys.add(key)
            size += n
    if not val_keys:
        val_keys.add(keys[order[0]])
    if len(val_keys) == len(keys):
        val_keys.discard(keys[order[-1]])
    train = [x for x in dataset if x.ref not in val_keys]
    val = [x for x in dataset if x.ref in val_keys]
    return train, val


# ---------------------------------------------------------------- batching

def _encode(model: ParaphraseModel, vocab: Vocab, pairs):
    return [pack_pair(vocab.encode(ref), vocab.encode(cand), model.cfg.max_len) for ref, cand in pairs]


def _stack(packed):
    width = max(p.length for p in packed)
    ids = np.full((len(packed), width), PAD, dtype=np.int64)
    segs = np.zeros((len(packed), width), dtype=np.int64)
    for i, p in enumerate(packed):
        ids[i, :p.length] = p.ids
        segs[i, :p.length] = p.segments
    return ids, segs


def _raw_scores(model: ParaphraseModel, packed, batch_size: int = 64) -> np.ndarray:
    """Standardised score-head outputs, one forward pass per example.

    BLAS picks different kernels for different row counts, so stacking
    examples would make a score depend on its batch mates; single-row
    passes keep batched and one-at-a-time scoring bit-identical.
    ``batch_size`` is accepted for interface stability only.
    """
    out = np.empty(len(packed), dtype=np.float32)
    with T.no_grad():
        for i, p in enumerate(packed):
            ids = np.asarray(p.ids, dtype=np.int64)[None, :]
            segs = np.asarray(p.segments, dtype=np.int64)[None, :]
            out[i] = model.score_head(model.pool(model.edit_encode(ids, segs))).data[0, 0]
    return out


@dataclass
class ScoreNorm:
    mean: float = 0.0
    std: float = 1.0

    def to_header(self) -> dict:
        return {"finetune.score_mean": self.mean, "finetune.score_std": self.std}

    @classmethod
    def from_header(cls, header: dict) -> "ScoreNorm":
        return cls(float(header.get("finetune.score_mean", 0.0)), float(header.get("finetune.score_std", 1.0)))


def predict_scores(model: ParaphraseModel, vocab: Vocab, pairs, norm: ScoreNorm | None = None,
                   batch_size: int = 64) -> np.ndarray:
    """Scores for ``(ref, cand)`` pairs in the training score units."""
    norm = norm or getattr(model, "score_norm", ScoreNorm())
    model.eval()
    pairs = list(pairs)
    if not pairs:
        return np.zeros(0)
    raw = _raw_scores(model, _encode(model, vocab, pairs), batch_size).astype(np.float64)
    return raw * norm.std + norm.mean


def predict_score(model: ParaphraseModel, vocab: Vocab, ref: str, cand: str,
                  norm: ScoreNorm | None = None) -> float:
    return float(predict_scores(model, vocab, [(ref, cand)], norm)[0])


class LearnedMetric:
    """Pair-scoring callable for ``evaluate_metric``; ``prime`` scores pairs ahead of time."""

    def __init__(self, model: ParaphraseModel, vocab: Vocab, norm: ScoreNorm | None = None):
        self.model, self.vocab = model, vocab
        self.norm = norm or getattr(model, "score_norm", ScoreNorm())
        self._cache: dict = {}

    def prime(self, pairs):
        todo = list(dict.fromkeys((r, c) for r, c in pairs if (r, c) not in self._cache))
        if todo:
            for key, v in zip(todo, predict_scores(self.model, self.vocab, todo, self.norm)):
                self._cache[key] = float(v)
        return self

    def __call__(self, ref: str, cand: str) -> float:
        key = (ref, cand)
        if key not in self._cache:
            self.prime([key])
        return self._cache[key]


# ---------------------------------------------------------------- training

def trainable_parameters(model: ParaphraseModel, freeze_layers: int = 0) -> dict:
    params = dict(model.group("edit"))
    params.update(model.group("score"))
    if freeze_layers:
        frozen = ("edit_emb.",) + tuple(f"edit_blocks.{i}." for i in range(freeze_layers))
        params = {k: p for k, p in params.items() if not k.startswith(frozen)}
    return params


def check_vocab(model: ParaphraseModel, vocab: Vocab, header: dict | None = None) -> None:
    if model.cfg.vocab_size != len(vocab):
        raise ConfigError(f"vocabulary has {len(vocab)} entries but the checkpoint expects {model.cfg.vocab_size}")
    expected = (header or {}).get("vocab_fingerprint")
    if expected and expected != vocab.fingerprint():
        raise ConfigError(f"vocabulary fingerprint {vocab.fingerprint()} does not match checkpoint {expected}")


def _mse(a, b) -> float:
    return float(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2))


@dataclass
class FinetuneResult:
    curve: list
    norm: ScoreNorm
    checkpoint: str | None = None


def finetune_run(model: ParaphraseModel, vocab: Vocab, train, val, cfg: FinetuneConfig,
                 header: dict | None = None, out_dir: str | None = None,
                 curve_path: str | None = None) -> FinetuneResult:
    """MSE regression of the score head on standardised scores.

    ``train``/``val`` hold ScoredPair-like items.  A curve row is recorded at
    step 0 and every ``eval_every`` steps: MSE on (up to 256) training items
    and the validation set in standardised units, plus validation Pearson
    of the de-standardised predictions.
    """
    cfg.validate()
    check_vocab(model, vocab, header)
    train, val = list(train), list(val)
    if not train:
        raise ConfigError("fine-tuning set is empty")
    scores = np.array([p.score for p in train], dtype=np.float64)
    std = float(scores.std())
    norm = ScoreNorm(float(scores.mean()), std if std > 0 else 1.0)
    model.score_norm = norm
    targets = ((scores - norm.mean) / norm.std).astype(np.float32)
    packed = _encode(model, vocab, [(p.ref, p.cand) for p in train])
    probe = list(range(min(256, len(train))))
    val_packed = _encode(model, vocab, [(p.ref, p.cand) for p in val])
    val_targets = (np.array([p.score for p in val], dtype=np.float64) - norm.mean) / norm.std

    params = trainable_parameters(model, cfg.freeze_layers)
    opt = Adam(list(params.values()), lr=cfg.lr, weight_decay=cfg.weight_decay, clip_norm=cfg.clip_norm or None)
    order_rng = np.random.default_rng([cfg.seed, 11])
    drop_rng = np.random.default_rng([cfg.seed, 12])
    curve = []

    def evaluate(step):
        model.eval()
        tr = _mse(_raw_scores(model, [packed[i] for i in probe]), targets[probe])
        if val_packed:
            pred = _raw_scores(model, val_packed).astype(np.float64)
            vm = _mse(pred, val_targets)
            try:
                vp = pearson(pred, val_targets)
            except UndefinedCorrelationError:
                vp = float("nan")
        else:
            vm = vp = float("nan")
        curve.append((step, tr, vm, vp))
        log.info("finetune step %d train_mse %.4f val_mse %.4f val_r %.4f", step, tr, vm, vp)

    evaluate(0)
    perm, cursor = order_rng.permutation(len(packed)), 0
    for step in range(1, cfg.steps + 1):
        idx = []
        while len(idx) < cfg.batch_size:
            if cursor >= len(perm):
                perm, cursor = order_rng.permutation(len(packed)), 0
            take = min(cfg.batch_size - len(idx), len(perm) - cursor)
            idx.extend(int(i) for i in perm[cursor:cursor + take])
            cursor += take
        ids, segs = _stack([packed[i] for i in idx])
        model.train(drop_rng)
        opt.zero_grad()
        pred = model.score_head(model.pool(model.edit_encode(ids, segs)))
        loss = T.mse(pred.reshape(-1), targets[idx])
        if not math.isfinite(float(loss.data)):
            raise NumericalError(f"non-finite fine-tuning loss at step {step}")
        T.backward(loss)
        opt.step(cfg.lr)
        if step % cfg.eval_every == 0 or step == cfg.steps:
            evaluate(step)
    model.eval()

    if curve_path:
        write_curve(curve_path, curve)
    ckpt = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        ckpt = os.path.join(out_dir, "finetuned.ckpt")
        extra = dict(header or {})
        extra = {k: v for k, v in extra.items() if not k.startswith(("config.", "finetune."))}
        extra.update({f"finetune.{k}": v for k, v in asdict(cfg).items()})
        extra.update(norm.to_header())
        extra["vocab_fingerprint"] = vocab.fingerprint()
        model.save(ckpt, extra)
    return FinetuneResult(curve, norm, ckpt)


def write_curve(path, curve) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(CURVE_COLUMNS) + "\n")
        for step, tr, vm, vp in curve:
            fh.write(f"{step},{tr!r},{vm!r},{vp!r}\n")


def load_finetuned(path) -> tuple[ParaphraseModel, dict]:
    model, header = ParaphraseModel.load(path)
    model.score_norm = ScoreNorm.from_header(header)
    return model, header
