"""Three-part pretraining objective and its training loop.

    total = L_AR + alpha * L_MLM + beta * L_CLS

Each term can be switched off; a disabled term is never computed, so the
parameters that only it reaches receive no gradient at all.
"""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import tensor as T
from .errors import ConfigError, NumericalError
from .model import ParaphraseModel
from .optim import Adam, warmup_lr
from .tensor import IGNORE_ID, Tensor
from .text import BOS, EOS, PAD, Vocab, apply_mlm_mask, pack_pair

log = logging.getLogger(__name__)

LOSS_LOG_COLUMNS = ("step", "l_ar", "l_mlm", "l_cls", "l_total", "lr")


@dataclass
class PretrainConfig:
    alpha: float = 2.0
    beta: float = 10.0
    enable_ar: bool = True
    enable_mlm: bool = True
    enable_cls: bool = True
    mask_prob: float = 0.15
    batch_size: int = 32
    lr: float = 1e-3
    warmup: int = 100
    steps: int = 2000
    seed: int = 0
    checkpoint_every: int = 0
    condition: bool = True  # False ablates the z slot in the seq2seq model
    clip_norm: float = 0.0
    weight_decay: float = 0.0

    def validate(self):
        if not (self.enable_ar or self.enable_mlm or self.enable_cls):
            raise ConfigError("at least one loss term must be enabled")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError("alpha and beta must be non-negative")
        if self.warmup > self.steps:
            raise ConfigError(f"warmup ({self.warmup}) exceeds total steps ({self.steps})")
        if self.batch_size < 1 or self.steps < 1:
            raise ConfigError("batch_size and steps must be positive")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ConfigError("mask_prob must lie in [0, 1]")


@dataclass
class LossBreakdown:
    l_ar: float = 0.0
    l_mlm: float = 0.0
    l_cls: float = 0.0
    l_total: float = 0.0
    n_ar: int = 0
    n_mlm: int = 0
    n_cls: int = 0


@dataclass
class PairBatch:
    """Padded arrays for one pretraining batch."""
    packed: np.ndarray
    segments: np.ndarray
    mlm_input: np.ndarray
    mlm_labels: np.ndarray
    src: np.ndarray
    tgt_in: np.ndarray
    tgt_out: np.ndarray
    cls_labels: np.ndarray
    cls_weights: np.ndarray


def _pad(rows, value=PAD) -> np.ndarray:
    width = max(len(r) for r in rows)
    out = np.full((len(rows), width), value, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, :len(r)] = r
    return out


def encode_example(vocab: Vocab, ref: str, cand: str, label=None):
    return vocab.encode(ref), vocab.encode(cand), label


def collate(examples, max_len: int, vocab_size: int, rng: np.random.Generator | None,
            mask_prob: float) -> PairBatch:
    """``examples`` are ``(ref_ids, cand_ids, label_or_None)`` triples."""
    packed, segs, mlm_in, mlm_lab = [], [], [], []
    src, tin, tout, labels, weights = [], [], [], [], []
    for ref, cand, label in examples:
        pair = pack_pair(ref, cand, max_len)
        packed.append(pair.ids)
        segs.append(pair.segments)
        if rng is not None and mask_prob > 0:
            mb = apply_mlm_mask(pair, rng, mask_prob, vocab_size)
            mlm_in.append(mb.input_ids)
            mlm_lab.append(mb.labels)
        else:
            mlm_in.append(pair.ids)
            mlm_lab.append([IGNORE_ID] * pair.length)
        src.append(list(ref[: max_len - 1]) + [EOS])
        c = list(cand[: max_len - 1])
        tin.append([BOS] + c)
        tout.append(c + [EOS])
        labels.append(0.0 if label is None else float(label))
        weights.append(0.0 if label is None else 1.0)
    return PairBatch(
        packed=_pad(packed), segments=_pad(segs, 0), mlm_input=_pad(mlm_in),
        mlm_labels=_pad(mlm_lab, IGNORE_ID), src=_pad(src), tgt_in=_pad(tin),
        tgt_out=_pad(tout, IGNORE_ID), cls_labels=np.asarray(labels), cls_weights=np.asarray(weights),
    )


# ---------------------------------------------------------------- loss terms

def loss_mlm(model: ParaphraseModel, hiddens: Tensor, labels: np.ndarray) -> Tensor:
    """Cross-entropy over masked positions; 0 with zero gradient if none."""
    return T.cross_entropy_logits(model.mlm_logits(hiddens), labels, IGNORE_ID)


def loss_ar(model: ParaphraseModel, src: np.ndarray, z: Tensor | None, tgt_in: np.ndarray,
            tgt_out: np.ndarray) -> Tensor:
    """Teacher-forced next-token cross-entropy of the candidate given ref and z."""
    logits = model.seq2seq_forward(src, z, tgt_in)
    return T.cross_entropy_logits(logits, tgt_out, IGNORE_ID)


def loss_cls(model: ParaphraseModel, pooled: Tensor, labels: np.ndarray, weights: np.ndarray) -> Tensor:
    """Entailment BCE averaged over labelled examples only."""
    return T.binary_cross_entropy_logits(model.entail_logit(pooled), labels, weights)


def loss_total(parts: dict, alpha: float, beta: float) -> Tensor:
    """Weighted sum of the enabled terms (keys 'ar', 'mlm', 'cls')."""
    if alpha < 0 or beta < 0:
        raise ConfigError("alpha and beta must be non-negative")
    w = {"ar": 1.0, "mlm": alpha, "cls": beta}
    keys = [k for k in ("ar", "mlm", "cls") if k in parts]
    return T.weighted_sum([parts[k] for k in keys], [w[k] for k in keys])


def compute_losses(model: ParaphraseModel, batch: PairBatch, cfg: PretrainConfig):
    parts = {}
    counts = {}
    enc_input = batch.mlm_input if cfg.enable_mlm else batch.packed
    need_encoder = cfg.enable_mlm or cfg.enable_cls or (cfg.enable_ar and cfg.condition)
    hiddens = model.edit_encode(enc_input, batch.segments) if need_encoder else None
    pooled = model.pool(hiddens) if hiddens is not None else None
    if cfg.enable_mlm:
        parts["mlm"] = loss_mlm(model, hiddens, batch.mlm_labels)
        counts["mlm"] = int((batch.mlm_labels != IGNORE_ID).sum())
    if cfg.enable_cls:
        parts["cls"] = loss_cls(model, pooled, batch.cls_labels, batch.cls_weights)
        counts["cls"] = int(batch.cls_weights.sum())
    if cfg.enable_ar:
        z = model.bottleneck(pooled) if cfg.condition else None
        parts["ar"] = loss_ar(model, batch.src, z, batch.tgt_in, batch.tgt_out)
        counts["ar"] = int((batch.tgt_out != IGNORE_ID).sum())
    total = loss_total(parts, cfg.alpha, cfg.beta)
    br = LossBreakdown(
        l_ar=float(parts["ar"].data) if "ar" in parts else 0.0,
        l_mlm=float(parts["mlm"].data) if "mlm" in parts else 0.0,
        l_cls=float(parts["cls"].data) if "cls" in parts else 0.0,
        l_total=float(total.data),
        n_ar=counts.get("ar", 0), n_mlm=counts.get("mlm", 0), n_cls=counts.get("cls", 0),
    )
    return total, br


def trainable_parameters(model: ParaphraseModel, cfg: PretrainConfig) -> dict:
    return dict(model.named_parameters())


# ---------------------------------------------------------------- training loop

@dataclass
class PretrainResult:
    log: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)


def _write_log_row(fh, step, br: LossBreakdown, lr):
    fh.write(",".join([str(step), repr(br.l_ar), repr(br.l_mlm), repr(br.l_cls), repr(br.l_total), repr(lr)]) + "\n")


def pretrain_run(model: ParaphraseModel, corpus, vocab: Vocab, cfg: PretrainConfig,
                 out_dir: str | None = None, log_path: str | None = None, progress=None,
                 save_at=None) -> PretrainResult:
    """Train ``model`` in place on ParaExample-like objects (``ref``, ``cand``, ``label``).

    The example order, masking and dropout all derive from ``cfg.seed``.  With
    ``out_dir`` set, checkpoints are written every ``checkpoint_every`` steps
    and always after the final step, plus after any step count in ``save_at``.
    """
    cfg.validate()
    corpus = list(corpus)
    if not corpus:
        raise ConfigError("pretraining corpus is empty")
    encoded = [encode_example(vocab, ex.ref, ex.cand, ex.label) for ex in corpus]
    order_rng = np.random.default_rng([cfg.seed, 1])
    mask_rng = np.random.default_rng([cfg.seed, 2])
    drop_rng = np.random.default_rng([cfg.seed, 3])
    model.train(drop_rng)
    params = model.parameters()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay, clip_norm=cfg.clip_norm or None)
    result = PretrainResult()
    header = {f"pretrain.{k}": v for k, v in asdict(cfg).items()}
    header["vocab_fingerprint"] = vocab.fingerprint()

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    log_fh = None
    if log_path:
        log_fh = open(log_path, "w", encoding="utf-8", newline="\n")
        log_fh.write(",".join(LOSS_LOG_COLUMNS) + "\n")
    try:
        perm = order_rng.permutation(len(encoded))
        cursor = 0
        for step in range(cfg.steps):
            idx = []
            while len(idx) < cfg.batch_size:
                if cursor >= len(perm):
                    perm = order_rng.permutation(len(encoded))
                    cursor = 0
                take = min(cfg.batch_size - len(idx), len(perm) - cursor)
                idx.extend(perm[cursor:cursor + take])
                cursor += take
            batch = collate([encoded[i] for i in idx], model.cfg.max_len, model.cfg.vocab_size,
                            mask_rng if cfg.enable_mlm else None, cfg.mask_prob)
            lr = warmup_lr(step, cfg.lr, cfg.warmup)
            opt.zero_grad()
            total, br = compute_losses(model, batch, cfg)
            if not math.isfinite(br.l_total):
                raise NumericalError(f"non-finite loss at step {step}")
            T.backward(total)
            opt.step(lr)
            result.log.append((step, br, lr))
            if log_fh:
                _write_log_row(log_fh, step, br, lr)
            if progress and step % progress == 0:
                log.info("step %d total %.4f ar %.4f mlm %.4f cls %.4f", step, br.l_total, br.l_ar, br.l_mlm, br.l_cls)
            last = step + 1 == cfg.steps
            periodic = cfg.checkpoint_every and (step + 1) % cfg.checkpoint_every == 0
            if out_dir and (last or periodic or (save_at and step + 1 in save_at)):
                path = os.path.join(out_dir, f"step{step + 1:06d}.ckpt")
                model.save(path, dict(header, step=step + 1))
                result.checkpoints.append(path)
    finally:
        if log_fh:
            log_fh.close()
        model.eval()
    return result


def read_loss_log(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [{k: (int(v) if k == "step" else float(v)) for k, v in row.items()} for row in csv.DictReader(fh)]


def evaluate_ar(model: ParaphraseModel, examples, vocab: Vocab, condition: bool = True,
                batch_size: int = 64) -> float:
    """Token-weighted mean teacher-forced L_AR over ``examples`` (eval mode)."""
    model.eval()
    encoded = [encode_example(vocab, ex.ref, ex.cand, ex.label) for ex in examples]
    total, count = 0.0, 0
    with T.no_grad():
        for i in range(0, len(encoded), batch_size):
            b = collate(encoded[i:i + batch_size], model.cfg.max_len, model.cfg.vocab_size, None, 0.0)
            z = model.edit_vector(b.packed, b.segments) if condition else None
            n = int((b.tgt_out != IGNORE_ID).sum())
            total += float(loss_ar(model, b.src, z, b.tgt_in, b.tgt_out).data) * n
            count += n
    return total / max(count, 1)
