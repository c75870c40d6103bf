"""Edit encoder, bottleneck and conditioned sequence-to-sequence network.

All forward methods take batched integer arrays ``[B, T]`` and return
Tensors with a leading batch axis.  Blocks are pre-norm; padding keys are
masked out of every attention.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields

import numpy as np

from . import tensor as T
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ConfigError, ContractError
from .tensor import Tensor
from .text import BOS, PAD

NEG_INF = -1e9


@dataclass
class ModelConfig:
    vocab_size: int
    hidden: int = 64
    heads: int = 4
    ffn_dim: int = 128
    layers_enc: int = 2
    layers_s2s_enc: int = 2
    layers_s2s_dec: int = 2
    bottleneck: int = 0  # 0 -> hidden // 8
    max_len: int = 64
    dropout: float = 0.0
    output_dim: int = 1
    activation: str = "gelu"
    bottleneck_activation: str = "tanh"
    positional: str = "learned"
    tie_embeddings: bool = True
    init_std: float = 0.02
    seed: int = 0

    def __post_init__(self):
        if self.bottleneck == 0:
            self.bottleneck = max(1, self.hidden // 8)
        self.validate()

    def validate(self):
        dims = ("vocab_size", "hidden", "heads", "ffn_dim", "layers_enc", "layers_s2s_enc",
                "layers_s2s_dec", "bottleneck", "max_len", "output_dim")
        for name in dims:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.hidden % self.heads:
            raise ConfigError(f"hidden ({self.hidden}) must be divisible by heads ({self.heads})")
        if self.bottleneck > self.hidden:
            raise ConfigError(f"bottleneck ({self.bottleneck}) must not exceed hidden ({self.hidden})")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must lie in [0, 1)")
        if self.activation not in T.ACTIVATIONS or self.bottleneck_activation not in T.ACTIVATIONS:
            raise ConfigError("unknown activation")
        if self.positional not in ("learned", "sinusoidal"):
            raise ConfigError("positional must be 'learned' or 'sinusoidal'")

    def to_header(self) -> dict:
        return {f"config.{k}": v for k, v in asdict(self).items()}

    @classmethod
    def from_header(cls, header: dict) -> "ModelConfig":
        kwargs = {}
        for f in fields(cls):
            raw = header.get(f"config.{f.name}")
            if raw is None:
                continue
            if f.type in ("int", int):
                kwargs[f.name] = int(raw)
            elif f.type in ("float", float):
                kwargs[f.name] = float(raw)
            elif f.type in ("bool", bool):
                kwargs[f.name] = str(raw) == "True"
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)

    @classmethod
    def tiny(cls, vocab_size: int = 50, **kw) -> "ModelConfig":
        base = dict(hidden=32, heads=2, ffn_dim=64, layers_enc=2, layers_s2s_enc=2,
                    layers_s2s_dec=2, bottleneck=8, max_len=32)
        base.update(kw)
        return cls(vocab_size=vocab_size, **base)


class Module:
    """Parameter container; attributes that are Tensors, Modules or lists of
    Modules are discovered in definition order."""

    training = False

    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            if isinstance(val, Tensor) and val.requires_grad:
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(prefix + key + ".")
            elif isinstance(val, list) and val and isinstance(val[0], Module):
                for i, m in enumerate(val):
                    yield from m.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]


def _param(rng, shape, std):
    return Tensor((rng.standard_normal(shape) * std).astype(np.float32), requires_grad=True)


def _zeros(shape):
    return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)


def _ones(shape):
    return Tensor(np.ones(shape, dtype=np.float32), requires_grad=True)


class LayerNorm(Module):
    def __init__(self, h):
        self.gain = _ones((h,))
        self.bias = _zeros((h,))

    def __call__(self, x):
        return T.layer_norm(x, self.gain, self.bias, 1e-5)


class Linear(Module):
    def __init__(self, rng, n_in, n_out, std):
        self.w = _param(rng, (n_in, n_out), std)
        self.b = _zeros((n_out,))

    def __call__(self, x):
        return T.linear(x, self.w, self.b)


class Attention(Module):
    """Multi-head attention; ``self_attn`` fuses the Q/K/V projection."""

    def __init__(self, rng, h, heads, std, self_attn=True):
        self.heads = heads
        self.self_attn = self_attn
        if self_attn:
            self.qkv = Linear(rng, h, 3 * h, std)
        else:
            self.q = Linear(rng, h, h, std)
            self.kv = Linear(rng, h, 2 * h, std)
        self.out = Linear(rng, h, h, std)

    def _split(self, x, n):
        b, t, _ = x.shape
        d = x.shape[-1] // (n * self.heads)
        # [B, T, n*H] -> n tensors [B, heads, T, d]
        x = x.reshape(b, t, n, self.heads, d).transpose(2, 0, 3, 1, 4)
        return [x[i] for i in range(n)] if n > 1 else [x[0]]

    def __call__(self, x, memory=None, mask=None, record=None):
        b, tq, h = x.shape
        if self.self_attn:
            q, k, v = self._split(self.qkv(x), 3)
        else:
            (q,) = self._split(self.q(x), 1)
            k, v = self._split(self.kv(memory), 2)
        d = h // self.heads
        scores = T.mul(T.matmul(q, k.transpose(0, 1, 3, 2)), 1.0 / np.sqrt(d))
        w = T.softmax(scores, axis=-1, additive_mask=mask)
        if record is not None:
            record.append(w.data)
        ctx = T.matmul(w, v).transpose(0, 2, 1, 3).reshape(b, tq, h)
        return self.out(ctx)


class Block(Module):
    def __init__(self, rng, cfg: ModelConfig, cross=False):
        h, std = cfg.hidden, cfg.init_std
        self.ln1 = LayerNorm(h)
        self.attn = Attention(rng, h, cfg.heads, std, self_attn=True)
        if cross:
            self.ln_cross = LayerNorm(h)
            self.cross = Attention(rng, h, cfg.heads, std, self_attn=False)
        self.ln2 = LayerNorm(h)
        self.ff1 = Linear(rng, h, cfg.ffn_dim, std)
        self.ff2 = Linear(rng, cfg.ffn_dim, h, std)
        self._act = T.ACTIVATIONS[cfg.activation]
        self._p = cfg.dropout

    def __call__(self, x, mask, memory=None, memory_mask=None, rng=None, record=None):
        drop = lambda t: T.dropout(t, self._p, rng, self.training)
        x = x + drop(self.attn(self.ln1(x), mask=mask, record=record))
        if memory is not None:
            x = x + drop(self.cross(self.ln_cross(x), memory=memory, mask=memory_mask))
        x = x + drop(self.ff2(self._act(self.ff1(self.ln2(x)))))
        return x


def sinusoidal_table(n, h):
    pos = np.arange(n)[:, None]
    i = np.arange(h)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / h)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle)).astype(np.float32)


class Embedder(Module):
    def __init__(self, rng, cfg: ModelConfig, segments: bool):
        self.tok = _param(rng, (cfg.vocab_size, cfg.hidden), cfg.init_std)
        if cfg.positional == "learned":
            self.pos = _param(rng, (cfg.max_len, cfg.hidden), cfg.init_std)
        else:
            self._table = Tensor(sinusoidal_table(cfg.max_len, cfg.hidden))
        if segments:
            self.seg = _param(rng, (2, cfg.hidden), cfg.init_std)

    def __call__(self, ids, segments=None):
        t = ids.shape[1]
        pos = self.pos if hasattr(self, "pos") else self._table
        x = T.embedding(self.tok, ids) + pos[:t]
        if segments is not None:
            x = x + T.embedding(self.seg, segments)
        return x


def key_mask(ids: np.ndarray) -> np.ndarray:
    """Additive mask [B, 1, 1, T] hiding PAD keys."""
    return np.where(ids == PAD, NEG_INF, 0.0).astype(np.float32)[:, None, None, :]


def causal_mask(ids: np.ndarray) -> np.ndarray:
    t = ids.shape[1]
    tri = np.triu(np.full((t, t), NEG_INF, dtype=np.float32), k=1)
    return tri[None, None] + key_mask(ids)


class ParaphraseModel(Module):
    """Edit encoder + bottleneck + conditioned seq2seq with MLM, entailment and score heads."""

    def __init__(self, cfg: ModelConfig):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        h, std = cfg.hidden, cfg.init_std
        # edit encoder
        self.edit_emb = Embedder(rng, cfg, segments=True)
        self.edit_blocks = [Block(rng, cfg) for _ in range(cfg.layers_enc)]
        self.edit_ln = LayerNorm(h)
        # bottleneck FFN: H -> M -> M, then M -> H conditioning projection
        self.bn1 = Linear(rng, h, cfg.bottleneck, std)
        self.bn2 = Linear(rng, cfg.bottleneck, cfg.bottleneck, std)
        self.cond = Linear(rng, cfg.bottleneck, h, std)
        self.cond_ln = LayerNorm(h)
        # heads
        self.mlm_dense = Linear(rng, h, h, std)
        self.mlm_ln = LayerNorm(h)
        self.mlm_bias = _zeros((cfg.vocab_size,))
        if not cfg.tie_embeddings:
            self.mlm_out = _param(rng, (h, cfg.vocab_size), std)
        self.entail = Linear(rng, h, 1, std)
        self.score = Linear(rng, h, cfg.output_dim, std)
        # sequence-to-sequence model
        self.s2s_emb = Embedder(rng, cfg, segments=False)
        self.s2s_enc_blocks = [Block(rng, cfg) for _ in range(cfg.layers_s2s_enc)]
        self.s2s_enc_ln = LayerNorm(h)
        self.s2s_dec_blocks = [Block(rng, cfg, cross=True) for _ in range(cfg.layers_s2s_dec)]
        self.s2s_dec_ln = LayerNorm(h)
        self.s2s_bias = _zeros((cfg.vocab_size,))
        if not cfg.tie_embeddings:
            self.s2s_out = _param(rng, (h, cfg.vocab_size), std)
        self._bn_act = T.ACTIVATIONS[cfg.bottleneck_activation]
        self._drop_rng = None

    # ------------------------------------------------------------ modes
    def train(self, rng: np.random.Generator | None = None):
        self._set_training(True)
        self._drop_rng = rng
        return self

    def eval(self):
        self._set_training(False)
        self._drop_rng = None
        return self

    def _set_training(self, flag):
        for m in self._modules():
            m.training = flag

    def _modules(self):
        stack = [self]
        while stack:
            m = stack.pop()
            yield m
            for v in vars(m).values():
                if isinstance(v, Module):
                    stack.append(v)
                elif isinstance(v, list) and v and isinstance(v[0], Module):
                    stack.extend(v)

    # ------------------------------------------------------------ groups
    def group(self, name: str) -> dict:
        """Named parameter subsets: edit, bottleneck, mlm, entail, score, s2s."""
        prefixes = {
            "edit": ("edit_",),
            "bottleneck": ("bn1.", "bn2.", "cond.", "cond_ln."),
            "mlm": ("mlm_",),
            "entail": ("entail.",),
            "score": ("score.",),
            "s2s": ("s2s_",),
        }[name]
        return {k: p for k, p in self.named_parameters() if k.startswith(prefixes)}

    # ------------------------------------------------------------ edit encoder
    def edit_encode(self, ids: np.ndarray, segments: np.ndarray, record=None) -> Tensor:
        ids = np.atleast_2d(ids)
        segments = np.atleast_2d(segments)
        if ids.shape[1] > self.cfg.max_len:
            raise ContractError(f"packed pair of length {ids.shape[1]} exceeds max_len {self.cfg.max_len}")
        x = self.edit_emb(ids, segments)
        mask = key_mask(ids)
        for blk in self.edit_blocks:
            x = blk(x, mask, rng=self._drop_rng, record=record)
        return self.edit_ln(x)

    @staticmethod
    def pool(hiddens: Tensor) -> Tensor:
        """The beginning-of-sequence state of each example."""
        return hiddens[:, 0, :]

    def bottleneck(self, pooled: Tensor) -> Tensor:
        return self.bn2(self._bn_act(self.bn1(pooled)))

    def edit_vector(self, ids, segments) -> Tensor:
        return self.bottleneck(self.pool(self.edit_encode(ids, segments)))

    # ------------------------------------------------------------ heads
    def mlm_logits(self, hiddens: Tensor) -> Tensor:
        x = self.mlm_ln(T.gelu(self.mlm_dense(hiddens)))
        w = self.edit_emb.tok.transpose(1, 0) if self.cfg.tie_embeddings else self.mlm_out
        return T.linear(x, w, self.mlm_bias)

    def entail_logit(self, pooled: Tensor) -> Tensor:
        return self.entail(pooled).reshape(-1)

    def score_head(self, pooled: Tensor) -> Tensor:
        return self.score(pooled)

    # ------------------------------------------------------------ seq2seq
    def s2s_encode(self, src_ids: np.ndarray) -> Tensor:
        x = self.s2s_emb(src_ids)
        mask = key_mask(src_ids)
        for blk in self.s2s_enc_blocks:
            x = blk(x, mask, rng=self._drop_rng)
        return self.s2s_enc_ln(x)

    def memory(self, src_ids: np.ndarray, z: Tensor | None):
        """Encoder states with the conditioning slot prepended (if ``z`` given)."""
        src_ids = np.atleast_2d(src_ids)
        enc = self.s2s_encode(src_ids)
        mmask = key_mask(src_ids)
        if z is not None:
            slot = self.cond_ln(self.cond(z)).reshape(z.shape[0], 1, self.cfg.hidden)
            enc = T.concat([slot, enc], axis=1)
            mmask = np.concatenate([np.zeros(mmask.shape[:3] + (1,), dtype=np.float32), mmask], axis=3)
        return enc, mmask

    def decode(self, memory: Tensor, memory_mask: np.ndarray, tgt_in: np.ndarray) -> Tensor:
        tgt_in = np.atleast_2d(tgt_in)
        if tgt_in.shape[1] > self.cfg.max_len:
            raise ContractError(f"target of length {tgt_in.shape[1]} exceeds max_len {self.cfg.max_len}")
        x = self.s2s_emb(tgt_in)
        mask = causal_mask(tgt_in)
        for blk in self.s2s_dec_blocks:
            x = blk(x, mask, memory=memory, memory_mask=memory_mask, rng=self._drop_rng)
        x = self.s2s_dec_ln(x)
        w = self.s2s_emb.tok.transpose(1, 0) if self.cfg.tie_embeddings else self.s2s_out
        return T.linear(x, w, self.s2s_bias)

    def seq2seq_forward(self, src_ids, z: Tensor | None, tgt_in) -> Tensor:
        """Teacher-forced next-token logits ``[B, T, V]``.

        ``z=None`` ablates the conditioning slot entirely.
        """
        tgt_in = np.atleast_2d(tgt_in)
        if not np.all(tgt_in[:, 0] == BOS):
            raise ContractError("target sequences must begin with BOS")
        memory, mmask = self.memory(src_ids, z)
        return self.decode(memory, mmask, tgt_in)

    # ------------------------------------------------------------ persistence
    def state_dict(self) -> dict:
        return {k: p.data for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) ^ set(state))[:5]
            raise ConfigError(f"parameter manifest mismatch: {missing}")
        for k, p in own.items():
            if p.shape != state[k].shape:
                raise ConfigError(f"shape mismatch for {k}: {p.shape} vs {state[k].shape}")
            p.data = np.array(state[k], dtype=np.float32, copy=True)

    def save(self, path, extra: dict | None = None) -> None:
        header = self.cfg.to_header()
        header.update(extra or {})
        save_checkpoint(path, self.state_dict(), header)

    @classmethod
    def load(cls, path) -> tuple["ParaphraseModel", dict]:
        header, params = load_checkpoint(path)
        model = cls(ModelConfig.from_header(header))
        model.load_state_dict(params)
        return model, header


def params_digest(params: dict) -> str:
    """Hash of parameter buffers, used to assert that a group stayed frozen."""
    h = hashlib.sha256()
    for k in sorted(params):
        v = params[k]
        arr = v.data if isinstance(v, Tensor) else v
        h.update(k.encode())
        h.update(np.ascontiguousarray(arr).tobytes())
    return h.hexdigest()
