"""Desk-scale configurations shared by the fixtures and the acceptance suite."""
import numpy as np

from pararep.data import default_lexicon, make_pretrain_corpus, make_scored_set, sample_clause
from pararep.model import ModelConfig, ParaphraseModel
from pararep.pretrain import PretrainConfig
from pararep.text import build_vocab

DESK = dict(hidden=64, heads=4, ffn_dim=128, layers_enc=2, layers_s2s_enc=2, layers_s2s_dec=2,
            bottleneck=8, max_len=40)
VOCAB_SIZE = 400


def corpus_and_vocab(n, seed=0):
    corpus = make_pretrain_corpus(n, seed)
    vocab = build_vocab([e.ref for e in corpus] + [e.cand for e in corpus], VOCAB_SIZE)
    return corpus, vocab


def desk_model(vocab, seed=0, **kw):
    return ParaphraseModel(ModelConfig(vocab_size=len(vocab), seed=seed, **{**DESK, **kw}))


def desk_pretrain_config(**kw):
    base = dict(steps=2000, lr=1e-3, warmup=100, batch_size=32, seed=0)
    base.update(kw)
    return PretrainConfig(**base)


def held_out_clauses(n=40, seed=999):
    """(demonstration clause, new-reference clause) pairs drawn fresh from the grammar."""
    lex = default_lexicon()
    rng = np.random.default_rng(seed)
    return [(sample_clause(rng, lex), sample_clause(rng, lex)) for _ in range(n)]


# fine-tuning for the learned metric: pool of scored pairs and a disjoint test set
FT_POOL = (2000, 5)
FT_TEST = (400, 6)
FT_LR = 3e-4
FT_STEPS = 800


def scored_sets():
    return make_scored_set(*FT_POOL), make_scored_set(*FT_TEST)
