import os
import sys
import time

import pytest

sys.path.insert(0, os.path.dirname(__file__))

import desk  # noqa: E402
from pararep.finetune import FinetuneConfig, finetune_run, split_by_reference  # noqa: E402
from pararep.model import ParaphraseModel  # noqa: E402
from pararep.pretrain import pretrain_run  # noqa: E402


@pytest.fixture(scope="session")
def desk_pretrained():
    """Desk config trained for 2k steps on the 2k-pair corpus."""
    corpus, vocab = desk.corpus_and_vocab(2000)
    model = desk.desk_model(vocab)
    cfg = desk.desk_pretrain_config()
    t = time.time()
    result = pretrain_run(model, corpus, vocab, cfg)
    return {"model": model, "vocab": vocab, "corpus": corpus, "result": result, "config": cfg,
            "seconds": time.time() - t}


@pytest.fixture(scope="session")
def oneshot_path(tmp_path_factory):
    """Desk config and budget on a 16k-pair corpus, so 2k steps of 32 make four epochs.

    Saved to disk so each consumer can load an independent copy.
    """
    corpus, vocab = desk.corpus_and_vocab(16000)
    model = desk.desk_model(vocab)
    pretrain_run(model, corpus, vocab, desk.desk_pretrain_config())
    d = tmp_path_factory.mktemp("oneshot")
    model.save(d / "model.ckpt")
    vocab.save(d / "vocab.txt")
    return d


@pytest.fixture(scope="session")
def oneshot_model(oneshot_path):
    from pararep.text import Vocab
    model, _ = ParaphraseModel.load(oneshot_path / "model.ckpt")
    return model, Vocab.load(oneshot_path / "vocab.txt")


@pytest.fixture(scope="session")
def held_out_clauses():
    return desk.held_out_clauses()


@pytest.fixture(scope="session")
def finetuned(oneshot_path):
    """Learned metrics fine-tuned from the one-shot checkpoint, one per seed (built lazily)."""
    from pararep.text import Vocab
    vocab = Vocab.load(oneshot_path / "vocab.txt")
    pool, test = desk.scored_sets()
    cache = {}

    def get(seed):
        if seed not in cache:
            model, header = ParaphraseModel.load(oneshot_path / "model.ckpt")
            train, val = split_by_reference(pool, 0.10, seed)
            cfg = FinetuneConfig(lr=desk.FT_LR, steps=desk.FT_STEPS, seed=seed, eval_every=100)
            res = finetune_run(model, vocab, train, val, cfg)
            cache[seed] = (model, res)
        return cache[seed]

    return {"vocab": vocab, "test": test, "pool": pool, "get": get}


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion that ran."""
    mod = sys.modules.get("test_acceptance")
    if not mod or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
