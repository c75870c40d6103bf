"""Acceptance suite: one test per criterion, each at its stated tolerance.

Every test records a verdict line in ``RESULTS``; the terminal summary hook in
conftest prints them in order after the run.
"""
import contextlib
import csv
import math
import time

import numpy as np
import pytest

import desk
import oracles
from pararep import cli
from pararep.correlation import evaluate_metric, kendall_tau_b, pearson
from pararep.data import (NEGATION_MARKER, ScoredPair, apply_transform, default_lexicon, make_pretrain_corpus,
                          render, save_scored_tsv)
from pararep.errors import UndefinedCorrelationError
from pararep.finetune import LearnedMetric, split_by_reference
from pararep.generation import BeamConfig, beam_search, greedy_decode, one_shot
from pararep.gradcheck import grad_check
from pararep.metrics import PAIR_METRICS, bleu, chrf_pp, meteor_lite, rouge_l, sentence_bleu, ter
from pararep.model import ModelConfig, ParaphraseModel, params_digest
from pararep.pretrain import PretrainConfig, collate, compute_losses, evaluate_ar, pretrain_run
from pararep.text import tokenize
from toy_lm import ALPHABET, BOS, EOS, toy_step

RESULTS = {}
TITLES = {
    1: "gradient correctness", 2: "metric oracle equivalence", 3: "correlation oracle equivalence",
    4: "loss bookkeeping", 5: "pretraining dynamics", 6: "bottleneck utility", 7: "ablation harness",
    8: "one-shot identity invariance", 9: "one-shot transfer", 10: "learned beats BLEU",
    11: "data-scarcity trend", 12: "split hygiene", 13: "determinism", 14: "beam-search optimality",
}


@contextlib.contextmanager
def criterion(n):
    """Record PASS or FAIL for criterion ``n``; ``detail`` may be filled in by the body."""
    detail = {}
    try:
        yield detail
    except BaseException as exc:
        msg = detail.get("text") or (str(exc).splitlines() or [type(exc).__name__])[0][:160]
        RESULTS[n] = f"C{n:<2} FAIL  {TITLES[n]}: {msg}"
        raise
    RESULTS[n] = f"C{n:<2} PASS  {TITLES[n]}: {detail.get('text', '')}"


def _rand_tokens(rng, max_len, alphabet, min_len=1):
    return [alphabet[i] for i in rng.integers(len(alphabet), size=int(rng.integers(min_len, max_len + 1)))]


# ---------------------------------------------------------------- 1

def test_c01_gradient_correctness():
    with criterion(1) as d:
        t = time.time()
        model = ParaphraseModel(ModelConfig.tiny(50, layers_enc=2, hidden=32, heads=2, bottleneck=8,
                                                 init_std=0.3, seed=1)).eval()
        rng = np.random.default_rng(5)
        examples = [(list(rng.integers(6, 50, 5)), list(rng.integers(6, 50, 4)), 1),
                    (list(rng.integers(6, 50, 3)), list(rng.integers(6, 50, 6)), 0),
                    (list(rng.integers(6, 50, 4)), list(rng.integers(6, 50, 2)), None)]
        batch = collate(examples, 32, 50, rng, 0.4)
        params = dict(model.named_parameters())
        rep = grad_check(lambda: compute_losses(model, batch, PretrainConfig())[0], params, max_entries=16)
        elapsed = time.time() - t
        d["text"] = f"{len(params)} tensors, max rel err {rep.max_error:.2e}, {elapsed:.0f}s"
        assert rep.max_error < 1e-3, rep.failures
        assert elapsed < 120


# ---------------------------------------------------------------- 2

def test_c02_metric_oracles():
    with criterion(2) as d:
        words = ["the", "cat", "sat", "on", "mat", "a", "dog", "ran"]
        rng = np.random.default_rng(2024)
        worst = 0.0
        for _ in range(200):
            r, c = _rand_tokens(rng, 10, words), _rand_tokens(rng, 10, words, 0)
            r6, c6 = _rand_tokens(rng, 6, words[:5]), _rand_tokens(rng, 6, words[:5])
            r7, c7 = _rand_tokens(rng, 7, words), _rand_tokens(rng, 7, words, 0)
            pairs = [
                (bleu([r], [c]).value, oracles.bleu_corpus([r], [c])),
                (sentence_bleu(r, c).value, oracles.bleu_sentence(r, c)),
                (ter(r7, c7).value, oracles.ter_exhaustive(c7, r7)),
                (rouge_l(r, c).value, oracles.rouge_l(r, c)),
                (meteor_lite(r6, c6).value, oracles.meteor(r6, c6)),
                (chrf_pp(" ".join(r), " ".join(c)).value,
                 oracles.chrf(" ".join(r), " ".join(c), tokenize=tokenize)),
            ]
            worst = max(worst, max(abs(a - b) for a, b in pairs))
            assert bleu([r], [r]).value == 1.0 and sentence_bleu(r, r).value == 1.0
            assert ter(r, r).value == 0.0 and rouge_l(r, r).value == 1.0 and meteor_lite(r, r).value == 1.0
            assert chrf_pp(" ".join(r), " ".join(r)).value == 1.0
        d["text"] = f"200 instances x 6 metrics, max |diff| {worst:.1e}, identity exact"
        assert worst < 1e-9


# ---------------------------------------------------------------- 3

def test_c03_correlation_oracles():
    with criterion(3) as d:
        rng = np.random.default_rng(3)
        worst, done = 0.0, 0
        while done < 100:
            n = int(rng.integers(2, 51))
            x = rng.integers(0, 8, size=n).astype(float)
            y = rng.integers(0, 8, size=n) + rng.normal(size=n) * (rng.random() < 0.5)
            if len(set(x)) < 2 or len(set(y)) < 2:
                continue
            worst = max(worst, abs(kendall_tau_b(x, y) - oracles.kendall_b(x, y)),
                        abs(pearson(x, y) - oracles.pearson(x, y)))
            done += 1
        for f in (kendall_tau_b, pearson):
            with pytest.raises(UndefinedCorrelationError):
                f([2.0] * 5, [1, 2, 3, 4, 5])
        d["text"] = f"100 vectors, max |diff| {worst:.1e}, constants raise"
        assert worst < 1e-12


# ---------------------------------------------------------------- 4, 5

def test_c04_loss_bookkeeping(desk_pretrained):
    with criterion(4) as d:
        cfg = desk_pretrained["config"]
        worst = max(abs(br.l_total - (br.l_ar + cfg.alpha * br.l_mlm + cfg.beta * br.l_cls))
                    for _, br, _ in desk_pretrained["result"].log)
        d["text"] = f"{len(desk_pretrained['result'].log)} steps, alpha={cfg.alpha} beta={cfg.beta}, max |diff| {worst:.1e}"
        assert (cfg.alpha, cfg.beta) == (2.0, 10.0)
        assert worst <= 1e-6


def test_c05_pretraining_dynamics(desk_pretrained):
    with criterion(5) as d:
        log = desk_pretrained["result"].log
        totals = np.array([br.l_total for _, br, _ in log])
        first, last = totals[:50].mean(), totals[-50:].mean()
        drop = 1 - last / first
        ln_v = math.log(len(desk_pretrained["vocab"]))
        mlm0 = log[0][1].l_mlm
        d["text"] = (f"{len(log)} steps, l_total {first:.2f} -> {last:.2f} ({drop:.0%} drop), "
                     f"initial L_MLM {mlm0:.3f} vs ln V {ln_v:.3f}")
        assert len(log) == 2000 and len(desk_pretrained["corpus"]) == 2000
        assert drop >= 0.5
        assert abs(mlm0 - ln_v) <= 0.05 * ln_v


# ---------------------------------------------------------------- 6, 7

C6_STEPS = 600


def test_c06_bottleneck_utility():
    with criterion(6) as d:
        corpus, vocab = desk.corpus_and_vocab(2000)
        held = make_pretrain_corpus(300, 77)
        gains = []
        for seed in range(3):
            losses = {}
            for condition in (True, False):
                model = desk.desk_model(vocab, seed=seed)
                cfg = desk.desk_pretrain_config(steps=C6_STEPS, seed=seed, condition=condition)
                pretrain_run(model, corpus, vocab, cfg)
                losses[condition] = evaluate_ar(model, held, vocab, condition=condition)
            gains.append(1 - losses[True] / losses[False])
        wins = sum(g >= 0.02 for g in gains)
        d["text"] = f"relative L_AR gain per seed {', '.join(f'{g:.1%}' for g in gains)} ({wins}/3 >= 2%)"
        assert wins >= 2


ABLATIONS = (("enable_ar", ("s2s", "bottleneck")), ("enable_mlm", ("mlm",)), ("enable_cls", ("entail",)))


def test_c07_ablation_harness():
    with criterion(7) as d:
        corpus, vocab = desk.corpus_and_vocab(300)
        status = {}
        for flag, groups in ABLATIONS:
            model = desk.desk_model(vocab)
            before = {g: params_digest({k: p.data.copy() for k, p in model.group(g).items()}) for g in groups}
            edit = params_digest({k: p.data.copy() for k, p in model.group("edit").items()})
            pretrain_run(model, corpus, vocab, desk.desk_pretrain_config(steps=20, warmup=5, **{flag: False}))
            frozen = all(params_digest(model.group(g)) == before[g] for g in groups)
            status[flag] = frozen and params_digest(model.group("edit")) != edit
        d["text"] = ", ".join(f"{f}=False: {'+'.join(g)} {'at init' if status[f] else 'MOVED'}"
                              for f, g in ABLATIONS)
        assert all(status.values())


# ---------------------------------------------------------------- 8, 9

def _one_shot_runs(oneshot_model, held_out_clauses, kind):
    model, vocab = oneshot_model
    lex = default_lexicon()
    rng = np.random.default_rng(11)
    out = []
    for demo, new in held_out_clauses:
        dr, nr = render(demo, lex), render(new, lex)
        dc = dr if kind == "identity" else apply_transform(kind, demo, lex, rng)
        out.append((nr, one_shot(model, vocab, dr, dc, nr)))
    return out


def test_c08_identity_invariance(oneshot_model, held_out_clauses):
    with criterion(8) as d:
        runs = _one_shot_runs(oneshot_model, held_out_clauses, "identity")
        rate = np.mean([res.text == nr for nr, res in runs])
        d["text"] = f"{rate:.0%} exact regeneration over {len(runs)} held-out references"
        assert rate >= 0.70


def test_c09_one_shot_transfer(oneshot_model, held_out_clauses):
    with criterion(9) as d:
        neg = _one_shot_runs(oneshot_model, held_out_clauses, "negation")
        ident = _one_shot_runs(oneshot_model, held_out_clauses, "identity")
        marker = np.mean([NEGATION_MARKER in tokenize(res.text) for _, res in neg])
        p_neg = np.mean([res.entailment for _, res in neg])
        p_id = np.mean([res.entailment for _, res in ident])
        d["text"] = f"marker in {marker:.0%} of outputs, entailment {p_neg:.3f} (negation) vs {p_id:.3f} (identity)"
        assert marker >= 0.60
        assert p_neg < 0.5 < p_id


# ---------------------------------------------------------------- 10, 11

def test_c10_learned_beats_bleu(finetuned):
    with criterion(10) as d:
        test = finetuned["test"]
        r_bleu = evaluate_metric(test, PAIR_METRICS["bleu"], "bleu").r
        margins = []
        for seed in range(3):
            model, _ = finetuned["get"](seed)
            metric = LearnedMetric(model, finetuned["vocab"]).prime([(p.ref, p.cand) for p in test])
            margins.append(evaluate_metric(test, metric, "learned").r - r_bleu)
        wins = sum(m >= 0.05 for m in margins)
        d["text"] = (f"BLEU |r| {r_bleu:.3f}; learned margin per seed "
                     f"{', '.join(f'{m:+.3f}' for m in margins)} ({wins}/3 >= 0.05)")
        assert wins >= 2


def test_c11_data_scarcity_trend(oneshot_path, finetuned, tmp_path):
    with criterion(11) as d:
        save_scored_tsv(tmp_path / "pool.tsv", finetuned["pool"])
        code = cli.main(["sweep", "--kind", "finetune_fraction", "--grid", "0.1,1.0",
                         "--scored", str(tmp_path / "pool.tsv"), "--checkpoint", str(oneshot_path / "model.ckpt"),
                         "--vocab", str(oneshot_path / "vocab.txt"), "--ft-lr", str(desk.FT_LR),
                         "--ft-steps", str(desk.FT_STEPS), "--out-dir", str(tmp_path)])
        assert code == 0
        with open(tmp_path / "sweep.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        small, full = (float(r["abs_r"]) for r in rows)
        n_val = {int(r["n_val"]) for r in rows}
        n_all = len(finetuned["pool"])
        d["text"] = (f"|r| {small:.3f} at 10% ({rows[0]['n_train']} pairs) vs {full:.3f} at 100% "
                     f"({rows[1]['n_train']} pairs), validation {n_val.pop() / n_all:.0%}")
        assert full >= small - 0.02


# ---------------------------------------------------------------- 12

def test_c12_split_hygiene():
    with criterion(12) as d:
        rng = np.random.default_rng(12)
        overlaps = 0
        for i in range(1000):
            sizes = rng.integers(1, 8, size=int(rng.integers(2, 60)))
            data = [ScoredPair(f"ref {g}", f"cand {g} {k}", 0.5, "x") for g, s in enumerate(sizes) for k in range(s)]
            train, val = split_by_reference(data, float(rng.uniform(0.05, 0.5)), i)
            overlaps += len({p.ref for p in train} & {p.ref for p in val})
            assert len(train) + len(val) == len(data)
        d["text"] = f"1000 randomized datasets, {overlaps} shared references"
        assert overlaps == 0


# ---------------------------------------------------------------- 13

def test_c13_determinism(tmp_path):
    with criterion(13) as d:
        corpus = tmp_path / "corpus"
        assert cli.main(["synth", "--kind", "pretrain", "--n", "300", "--out-dir", str(corpus)]) == 0
        assert cli.main(["synth", "--kind", "scored", "--n", "200", "--seed", "4", "--out-dir", str(corpus)]) == 0
        model_flags = [f"--{k.replace('_', '-')}={v}" for k, v in desk.DESK.items()] + ["--dropout=0.1"]
        for run in ("a", "b"):
            assert cli.main(["pretrain", "--corpus", str(corpus / "corpus.tsv"), "--steps", "40", "--warmup", "5",
                             "--seed", "7", "--out-dir", str(tmp_path / run / "pre"), *model_flags]) == 0
            assert cli.main(["finetune", "--checkpoint", str(tmp_path / run / "pre" / "step000040.ckpt"),
                             "--vocab", str(tmp_path / run / "pre" / "vocab.txt"), "--scored",
                             str(corpus / "scored.tsv"), "--steps", "30", "--eval-every", "10", "--seed", "7",
                             "--out-dir", str(tmp_path / run / "ft")]) == 0
        names = ["pre/step000040.ckpt", "pre/loss_log.csv", "pre/vocab.txt",
                 "ft/finetuned.ckpt", "ft/curve.csv", "ft/train.tsv", "ft/val.tsv"]
        same = [(tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes() for n in names]
        d["text"] = f"{sum(same)}/{len(names)} artifacts byte-identical across two runs"
        assert all(same), [n for n, s in zip(names, same) if not s]


# ---------------------------------------------------------------- 14

def test_c14_beam_optimality():
    with criterion(14) as d:
        mismatches, greedy_mismatches = 0, 0
        for x in range(50):
            step = toy_step(x)
            cfg = BeamConfig(beam=4, max_len=5, length_penalty=0.6, eos_id=EOS, bos_id=BOS)
            mismatches += beam_search(step, cfg) != oracles.exhaustive_decode(step, ALPHABET, EOS, BOS, 5, 0.6)
            for max_len in (2, 5, 8):
                one = BeamConfig(beam=1, max_len=max_len, length_penalty=0.6, eos_id=EOS, bos_id=BOS)
                greedy_mismatches += beam_search(step, one) != greedy_decode(step, one)
        d["text"] = f"beam-4 vs exhaustive: {mismatches}/50 mismatches; beam-1 vs greedy: {greedy_mismatches}/150"
        assert mismatches == 0 and greedy_mismatches == 0
