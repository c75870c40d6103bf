"""Command-line entry points.

Every subcommand writes its artifacts plus a ``manifest.json`` into
``--out-dir``.  Configuration is resolved as dataclass defaults, then the
``--config`` file (``key=value`` lines), then explicit flags.

Exit codes: 0 ok, 1 unexpected failure, 2 usage (unknown flag), 3 missing
input file, 4 invariant/config violation, 5 malformed input, 6 numerical
failure.  Failures print one line ``error[<category>]: <message>`` to stderr.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import subprocess
import sys
import tempfile
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import __version__
from .correlation import evaluate_metric, report_markdown, write_report_csv
from .data import (load_para_tsv, load_scored_tsv, make_pretrain_corpus, make_scored_set, save_para_tsv,
                   save_scored_tsv)
from .errors import ConfigError, FormatError, ParaRepError
from .finetune import (FinetuneConfig, LearnedMetric, check_vocab, finetune_run, load_finetuned,
                       split_by_reference)
from .generation import BeamConfig, one_shot
from .metrics import PAIR_METRICS, bleu, chrf_pp, meteor_lite, rouge_l, ter
from .model import ModelConfig, ParaphraseModel
from .pretrain import PretrainConfig, pretrain_run
from .text import Vocab, build_vocab, tokenize

log = logging.getLogger("pararep")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_MISSING = 0, 1, 2, 3

MODEL_FIELDS = ("hidden", "heads", "ffn_dim", "layers_enc", "layers_s2s_enc", "layers_s2s_dec", "bottleneck",
                "max_len", "dropout", "activation", "bottleneck_activation", "positional", "tie_embeddings",
                "init_std")
PRETRAIN_FIELDS = tuple(f.name for f in fields(PretrainConfig) if f.name != "seed")
FINETUNE_FIELDS = tuple(f.name for f in fields(FinetuneConfig) if f.name != "seed")


# ---------------------------------------------------------------- manifest

def build_id() -> str:
    here = os.path.dirname(os.path.abspath(__file__))
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def atomic_write(path, text: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@dataclass
class RunManifest:
    subcommand: str
    config: dict
    seed: int
    inputs: dict
    outputs: list
    argv: list
    build: str = field(default_factory=build_id)
    started: str = ""
    finished: str = ""

    def write(self, out_dir) -> str:
        path = os.path.join(out_dir, "manifest.json")
        atomic_write(path, json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------- config resolution

def _parse_bool(raw: str) -> bool:
    v = str(raw).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def _field_types(cls):
    hints = {"int": int, "float": float, "bool": _parse_bool, "str": str}
    return {f.name: hints.get(f.type if isinstance(f.type, str) else f.type.__name__, str) for f in fields(cls)}


def read_config_file(path) -> dict:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            k, v = line.split("=", 1)
            out[k.strip().replace("-", "_")] = v.strip()
    return out


def _add_fields(p, cls, names, prefix=""):
    types = _field_types(cls)
    for name in names:
        flag = "--" + (prefix + name).replace("_", "-")
        p.add_argument(flag, dest=prefix + name, type=types[name], default=None, metavar=name.upper())


def resolve(cls, names, args, file_cfg: dict, prefix: str = "", **fixed):
    """Defaults < config file < flags, for the listed fields of ``cls``."""
    types = _field_types(cls)
    kw = {}
    for name in names:
        key = prefix + name
        if key in file_cfg:
            try:
                kw[name] = types[name](file_cfg[key])
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {exc}") from None
        val = getattr(args, key, None)
        if val is not None:
            kw[name] = val
    kw.update(fixed)
    return cls(**kw)


def _check_unknown(file_cfg: dict, allowed) -> None:
    unknown = sorted(set(file_cfg) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")


def _require(path, what="input"):
    if path is None or not os.path.exists(path):
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


# ---------------------------------------------------------------- subcommands

def cmd_build_vocab(args, file_cfg):
    _check_unknown(file_cfg, ("max_size",))
    max_size = args.max_size or int(file_cfg.get("max_size", 400))
    examples, _ = load_para_tsv(_require(args.corpus, "corpus"))
    vocab = build_vocab([e.ref for e in examples] + [e.cand for e in examples], max_size)
    path = os.path.join(args.out_dir, "vocab.txt")
    vocab.save(path)
    print(f"vocab: {len(vocab)} tokens -> {path}")
    return {"max_size": max_size}, {"corpus": args.corpus}, [path]


def cmd_synth(args, file_cfg):
    _check_unknown(file_cfg, ("n", "kind", "n_groups", "labeled_fraction"))
    kind = args.kind or file_cfg.get("kind", "pretrain")
    n = args.n or int(file_cfg.get("n", 2000))
    if n < 1:
        raise ConfigError("n must be >= 1")
    if kind == "pretrain":
        frac = float(file_cfg.get("labeled_fraction", 1.0 / 3.0))
        path = os.path.join(args.out_dir, "corpus.tsv")
        save_para_tsv(path, make_pretrain_corpus(n, args.seed, labeled_fraction=frac))
        cfg = {"kind": kind, "n": n, "labeled_fraction": frac}
    elif kind == "scored":
        groups = int(file_cfg.get("n_groups", 4))
        path = os.path.join(args.out_dir, "scored.tsv")
        save_scored_tsv(path, make_scored_set(n, args.seed, n_groups=groups))
        cfg = {"kind": kind, "n": n, "n_groups": groups}
    else:
        raise ConfigError(f"unknown synth kind {kind!r}")
    print(f"synth: {n} {kind} examples -> {path}")
    return cfg, {}, [path]


def _load_or_build_vocab(args, examples, max_size=400):
    if args.vocab:
        return Vocab.load(_require(args.vocab, "vocabulary")), None
    vocab = build_vocab([e.ref for e in examples] + [e.cand for e in examples], max_size)
    path = os.path.join(args.out_dir, "vocab.txt")
    vocab.save(path)
    return vocab, path


def cmd_pretrain(args, file_cfg):
    _check_unknown(file_cfg, MODEL_FIELDS + PRETRAIN_FIELDS + ("vocab_max_size",))
    examples, _ = load_para_tsv(_require(args.corpus, "corpus"))
    vocab, vocab_path = _load_or_build_vocab(args, examples, int(file_cfg.get("vocab_max_size", 400)))
    mcfg = resolve(ModelConfig, MODEL_FIELDS, args, file_cfg, vocab_size=len(vocab), seed=args.seed)
    pcfg = resolve(PretrainConfig, PRETRAIN_FIELDS, args, file_cfg, seed=args.seed)
    pcfg.validate()
    model = ParaphraseModel(mcfg)
    log_path = os.path.join(args.out_dir, "loss_log.csv")
    res = pretrain_run(model, examples, vocab, pcfg, out_dir=args.out_dir, log_path=log_path,
                       progress=max(1, pcfg.steps // 20))
    final = res.checkpoints[-1]
    print(f"pretrain: {pcfg.steps} steps, final l_total {res.log[-1][1].l_total:.4f} -> {final}")
    outs = res.checkpoints + [log_path] + ([vocab_path] if vocab_path else [])
    return {"model": asdict(mcfg), "pretrain": asdict(pcfg)}, {"corpus": args.corpus, "vocab": args.vocab}, outs


def _finetune_split(scored, cfg: FinetuneConfig, seed: int, train_fraction: float = 1.0):
    train, val = split_by_reference(scored, cfg.val_fraction, seed)
    if not 0.0 < train_fraction <= 1.0:
        raise ConfigError(f"train fraction must lie in (0, 1], got {train_fraction}")
    if train_fraction < 1.0:
        k = max(1, int(math.ceil(train_fraction * len(train))))
        keep = sorted(np.random.default_rng([seed, 21]).permutation(len(train))[:k].tolist())
        train = [train[i] for i in keep]
    return train, val


def cmd_finetune(args, file_cfg):
    _check_unknown(file_cfg, FINETUNE_FIELDS + ("train_fraction",))
    model, header = ParaphraseModel.load(_require(args.checkpoint, "checkpoint"))
    vocab = Vocab.load(_require(args.vocab, "vocabulary"))
    check_vocab(model, vocab, header)
    scored = load_scored_tsv(_require(args.scored, "scored data"))
    fcfg = resolve(FinetuneConfig, FINETUNE_FIELDS, args, file_cfg, seed=args.seed)
    fcfg.validate()
    frac = args.train_fraction if args.train_fraction is not None else float(file_cfg.get("train_fraction", 1.0))
    train, val = _finetune_split(scored, fcfg, args.seed, frac)
    train_path = os.path.join(args.out_dir, "train.tsv")
    val_path = os.path.join(args.out_dir, "val.tsv")
    save_scored_tsv(train_path, train)
    save_scored_tsv(val_path, val)
    curve_path = os.path.join(args.out_dir, "curve.csv")
    res = finetune_run(model, vocab, train, val, fcfg, header=header, out_dir=args.out_dir, curve_path=curve_path)
    last = res.curve[-1]
    print(f"finetune: {len(train)} train / {len(val)} val, val_mse {last[2]:.4f} val_r {last[3]:.4f} -> {res.checkpoint}")
    return ({"finetune": asdict(fcfg), "train_fraction": frac},
            {"checkpoint": args.checkpoint, "vocab": args.vocab, "scored": args.scored},
            [res.checkpoint, curve_path, train_path, val_path])


def _metric_fn(name, args, scored):
    if name == "learned":
        model, header = load_finetuned(_require(args.checkpoint, "checkpoint"))
        vocab = Vocab.load(_require(args.vocab, "vocabulary"))
        check_vocab(model, vocab, header)
        return LearnedMetric(model, vocab).prime([(p.ref, p.cand) for p in scored])
    if name not in PAIR_METRICS:
        raise ConfigError(f"unknown metric {name!r}; choose from learned, {', '.join(PAIR_METRICS)}")
    return PAIR_METRICS[name]


def cmd_evaluate(args, file_cfg):
    _check_unknown(file_cfg, ("metrics",))
    scored = load_scored_tsv(_require(args.scored, "scored data"))
    names = args.metric or file_cfg.get("metrics", "bleu").split(",")
    reports = [evaluate_metric(scored, _metric_fn(n.strip(), args, scored), n.strip()) for n in names]
    csv_path = os.path.join(args.out_dir, "report.csv")
    md_path = os.path.join(args.out_dir, "report.md")
    write_report_csv(reports, csv_path)
    md = report_markdown(reports)
    atomic_write(md_path, md)
    sys.stdout.write(md)
    return {"metrics": names}, {"scored": args.scored, "checkpoint": args.checkpoint}, [csv_path, md_path]


METRIC_COLUMNS = ("bleu", "ter", "rouge_l", "meteor_lite", "chrf_pp")


def cmd_metrics(args, file_cfg):
    _check_unknown(file_cfg, ())
    refs, cands = [], []
    with open(_require(args.input, "input"), encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise FormatError(f"{args.input}:{lineno}: expected ref<TAB>cand")
            refs.append(cols[0])
            cands.append(cols[1])
    path = os.path.join(args.out_dir, "metrics.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("index",) + METRIC_COLUMNS)
        for i, (r, c) in enumerate(zip(refs, cands)):
            w.writerow([i] + [repr(float(PAIR_METRICS[m](r, c))) if m != "ter" or tokenize(r) else ""
                              for m in METRIC_COLUMNS])
        if refs:
            rt = [tokenize(r) for r in refs]
            ct = [tokenize(c) for c in cands]
            ters = [ter(r, c) for r, c in zip(rt, ct) if r]
            corpus_ter = (sum(t.components["edits"] for t in ters) / sum(t.components["ref_len"] for t in ters)
                          if ters else float("nan"))
            w.writerow(["corpus", repr(bleu(rt, ct).value), repr(corpus_ter),
                        repr(float(np.mean([rouge_l(r, c).value for r, c in zip(rt, ct)]))),
                        repr(float(np.mean([meteor_lite(r, c).value for r, c in zip(rt, ct)]))),
                        repr(float(np.mean([chrf_pp(r, c).value for r, c in zip(refs, cands)])))])
    print(f"metrics: {len(refs)} pairs -> {path}")
    return {}, {"input": args.input}, [path]


def cmd_generate(args, file_cfg):
    _check_unknown(file_cfg, ("beam", "max_len", "length_penalty"))
    model, _ = ParaphraseModel.load(_require(args.checkpoint, "checkpoint"))
    vocab = Vocab.load(_require(args.vocab, "vocabulary"))
    check_vocab(model, vocab)
    beam = args.beam or int(file_cfg.get("beam", 4))
    max_len = args.max_len or int(file_cfg.get("max_len", model.cfg.max_len))
    lp = args.length_penalty if args.length_penalty is not None else float(file_cfg.get("length_penalty", 0.6))
    cfg = BeamConfig(beam=beam, max_len=max_len, length_penalty=lp)
    cfg.validate()
    path = os.path.join(args.out_dir, "generations.jsonl")
    lines = []
    for ref in args.ref:
        res = one_shot(model, vocab, args.demo_ref, args.demo_cand, ref, cfg)
        lines.append(json.dumps(dict(res.to_dict(), ref=ref), sort_keys=True))
    text = "\n".join(lines) + "\n"
    atomic_write(path, text)
    sys.stdout.write(text)
    return ({"beam": asdict(cfg)}, {"checkpoint": args.checkpoint, "demo_ref": args.demo_ref,
                                    "demo_cand": args.demo_cand, "refs": args.ref}, [path])


SWEEP_COLUMNS = ("kind", "value", "n_train", "n_val", "abs_tau", "abs_r")


def _parse_grid(raw: str, kind: str) -> list:
    try:
        grid = [float(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"bad grid {raw!r}") from None
    if not grid:
        raise ConfigError("grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ConfigError("grid must be strictly ascending")
    if kind == "finetune_fraction":
        if any(g <= 0 or g > 1 for g in grid):
            raise ConfigError("fractions must lie in (0, 1]")
    else:
        if any(g < 1 or g != int(g) for g in grid):
            raise ConfigError("step counts must be positive integers")
        grid = [int(g) for g in grid]
    return grid


def _finetune_and_score(model, header, vocab, scored, fcfg, seed, frac):
    train, val = _finetune_split(scored, fcfg, seed, frac)
    finetune_run(model, vocab, train, val, fcfg, header=header)
    rep = evaluate_metric(val, LearnedMetric(model, vocab).prime([(p.ref, p.cand) for p in val]), "learned")
    return len(train), len(val), rep


def _sweep_point(kind, value, ckpt, vocab, scored, fcfg, seed, frac):
    """One grid point from a checkpoint on disk; independent of every other point."""
    model, header = ParaphraseModel.load(ckpt)
    check_vocab(model, vocab, header)
    n_tr, n_val, rep = _finetune_and_score(model, header, vocab, scored, fcfg, seed, frac)
    return kind, value, n_tr, n_val, rep.tau, rep.r


def _run_points(jobs, points):
    if jobs <= 1 or len(points) <= 1:
        return [_sweep_point(*pt) for pt in points]
    from concurrent.futures import ProcessPoolExecutor
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_sweep_point, *pt) for pt in points]
        return [f.result() for f in futures]


def cmd_sweep(args, file_cfg):
    kind = args.kind
    if kind not in ("pretrain_steps", "finetune_fraction"):
        raise ConfigError(f"unknown sweep kind {kind!r}")
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    ft_allowed = tuple("ft_" + n for n in FINETUNE_FIELDS)
    _check_unknown(file_cfg, ft_allowed + MODEL_FIELDS + PRETRAIN_FIELDS + ("grid",))
    grid = _parse_grid(args.grid or file_cfg.get("grid", ""), kind)
    scored = load_scored_tsv(_require(args.scored, "scored data"))
    defaults = {"val_fraction": 0.25}
    ft_file = {k[3:]: v for k, v in file_cfg.items() if k.startswith("ft_")}
    for k, v in defaults.items():
        ft_file.setdefault(k, str(v))
    ft_args = argparse.Namespace(**{n: getattr(args, "ft_" + n, None) for n in FINETUNE_FIELDS})
    fcfg = resolve(FinetuneConfig, FINETUNE_FIELDS, ft_args, ft_file, seed=args.seed)
    fcfg.validate()
    if kind == "finetune_fraction":
        ckpt = _require(args.checkpoint, "checkpoint")
        vocab = Vocab.load(_require(args.vocab, "vocabulary"))
        points = [(kind, frac, ckpt, vocab, scored, fcfg, args.seed, frac) for frac in grid]
    else:
        examples, _ = load_para_tsv(_require(args.corpus, "corpus"))
        vocab, _ = _load_or_build_vocab(args, examples)
        mcfg = resolve(ModelConfig, MODEL_FIELDS, args, file_cfg, vocab_size=len(vocab), seed=args.seed)
        pfile = {k: v for k, v in file_cfg.items() if k in PRETRAIN_FIELDS}
        pcfg = resolve(PretrainConfig, PRETRAIN_FIELDS, args, pfile, seed=args.seed)
        pcfg.steps = max(grid)
        pcfg.warmup = min(pcfg.warmup, min(grid))
        pcfg.validate()
        model = ParaphraseModel(mcfg)
        ckpt_dir = os.path.join(args.out_dir, "pretrain")
        res = pretrain_run(model, examples, vocab, pcfg, out_dir=ckpt_dir, save_at=set(grid))
        paths = {int(os.path.basename(c)[4:10]): c for c in res.checkpoints}
        points = [(kind, steps, paths[steps], vocab, scored, fcfg, args.seed, 1.0) for steps in grid]
    rows = _run_points(args.jobs, points)
    path = os.path.join(args.out_dir, "sweep.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for row in rows:
            w.writerow([row[0], row[1], row[2], row[3]] + ["" if v is None else repr(v) for v in row[4:]])
    for row in rows:
        print(f"sweep {row[0]}={row[1]}: n_train {row[2]} |tau| {row[4]} |r| {row[5]}")
    return {"kind": kind, "grid": grid, "finetune": asdict(fcfg)}, {"scored": args.scored}, [path]


def cmd_replay(args, file_cfg):
    """Re-run the command recorded in a manifest, into ``--out-dir``."""
    with open(_require(args.manifest, "manifest"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    argv = list(manifest["argv"])
    if "--out-dir" in argv:
        i = argv.index("--out-dir")
        argv[i + 1] = args.out_dir
    else:
        argv += ["--out-dir", args.out_dir]
    code = main(argv)
    if code:
        raise ParaRepError(f"replayed command exited with status {code}")
    return {"replayed": manifest["subcommand"]}, {"manifest": args.manifest}, []


COMMANDS = {
    "build-vocab": cmd_build_vocab, "synth": cmd_synth, "pretrain": cmd_pretrain, "finetune": cmd_finetune,
    "evaluate": cmd_evaluate, "metrics": cmd_metrics, "generate": cmd_generate, "sweep": cmd_sweep,
    "replay": cmd_replay,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(f"error[usage]: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", default=None, help="key=value file")
    common.add_argument("--out-dir", default=".")
    common.add_argument("--log-level", default="WARNING")

    p = _Parser(prog="pararep", description="Paraphrase representation pretraining, scoring and generation.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("build-vocab", parents=[common], help="build a vocabulary from a pair corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--max-size", type=int, default=None)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus or scored set")
    s.add_argument("--kind", choices=("pretrain", "scored"), default=None)
    s.add_argument("--n", type=int, default=None)

    s = sub.add_parser("pretrain", parents=[common], help="pretrain the paraphrase model")
    s.add_argument("--corpus", required=True)
    s.add_argument("--vocab", default=None)
    _add_fields(s, ModelConfig, MODEL_FIELDS)
    _add_fields(s, PretrainConfig, PRETRAIN_FIELDS)

    s = sub.add_parser("finetune", parents=[common], help="fine-tune the score head on scored pairs")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--vocab", required=True)
    s.add_argument("--scored", required=True)
    s.add_argument("--train-fraction", type=float, default=None)
    _add_fields(s, FinetuneConfig, FINETUNE_FIELDS)

    s = sub.add_parser("evaluate", parents=[common], help="correlate metrics with scores")
    s.add_argument("--scored", required=True)
    s.add_argument("--metric", action="append", default=None,
                   help="learned or one of " + ", ".join(PAIR_METRICS) + " (repeatable)")
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--vocab", default=None)

    s = sub.add_parser("metrics", parents=[common], help="score ref<TAB>cand lines with classical metrics")
    s.add_argument("--input", required=True)

    s = sub.add_parser("generate", parents=[common], help="one-shot conditional paraphrase generation")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--vocab", required=True)
    s.add_argument("--demo-ref", required=True)
    s.add_argument("--demo-cand", required=True)
    s.add_argument("--ref", action="append", required=True)
    s.add_argument("--beam", type=int, default=None)
    s.add_argument("--max-len", type=int, default=None)
    s.add_argument("--length-penalty", type=float, default=None)

    s = sub.add_parser("sweep", parents=[common], help="pretraining-steps or fine-tuning-fraction sweep")
    s.add_argument("--kind", required=True, choices=("pretrain_steps", "finetune_fraction"))
    s.add_argument("--grid", default=None, help="comma-separated ascending values")
    s.add_argument("--scored", required=True)
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--vocab", default=None)
    s.add_argument("--corpus", default=None)
    _add_fields(s, ModelConfig, MODEL_FIELDS)
    _add_fields(s, PretrainConfig, PRETRAIN_FIELDS)
    _add_fields(s, FinetuneConfig, FINETUNE_FIELDS, prefix="ft_")
    s.add_argument("--jobs", type=int, default=1, help="grid points to run in parallel processes")

    s = sub.add_parser("replay", parents=[common], help="re-run the command recorded in a manifest")
    s.add_argument("--manifest", required=True)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    started = _now()
    try:
        os.makedirs(args.out_dir, exist_ok=True)
        file_cfg = read_config_file(_require(args.config, "config file")) if args.config else {}
        config, inputs, outputs = COMMANDS[args.command](args, file_cfg)
        if args.command != "replay":
            RunManifest(args.command, config, args.seed, inputs, outputs, argv,
                        started=started, finished=_now()).write(args.out_dir)
    except FileNotFoundError as exc:
        sys.stderr.write(f"error[missing-file]: {exc}\n")
        return EXIT_MISSING
    except ParaRepError as exc:
        sys.stderr.write(f"error[{exc.category}]: {exc}\n")
        return exc.exit_code
    except (ValueError, TypeError) as exc:
        sys.stderr.write(f"error[config]: {exc}\n")
        return ConfigError.exit_code
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the documented exit code
        log.debug("unexpected failure", exc_info=True)
        sys.stderr.write(f"error[internal]: {type(exc).__name__}: {exc}\n")
        return EXIT_ERROR
    return EXIT_OK
