"""Corpus schemas, TSV loaders and the synthetic paraphrase corpus.

The synthetic grammar produces English subject-verb-object sentences::

    the [adjective] <subject> <verb-past> the <object> <modifier>

and rule-based transforms turn a reference into a candidate of a named
paraphrase type.  Every transform leaves a detectable trace (see
``detect``), which the tests use to audit the generator.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError
from .text import tokenize

log = logging.getLogger(__name__)

TRANSFORMS = ("negation", "summary", "passive", "conditional_perfect", "personal",
              "informal", "identity", "unrelated")
CONTRADICTING = frozenset({"negation", "unrelated"})
MEANING_PRESERVING = tuple(t for t in TRANSFORMS if t not in CONTRADICTING)
NEGATION_MARKER = "not"
SLANG_MARKERS = frozenset({"super", "real", "kinda", "totally", "pretty"})


@dataclass(frozen=True)
class ParaExample:
    ref: str
    cand: str
    label: int | None = None
    source: str = ""


@dataclass(frozen=True)
class ScoredPair:
    ref: str
    cand: str
    score: float
    group: str


@dataclass(frozen=True)
class SynthSpec:
    transform: str
    severity: int = 0
    seed: int = 0
    count: int = 1
    labeled_fraction: float = 1.0 / 3.0
    n_groups: int = 4

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ConfigError(f"unknown transform {self.transform!r}")
        if not 0 <= self.severity <= 4:
            raise ConfigError("severity must lie in 0..4")
        if self.count < 1:
            raise ConfigError("count must be >= 1")


@dataclass
class LoadReport:
    lines: int = 0
    malformed: int = 0
    malformed_lines: tuple = ()


# ---------------------------------------------------------------- entailment labels

_LABEL_MAP = {"entailment": 1, "contradiction": 0, "neutral": 0}


def map_entailment_label(raw: str) -> int:
    """Three-way NLI label to binary: entailment -> 1, otherwise 0."""
    try:
        return _LABEL_MAP[raw.strip().lower()]
    except KeyError:
        raise FormatError(f"unknown entailment label {raw!r}") from None


def _parse_label(raw: str):
    raw = raw.strip()
    if raw == "":
        return None
    if raw in ("0", "1"):
        return int(raw)
    return map_entailment_label(raw)


# ---------------------------------------------------------------- TSV I/O

def load_para_tsv(path, max_malformed: float = 0.10) -> tuple[list[ParaExample], LoadReport]:
    """Read ``ref<TAB>cand[<TAB>label[<TAB>source]]`` lines.

    Malformed lines are skipped and counted; more than ``max_malformed`` of
    the non-empty lines being malformed is a format error.
    """
    examples, bad = [], []
    n = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            n += 1
            cols = line.split("\t")
            try:
                if not 2 <= len(cols) <= 4:
                    raise FormatError("expected 2 to 4 columns")
                ref, cand = cols[0], cols[1]
                if not tokenize(ref) or not tokenize(cand):
                    raise FormatError("empty text")
                label = _parse_label(cols[2]) if len(cols) > 2 else None
                source = cols[3] if len(cols) > 3 else ""
            except FormatError:
                bad.append(lineno)
                continue
            examples.append(ParaExample(ref, cand, label, source))
    report = LoadReport(lines=n, malformed=len(bad), malformed_lines=tuple(bad))
    if bad:
        log.warning("%s: %d malformed line(s) skipped", path, len(bad))
    if n and len(bad) / n > max_malformed:
        raise FormatError(f"{path}: {len(bad)} of {n} lines malformed")
    return examples, report


def save_para_tsv(path, examples) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for ex in examples:
            label = "" if ex.label is None else str(ex.label)
            fh.write(f"{ex.ref}\t{ex.cand}\t{label}\t{ex.source}\n")


def load_scored_tsv(path) -> list[ScoredPair]:
    """Read ``group<TAB>ref<TAB>cand<TAB>score`` lines."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 4:
                raise FormatError(f"{path}:{lineno}: expected 4 columns, got {len(cols)}")
            group, ref, cand, raw = cols
            try:
                score = float(raw)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: unparsable score {raw!r}") from None
            if not math.isfinite(score):
                raise FormatError(f"{path}:{lineno}: non-finite score")
            if not group:
                raise FormatError(f"{path}:{lineno}: empty group")
            pairs.append(ScoredPair(ref, cand, score, group))
    if not pairs:
        log.warning("%s: no scored pairs", path)
    return pairs


def save_scored_tsv(path, pairs) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            fh.write(f"{p.group}\t{p.ref}\t{p.cand}\t{p.score!r}\n")


# ---------------------------------------------------------------- lexicon

@dataclass(frozen=True)
class Lexicon:
    subjects: tuple
    verbs: tuple  # (base, past) pairs
    objects: tuple
    modifiers: tuple
    adjectives: tuple = ()
    informal: tuple = ()  # (word, slang phrase) pairs

    def __post_init__(self):
        for name in ("subjects", "verbs", "objects", "modifiers"):
            if not getattr(self, name):
                raise ConfigError(f"lexicon has no {name}")

    @property
    def slang(self) -> dict:
        return dict(self.informal)

    def all_words(self) -> list[str]:
        words = set(self.subjects) | set(self.objects) | set(self.modifiers) | set(self.adjectives)
        for base, past in self.verbs:
            words.update((base, past))
        return sorted(words)

    def word_classes(self) -> dict:
        """Map each content word to the tuple of words in its class."""
        groups = (self.subjects, self.objects, self.modifiers, self.adjectives,
                  tuple(b for b, _ in self.verbs), tuple(p for _, p in self.verbs))
        out: dict = {}
        for group in groups:
            if len(group) < 2:
                continue
            for w in group:
                out.setdefault(w, group)
        return out

    @classmethod
    def from_dir(cls, directory) -> "Lexicon":
        d = Path(directory)

        def read(name):
            p = d / f"{name}.txt"
            if not p.exists():
                return []
            return [ln.strip() for ln in p.read_text(encoding="utf-8").splitlines() if ln.strip()]

        verbs = tuple(tuple(v.split()) for v in read("verbs"))
        informal = tuple(tuple(line.split("\t", 1)) for line in read("informal"))
        return cls(tuple(read("subjects")), verbs, tuple(read("objects")), tuple(read("modifiers")),
                   tuple(read("adjectives")), informal)


def default_lexicon() -> Lexicon:
    return Lexicon.from_dir(resources.files("pararep") / "lexicon")


# ---------------------------------------------------------------- grammar

@dataclass(frozen=True)
class Clause:
    subject: str
    adjective: str | None
    verb: int
    obj: str
    modifier: str


def sample_clause(rng: np.random.Generator, lex: Lexicon, p_adjective: float = 0.5) -> Clause:
    subj = lex.subjects[rng.integers(len(lex.subjects))]
    adj = None
    if lex.adjectives and rng.random() < p_adjective:
        adj = lex.adjectives[rng.integers(len(lex.adjectives))]
    verb = int(rng.integers(len(lex.verbs)))
    obj = lex.objects[rng.integers(len(lex.objects))]
    mod = lex.modifiers[rng.integers(len(lex.modifiers))]
    return Clause(subj, adj, verb, obj, mod)


def _np(c: Clause, with_adj=True) -> list[str]:
    return ["the"] + ([c.adjective] if (with_adj and c.adjective) else []) + [c.subject]


def render(c: Clause, lex: Lexicon) -> str:
    return " ".join(_np(c) + [lex.verbs[c.verb][1], "the", c.obj, c.modifier])


def apply_transform(kind: str, c: Clause, lex: Lexicon, rng: np.random.Generator) -> str:
    base, past = lex.verbs[c.verb]
    if kind == "identity":
        return render(c, lex)
    if kind == "negation":
        return " ".join(_np(c) + ["did", NEGATION_MARKER, base, "the", c.obj, c.modifier])
    if kind == "summary":
        return " ".join(["the", c.subject, past, "the", c.obj])
    if kind == "passive":
        return " ".join(["the", c.obj, "was", past, "by"] + _np(c) + [c.modifier])
    if kind == "conditional_perfect":
        return " ".join(_np(c) + ["would", "have", past, "the", c.obj, c.modifier])
    if kind == "personal":
        return " ".join(["we", past, "the", c.obj, c.modifier])
    if kind == "informal":
        slang = lex.slang.get(c.modifier)
        if slang is None:
            raise ConfigError(f"no informal substitution for modifier {c.modifier!r}")
        return " ".join(_np(c) + [past, "the", c.obj, slang])
    if kind == "unrelated":
        while True:
            o = sample_clause(rng, lex)
            if o.subject != c.subject and o.verb != c.verb and o.obj != c.obj:
                return render(o, lex)
    raise ConfigError(f"unknown transform {kind!r}")


def corrupt(text: str, level: int, rng: np.random.Generator, lex: Lexicon, p_fluent: float = 0.0) -> str:
    """Replace ``level`` distinct content words.

    Each replacement is, with probability ``p_fluent``, another word of the
    same class (a fluent content error such as a wrong subject or verb) and
    otherwise any lexicon word (a disfluency).  The default makes every
    replacement a disfluency, which is what the scored sets use.  Function words
    are never touched; with fewer content words than ``level`` all of them
    are replaced.
    """
    toks = text.split()
    if level <= 0 or not toks:
        return text
    classes = lex.word_classes()
    content = [i for i, t in enumerate(toks) if t in classes]
    if not content:
        return text
    words = lex.all_words()
    picked = rng.choice(len(content), size=min(level, len(content)), replace=False)
    for p in sorted(content[int(i)] for i in picked):
        pool = classes[toks[p]] if rng.random() < p_fluent else words
        while True:
            w = pool[rng.integers(len(pool))]
            if w != toks[p]:
                toks[p] = w
                break
    return " ".join(toks)


def synthetic_score(severity: int, rng: np.random.Generator, noise: float = 0.05) -> float:
    return float(np.clip(1.0 - 0.2 * severity + rng.normal(0.0, noise), 0.0, 1.0))


def _one(kind, severity, rng, lex, labeled_fraction, n_groups, source):
    c = sample_clause(rng, lex)
    ref = render(c, lex)
    cand = corrupt(apply_transform(kind, c, lex, rng), severity, rng, lex)
    label = 0 if kind in CONTRADICTING else 1
    keep_label = rng.random() < labeled_fraction
    score = synthetic_score(severity, rng)
    group = f"syn{int(rng.integers(n_groups))}-en"
    return (ParaExample(ref, cand, label if keep_label else None, source),
            ScoredPair(ref, cand, score, group))


def synth_generate(spec: SynthSpec, lexicon: Lexicon | None = None):
    """``spec.count`` examples of one transform at one severity.

    Returns ``(para_examples, scored_pairs)`` built from the same pairs.
    """
    lex = lexicon or default_lexicon()
    rng = np.random.default_rng([spec.seed, TRANSFORMS.index(spec.transform), spec.severity])
    paras, scored = [], []
    for _ in range(spec.count):
        p, s = _one(spec.transform, spec.severity, rng, lex, spec.labeled_fraction, spec.n_groups,
                    f"synth:{spec.transform}")
        paras.append(p)
        scored.append(s)
    return paras, scored


def make_pretrain_corpus(n: int, seed: int, lexicon: Lexicon | None = None, transforms=TRANSFORMS,
                         labeled_fraction: float = 1.0 / 3.0) -> list[ParaExample]:
    """Mixed-type severity-0 corpus; transform types drawn uniformly."""
    lex = lexicon or default_lexicon()
    rng = np.random.default_rng([seed, 101])
    out = []
    for _ in range(n):
        kind = transforms[rng.integers(len(transforms))]
        p, _ = _one(kind, 0, rng, lex, labeled_fraction, 1, f"synth:{kind}")
        out.append(p)
    return out


def make_scored_set(n: int, seed: int, lexicon: Lexicon | None = None, transforms=MEANING_PRESERVING,
                    n_groups: int = 4) -> list[ScoredPair]:
    """Scored pairs with severities drawn uniformly from 0..4."""
    lex = lexicon or default_lexicon()
    rng = np.random.default_rng([seed, 202])
    out = []
    for _ in range(n):
        kind = transforms[rng.integers(len(transforms))]
        sev = int(rng.integers(5))
        _, s = _one(kind, sev, rng, lex, 0.0, n_groups, "")
        out.append(s)
    return out


# ---------------------------------------------------------------- transform audit

def detect(kind: str, ref: str, cand: str) -> bool:
    """Rule-based detector for the trace each transform leaves."""
    r, c = tokenize(ref), tokenize(cand)
    if kind == "identity":
        return r == c
    if kind == "negation":
        return NEGATION_MARKER in c and NEGATION_MARKER not in r
    if kind == "summary":
        if len(c) >= len(r):
            return False
        it = iter(r)
        return all(tok in it for tok in c)
    if kind == "passive":
        return "was" in c and "by" in c and "by" not in r
    if kind == "conditional_perfect":
        return any(c[i] == "would" and c[i + 1] == "have" for i in range(len(c) - 1))
    if kind == "personal":
        return bool(c) and c[0] == "we" and (not r or r[0] != "we")
    if kind == "informal":
        return any(t in SLANG_MARKERS for t in c) and not any(t in SLANG_MARKERS for t in r)
    if kind == "unrelated":
        content = [t for t in r if t != "the"]
        shared = sum(1 for t in set(content) if t in set(c))
        return shared < 0.5 * len(set(content))
    raise ConfigError(f"unknown transform {kind!r}")
