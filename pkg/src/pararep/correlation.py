"""Pearson and Kendall tau-b, and per-group metric reports."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, UndefinedCorrelationError

log = logging.getLogger(__name__)


def _check(xs, ys):
    x = np.asarray(xs, dtype=np.float64).reshape(-1)
    y = np.asarray(ys, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise ContractError(f"length mismatch: {x.shape[0]} vs {y.shape[0]}")
    if x.shape[0] < 2:
        raise ContractError("correlation needs at least two points")
    return x, y


def pearson(xs, ys) -> float:
    """Sample Pearson correlation; raises if either vector is constant."""
    x, y = _check(xs, ys)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    syy = float(np.dot(dy, dy))
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("pearson is undefined for a constant vector")
    r = float(np.dot(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _merge_count(a: np.ndarray) -> int:
    """Number of inversions in ``a`` (bottom-up merge sort)."""
    a = a.copy()
    n = a.shape[0]
    buf = np.empty_like(a)
    swaps = 0
    width = 1
    while width < n:
        for lo in range(0, n - width, 2 * width):
            mid = lo + width
            hi = min(lo + 2 * width, n)
            left, right = a[lo:mid], a[mid:hi]
            # for each right element, count left elements strictly greater
            pos = np.searchsorted(left, right, side="right")
            swaps += int((left.shape[0] - pos).sum())
            merged = np.concatenate([left, right])
            merged.sort(kind="mergesort")
            buf[lo:hi] = merged
            a[lo:hi] = buf[lo:hi]
        width *= 2
    return swaps


def _tie_pairs(v: np.ndarray) -> int:
    _, counts = np.unique(v, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def kendall_tau_b(xs, ys) -> float:
    """Tau-b in O(n log n) (Knight's method)."""
    x, y = _check(xs, ys)
    n = x.shape[0]
    n0 = n * (n - 1) // 2
    order = np.lexsort((y, x))
    x, y = x[order], y[order]
    tx = _tie_pairs(x)
    ty = _tie_pairs(y)
    # pairs tied in both
    txy = 0
    start = 0
    for i in range(1, n + 1):
        if i == n or x[i] != x[start] or y[i] != y[start]:
            k = i - start
            txy += k * (k - 1) // 2
            start = i
    if tx == n0 or ty == n0:
        raise UndefinedCorrelationError("kendall tau-b is undefined when one side is all ties")
    # y is sorted within x-ties, so inversions of y count discordant pairs exactly
    discordant = _merge_count(y)
    concordant = n0 - tx - ty + txy - discordant
    denom = math.sqrt((n0 - tx) * (n0 - ty))
    tau = (concordant - discordant) / denom
    return max(-1.0, min(1.0, tau))


# ---------------------------------------------------------------- reports

@dataclass
class GroupStat:
    group: str
    n: int
    tau: float | None
    r: float | None
    note: str = ""


@dataclass
class MetricReport:
    metric: str
    groups: list = field(default_factory=list)
    tau: float | None = None
    r: float | None = None
    skipped: list = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return self.tau is None

    def rows(self):
        for g in self.groups:
            yield [self.metric, g.group, g.n, g.tau, g.r, g.note]
        yield [self.metric, "mean", sum(g.n for g in self.groups), self.tau, self.r, ""]


def evaluate_metric(scored, metric, name: str = "metric") -> MetricReport:
    """Per-group |tau| and |r| of ``metric(ref, cand)`` against the scores,
    then their unweighted mean over usable groups (sorted by name)."""
    by_group: dict = {}
    for p in scored:
        by_group.setdefault(p.group, []).append(p)
    report = MetricReport(name)
    for g in sorted(by_group):
        items = by_group[g]
        if len(items) < 2:
            log.warning("group %s has %d item(s); skipped", g, len(items))
            report.groups.append(GroupStat(g, len(items), None, None, "too small"))
            report.skipped.append(g)
            continue
        preds = [float(metric(p.ref, p.cand)) for p in items]
        human = [p.score for p in items]
        try:
            tau = abs(kendall_tau_b(preds, human))
            r = abs(pearson(preds, human))
        except UndefinedCorrelationError:
            log.warning("group %s: correlation undefined (constant scores)", g)
            report.groups.append(GroupStat(g, len(items), None, None, "degenerate"))
            report.skipped.append(g)
            continue
        report.groups.append(GroupStat(g, len(items), tau, r))
    usable = [g for g in report.groups if g.tau is not None]
    if usable:
        report.tau = sum(g.tau for g in usable) / len(usable)
        report.r = sum(g.r for g in usable) / len(usable)
    return report


REPORT_COLUMNS = ("metric", "group", "n", "abs_tau", "abs_r", "note")


def _fmt(v):
    return "" if v is None else repr(v) if isinstance(v, float) else str(v)


def write_report_csv(reports, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for rep in reports:
            for row in rep.rows():
                w.writerow([_fmt(v) for v in row])


def report_markdown(reports) -> str:
    """Aligned table with one row per metric and columns |tau|, |r|."""
    cells = [("Metric", "|tau|", "|r|")]
    for rep in reports:
        cells.append((rep.metric,
                      "n/a" if rep.tau is None else f"{rep.tau:.3f}",
                      "n/a" if rep.r is None else f"{rep.r:.3f}"))
    widths = [max(len(row[i]) for row in cells) for i in range(3)]
    lines = []
    for k, row in enumerate(cells):
        lines.append("| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |")
        if k == 0:
            lines.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
    return "\n".join(lines) + "\n"
