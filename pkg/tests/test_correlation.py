import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from pararep.correlation import (evaluate_metric, kendall_tau_b, pearson, report_markdown,
                                 write_report_csv)
from pararep.data import ScoredPair
from pararep.errors import ContractError, UndefinedCorrelationError


def test_pearson_examples():
    x = np.arange(10.0)
    assert pearson(x, 2 * x + 1) == pytest.approx(1.0, abs=1e-15)
    assert pearson(x, -x) == pytest.approx(-1.0, abs=1e-15)


def test_kendall_examples():
    x = [1, 2, 3, 4, 5]
    assert kendall_tau_b(x, [2, 4, 6, 8, 10]) == 1.0
    assert kendall_tau_b(x, x[::-1]) == -1.0


def test_constant_inputs_are_undefined():
    with pytest.raises(UndefinedCorrelationError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(UndefinedCorrelationError):
        kendall_tau_b([1, 2, 3], [4, 4, 4])


def test_length_checks():
    with pytest.raises(ContractError):
        pearson([1, 2], [1, 2, 3])
    with pytest.raises(ContractError):
        kendall_tau_b([1], [1])


def test_oracles_on_random_vectors_with_ties():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 51))
        x = rng.integers(0, 6, size=n).astype(float)
        y = rng.integers(0, 6, size=n).astype(float) + rng.normal(0, 1, size=n) * (rng.random() < 0.5)
        try:
            expected_tau = oracles.kendall_b(list(x), list(y))
            expected_r = oracles.pearson(list(x), list(y))
        except ZeroDivisionError:
            continue
        assert abs(kendall_tau_b(x, y) - expected_tau) < 1e-12
        assert abs(pearson(x, y) - expected_r) < 1e-12


vec = st.lists(st.integers(-5, 5), min_size=3, max_size=30)


@given(vec, st.data())
@settings(max_examples=150, deadline=None)
def test_invariances(x, data):
    y = data.draw(st.lists(st.integers(-5, 5), min_size=len(x), max_size=len(x)))
    x, y = np.array(x, float), np.array(y, float)
    if len(set(x)) < 2 or len(set(y)) < 2:
        return
    r, tau = pearson(x, y), kendall_tau_b(x, y)
    assert pearson(3 * x + 2, y) == pytest.approx(r, abs=1e-12)
    assert pearson(-2 * x + 1, y) == pytest.approx(-r, abs=1e-12)
    assert kendall_tau_b(np.exp(x), y) == pytest.approx(tau, abs=1e-12)
    assert kendall_tau_b(x, y ** 3) == pytest.approx(tau, abs=1e-12)
    perm = np.random.default_rng(len(x)).permutation(len(x))
    assert pearson(x[perm], y[perm]) == pytest.approx(r, abs=1e-12)
    assert kendall_tau_b(x[perm], y[perm]) == pytest.approx(tau, abs=1e-12)
    assert -1.0 <= tau <= 1.0 and -1.0 <= r <= 1.0


def _pairs(groups):
    out = []
    for g, scores in groups.items():
        for i, s in enumerate(scores):
            out.append(ScoredPair(f"ref {g} {i}", f"cand {s}", s, g))
    return out


def test_evaluate_exact_metric():
    scored = _pairs({"de-en": [0.1, 0.5, 0.9], "lv-en": [0.3, 0.2, 0.8, 0.4]})
    rep = evaluate_metric(scored, lambda r, c: float(c.split()[1]), "oracle")
    assert rep.tau == 1.0 and rep.r == pytest.approx(1.0)
    assert [g.group for g in rep.groups] == ["de-en", "lv-en"]


def test_evaluate_constant_metric_flags_every_group():
    scored = _pairs({"a": [0.1, 0.5], "b": [0.2, 0.9, 0.3]})
    rep = evaluate_metric(scored, lambda r, c: 0.5, "const")
    assert rep.degenerate and rep.tau is None
    assert sorted(rep.skipped) == ["a", "b"]
    assert all(g.note == "degenerate" for g in rep.groups)


def test_evaluate_average_is_unweighted_mean_of_group_oracles():
    rng = np.random.default_rng(1)
    groups = {"g1": list(rng.random(6)), "g2": list(rng.random(15))}
    scored = _pairs(groups)
    noise = {p: float(rng.random()) for p in scored}
    metric = lambda r, c: float(c.split()[1]) + noise[next(p for p in scored if p.ref == r)]
    rep = evaluate_metric(scored, metric, "m")
    per = []
    for g in ("g1", "g2"):
        items = [p for p in scored if p.group == g]
        xs = [metric(p.ref, p.cand) for p in items]
        ys = [p.score for p in items]
        per.append((abs(oracles.kendall_b(xs, ys)), abs(oracles.pearson(xs, ys))))
    assert rep.tau == pytest.approx((per[0][0] + per[1][0]) / 2, abs=1e-12)
    assert rep.r == pytest.approx((per[0][1] + per[1][1]) / 2, abs=1e-12)


def test_small_group_skipped_with_warning(caplog):
    scored = _pairs({"big": [0.1, 0.4, 0.8], "tiny": [0.5]})
    rep = evaluate_metric(scored, lambda r, c: float(c.split()[1]), "m")
    assert rep.skipped == ["tiny"]
    assert rep.tau == 1.0
    assert "tiny" in caplog.text


def test_report_outputs(tmp_path):
    scored = _pairs({"a": [0.1, 0.5, 0.9]})
    reps = [evaluate_metric(scored, lambda r, c: float(c.split()[1]), "exact"),
            evaluate_metric(scored, lambda r, c: 0.0, "flat")]
    path = tmp_path / "r.csv"
    write_report_csv(reps, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "metric,group,n,abs_tau,abs_r,note"
    assert len(lines) == 1 + 2 + 2
    md = report_markdown(reps).splitlines()
    assert md[0].startswith("| Metric") and "n/a" in md[3]
    assert len({len(line) for line in md}) == 1
