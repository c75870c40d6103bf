"""Central finite-difference gradient checking.

During a check every parameter is promoted to float64 (its values are the
exact float32 values), so both the analytic gradient and the differences are
accumulated in 64-bit arithmetic.  Parameters are restored afterwards.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import backward, no_grad


@dataclass
class GradCheckReport:
    errors: dict = field(default_factory=dict)
    checked: dict = field(default_factory=dict)
    tolerance: float = 1e-3

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    @property
    def failures(self) -> dict:
        return {k: e for k, e in self.errors.items() if e >= self.tolerance}


def grad_check(closure, params, tolerance: float = 1e-3, step: float = 1e-3,
               max_entries: int | None = None, seed: int = 0, floor: float = 1e-8) -> GradCheckReport:
    """Compare analytic and central-difference gradients.

    ``params`` is a mapping name -> Tensor (or a list, named by position).
    ``closure()`` must rebuild the scalar loss from the current parameter
    values.  With ``max_entries`` only that many randomly chosen coordinates
    per parameter are differenced.  The per-parameter error is
    ||analytic - numeric|| / max(||analytic||, ||numeric||, floor).
    """
    if not isinstance(params, dict):
        params = {f"p{i}": p for i, p in enumerate(params)}
    rng = np.random.default_rng(seed)
    saved = {k: p.data for k, p in params.items()}
    try:
        for p in params.values():
            p.data = p.data.astype(np.float64)
            p.grad = None
        loss = closure()
        backward(loss)
        report = GradCheckReport(tolerance=tolerance)
        for name, p in params.items():
            analytic = np.zeros_like(p.data) if p.grad is None else p.grad
            flat = p.data.reshape(-1)
            n = flat.size
            idx = np.arange(n) if max_entries is None or n <= max_entries else rng.choice(n, max_entries, replace=False)
            numeric = np.empty(len(idx))
            with no_grad():
                for j, i in enumerate(idx):
                    orig = flat[i]
                    flat[i] = orig + step
                    f_plus = float(closure().data)
                    flat[i] = orig - step
                    f_minus = float(closure().data)
                    flat[i] = orig
                    numeric[j] = (f_plus - f_minus) / (2.0 * step)
            a = analytic.reshape(-1)[idx]
            denom = max(np.linalg.norm(a), np.linalg.norm(numeric), floor)
            report.errors[name] = float(np.linalg.norm(a - numeric) / denom)
            report.checked[name] = len(idx)
        return report
    finally:
        for k, p in params.items():
            p.data = saved[k]
            p.grad = None
