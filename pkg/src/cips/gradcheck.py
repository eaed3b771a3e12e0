"""Finite-difference verification of reverse-mode gradients.

The checker re-evaluates a user-supplied scalar builder with each checked
parameter entry nudged by +/-h and compares the central difference against
the analytic gradient. Builders must be deterministic: the first thing the
checker does is evaluate twice and require bit-identical values, because a
builder that rolls its own randomness would produce garbage comparisons
that look like gradient bugs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .autodiff import Tensor, backward, no_grad

__all__ = ["GradCheckEntry", "GradCheckReport", "finite_diff_check"]


@dataclass
class GradCheckEntry:
    name: str
    n_checked: int
    max_rel_err: float
    worst_index: tuple[int, ...]
    passed: bool


@dataclass
class GradCheckReport:
    h: float
    tolerance: float
    entries: list[GradCheckEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    @property
    def max_rel_err(self) -> float:
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def summary(self) -> str:
        lines = [f"finite-diff check  h={self.h:g}  tol={self.tolerance:g}"]
        for e in self.entries:
            mark = "ok " if e.passed else "FAIL"
            lines.append(
                f"  [{mark}] {e.name}: {e.n_checked} entries, "
                f"max rel err {e.max_rel_err:.3e} at {e.worst_index}")
        return "\n".join(lines)


def finite_diff_check(build: Callable[[], Tensor],
                      params: Mapping[str, Tensor],
                      h: float = 1e-5,
                      tolerance: float = 1e-4,
                      max_entries_per_param: int | None = None,
                      seed: int = 0,
                      rel_floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients of ``build()`` against central differences.

    build: zero-argument callable returning a scalar Tensor; it must read
        the live ``params`` tensors so that mutating their buffers changes
        the result.
    params: name -> leaf tensor with requires_grad=True.
    max_entries_per_param: cap on entries checked per parameter; entries
        are subsampled without replacement using ``seed``. None checks all.

    Relative error per entry is |a - n| / max(|a|, |n|, rel_floor).
    """
    first = build()
    if first.shape != ():
        raise ValueError(f"finite_diff_check: build() must return a scalar, got {first.shape}")
    second = build()
    if first.data.tobytes() != second.data.tobytes():
        raise ValueError(
            "finite_diff_check: build() is not deterministic; "
            "two evaluations differ at the bit level")
    analytic = backward(second)

    rng = np.random.default_rng(seed)
    report = GradCheckReport(h=h, tolerance=tolerance)
    for name, p in params.items():
        if not p.requires_grad:
            raise ValueError(f"finite_diff_check: parameter {name!r} has requires_grad=False")
        a = analytic.get(p)
        a_data = np.zeros(p.shape, dtype=p.data.dtype) if a is None else a.data
        flat = p.data.reshape(-1)
        n_total = flat.size
        if max_entries_per_param is not None and n_total > max_entries_per_param:
            idx = np.sort(rng.choice(n_total, size=max_entries_per_param, replace=False))
        else:
            idx = np.arange(n_total)
        max_err = 0.0
        worst = (0,)
        for i in idx:
            keep = flat[i]
            flat[i] = keep + h
            with no_grad():
                f_plus = build().item()
            flat[i] = keep - h
            with no_grad():
                f_minus = build().item()
            flat[i] = keep
            numeric = (f_plus - f_minus) / (2.0 * h)
            a_i = float(a_data.reshape(-1)[i])
            err = abs(a_i - numeric) / max(abs(a_i), abs(numeric), rel_floor)
            if err > max_err:
                max_err = err
                worst = np.unravel_index(int(i), p.shape) if p.shape else (0,)
        report.entries.append(GradCheckEntry(
            name=name, n_checked=int(len(idx)), max_rel_err=float(max_err),
            worst_index=tuple(int(w) for w in worst), passed=max_err <= tolerance))
    return report
