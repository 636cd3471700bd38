"""Quantile-based selection weights.

A weighting scheme is a non-increasing function ``w`` on [0, 1].  Given a
batch of N objective values (minimization convention: smaller is better),
sample ``i`` occupies the rank interval [rk-/N, rk+/N), where

    rk-(i) = #{j : f(x_j) < f(x_i)},    rk+(i) = #{j : f(x_j) <= f(x_i)},

and its weight is the average of ``w`` over that interval:

    w_hat_i = integral(w, rk-/N, rk+/N) / (rk+ - rk-).

This handles ties exactly and deterministically; with distinct values and a
piecewise-constant ``w`` whose breakpoints sit on the 1/N grid it reduces to
the familiar w((rk + 1/2) / N) / N.  The total weight mass is always exactly
the integral of ``w`` over [0, 1], regardless of ties.

Weights depend on objective values only through their ranks, so applying any
strictly increasing transform to the objective leaves them unchanged.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "WeightScheme",
    "RankedWeights",
    "truncation",
    "signed_median",
    "table",
    "compute_quantile_weights",
    "pbil_schedule",
    "schedule_variance",
]


@dataclass(frozen=True)
class WeightScheme:
    """Non-increasing selection function w on [0, 1].

    kind:   "truncation" (1 below q0, 0 above), "signed_median" (+1 below
            1/2, -1 above), or "table" (right-continuous step function).
    q0:     selection quantile, truncation only.
    nodes:  ((q, value), ...) step breakpoints, table only; first q must be
            0.0, quantiles increasing, values non-increasing.
    shift:  additive constant on w.  Shifting w leaves the flow unchanged
            and only alters the sampling noise of finite-N updates, so it is
            exposed as a free parameter and never optimized here.
    scale:  multiplicative amplitude (max |w| before shift).
    """

    kind: str
    q0: float = 0.5
    nodes: tuple = ()
    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind == "truncation":
            if not (0.0 < self.q0 <= 1.0):
                raise ValueError("truncation quantile must be in (0, 1]")
        elif self.kind == "signed_median":
            pass
        elif self.kind == "table":
            if not self.nodes or self.nodes[0][0] != 0.0:
                raise ValueError("table nodes must start at quantile 0.0")
            qs = [q for q, _ in self.nodes]
            vs = [v for _, v in self.nodes]
            if any(b <= a for a, b in zip(qs, qs[1:])):
                raise ValueError("table quantiles must be increasing")
            if any(b > a for a, b in zip(vs, vs[1:])):
                raise ValueError("table values must be non-increasing")
            if qs[-1] >= 1.0:
                raise ValueError("table quantiles must lie below 1.0")
        else:
            raise ValueError(f"unknown weight scheme kind: {self.kind!r}")

    # -- pointwise evaluation -------------------------------------------
    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        if self.kind == "truncation":
            base = np.where(q <= self.q0, 1.0, 0.0)
        elif self.kind == "signed_median":
            # w(1/2) := 0 keeps the midpoint evaluation antisymmetric.
            base = np.sign(0.5 - q)
        else:
            qs = np.array([n[0] for n in self.nodes])
            vs = np.array([n[1] for n in self.nodes])
            idx = np.searchsorted(qs, q, side="right") - 1
            base = vs[idx]
        out = self.scale * base + self.shift
        return float(out) if out.ndim == 0 else out

    # -- exact integrals -------------------------------------------------
    def integral(self, a, b):
        """Exact integral of w over [a, b] for 0 <= a <= b <= 1."""
        if not (0.0 <= a <= b <= 1.0):
            raise ValueError("integration bounds must satisfy 0 <= a <= b <= 1")
        if self.kind == "truncation":
            base = max(0.0, min(b, self.q0) - a)
        elif self.kind == "signed_median":
            below = max(0.0, min(b, 0.5) - a)
            above = max(0.0, b - max(a, 0.5))
            base = below - above
        else:
            base = 0.0
            qs = [n[0] for n in self.nodes] + [1.0]
            vs = [n[1] for n in self.nodes]
            for lo, hi, v in zip(qs[:-1], qs[1:], vs):
                base += v * max(0.0, min(b, hi) - max(a, lo))
        return self.scale * base + self.shift * (b - a)

    def mean(self):
        """integral of w over [0, 1]."""
        return self.integral(0.0, 1.0)

    def second_moment(self):
        if self.kind == "truncation":
            sq = self.q0 * self.scale**2
            cross = self.q0 * self.scale
        elif self.kind == "signed_median":
            sq = self.scale**2
            cross = 0.0
        else:
            qs = [n[0] for n in self.nodes] + [1.0]
            vs = [n[1] for n in self.nodes]
            sq = self.scale**2 * sum(v * v * (hi - lo) for lo, hi, v in zip(qs[:-1], qs[1:], vs))
            cross = self.scale * sum(v * (hi - lo) for lo, hi, v in zip(qs[:-1], qs[1:], vs))
        return sq + 2.0 * self.shift * cross + self.shift**2

    def variance(self):
        """Var of w under the uniform law on [0, 1]; shift-invariant."""
        m = self.mean()
        return max(0.0, self.second_moment() - m * m)

    @property
    def bound(self):
        """max |w| over [0, 1]."""
        if self.kind == "truncation":
            vals = (0.0, 1.0)
        elif self.kind == "signed_median":
            vals = (-1.0, 1.0)
        else:
            vals = tuple(v for _, v in self.nodes)
        return max(abs(self.scale * v + self.shift) for v in vals)

    def shifted(self, c):
        """Same scheme with w replaced by w + c."""
        return WeightScheme(self.kind, self.q0, self.nodes, self.shift + c, self.scale)


def truncation(q0, shift=0.0):
    return WeightScheme("truncation", q0=q0, shift=shift)


def signed_median(shift=0.0, scale=1.0):
    return WeightScheme("signed_median", shift=shift, scale=scale)


def table(nodes, shift=0.0):
    return WeightScheme("table", nodes=tuple((float(q), float(v)) for q, v in nodes), shift=shift)


@dataclass
class RankedWeights:
    """Per-sample weights plus the tie structure they were computed from."""

    weights: np.ndarray
    tie_groups: list = field(default_factory=list)

    @property
    def total(self):
        return float(self.weights.sum())

    def normalized(self):
        """Weights rescaled to sum to one (for ML-style updates)."""
        s = self.weights.sum()
        if s == 0.0:
            raise ValueError("cannot normalize: weights sum to zero")
        return RankedWeights(self.weights / s, self.tie_groups)


def compute_quantile_weights(objective_values, scheme):
    """Rank a batch of objective values and return their selection weights.

    Minimization convention.  Ties receive the exact average of ``w`` over
    the whole rank block they occupy, so tied samples always carry equal
    weight and the total mass equals the integral of ``w`` over [0, 1].
    """
    values = np.asarray(objective_values, dtype=float)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("objective values must be a non-empty 1-D array")
    if not np.all(np.isfinite(values)):
        raise ValueError("objective values must all be finite")
    n = values.size
    uniq, inverse, counts = np.unique(values, return_inverse=True, return_counts=True)
    upper = np.cumsum(counts)          # rk+ per unique value
    lower = upper - counts             # rk- per unique value
    w_uniq = np.array(
        [scheme.integral(lo / n, hi / n) / (hi - lo) for lo, hi in zip(lower, upper)]
    )
    weights = w_uniq[inverse]
    groups = [np.nonzero(inverse == g)[0] for g in range(uniq.size) if counts[g] > 1]
    return RankedWeights(weights, groups)


def pbil_schedule(n, mu, lr):
    """Per-rank weights (1-lr)**(j-1) for the mu best samples, 0 after.

    Used with step size dt = lr this reproduces the classic incremental-
    learning update toward the mu best solutions; mu = 1 is the update
    toward the single best sample.
    """
    if not (1 <= mu <= n):
        raise ValueError("mu must be in [1, n]")
    w = np.zeros(n)
    w[:mu] = (1.0 - lr) ** np.arange(mu)
    return w


def schedule_variance(rank_weights):
    """Var over [0,1] of the step function implied by explicit rank weights.

    Rank weight w_j corresponds to the value N * w_j on the j-th cell of the
    uniform grid, which is the function whose cell averages reproduce the
    schedule.  Used for speed-bound diagnostics on schedule-driven runs.
    """
    w = np.asarray(rank_weights, dtype=float)
    n = w.size
    total = w.sum()
    return max(0.0, n * float(w @ w) - total * total)
