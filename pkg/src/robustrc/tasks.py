"""Input streams, the memory-capacity and NARMA10 tasks, and their metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .errors import ContractViolation, UndefinedRatio

__all__ = [
    "Stream",
    "MetricReport",
    "NarmaSeries",
    "gen_stream",
    "to_narma_input",
    "narma10",
    "delayed_inputs",
    "mc_tau",
    "mc_profile",
    "memory_capacity",
    "nmse",
    "robustness_ratio",
    "aggregate_nmse",
    "aggregate_log_gamma",
]

SYMMETRIC = "symmetric"
NARMA = "narma"
SHIFTED = "shifted"
DOMAINS = {SYMMETRIC: (-1.0, 1.0), NARMA: (0.0, 0.5), SHIFTED: (0.25, 0.75)}

NARMA_LIMIT = 10.0
TAU_MAX = 200


@dataclass(frozen=True)
class Stream:
    values: np.ndarray
    domain: str = SYMMETRIC

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise ContractViolation(f"unknown stream domain {self.domain!r}")
        vals = np.asarray(self.values, dtype=np.float64)
        lo, hi = DOMAINS[self.domain]
        if vals.ndim != 1 or not np.all((vals >= lo) & (vals <= hi)):
            raise ContractViolation(f"stream values must lie in [{lo}, {hi}]")
        object.__setattr__(self, "values", vals)

    def __len__(self):
        return self.values.shape[0]


@dataclass
class MetricReport:
    kind: str
    value: float
    mc_profile: Optional[np.ndarray] = None
    clamped: bool = False


@dataclass(frozen=True)
class NarmaSeries:
    values: np.ndarray
    diverged: bool
    diverged_at: int = -1


def gen_stream(length, rng):
    """I.i.d. uniform samples on [-1, 1]."""
    if int(length) != length or length < 1:
        raise ContractViolation(f"stream length must be a positive integer, got {length}")
    return Stream(rng.uniform(-1.0, 1.0, int(length)), SYMMETRIC)


def to_narma_input(s, mapping="interval"):
    """Map a [-1, 1] stream to NARMA10 input range.

    ``interval`` gives (u + 1) / 4, landing on [0, 0.5]. ``literal`` gives
    (u + 2) / 4, which lands on [0.25, 0.75]; kept only for comparison runs.
    """
    if s.domain != SYMMETRIC:
        raise ContractViolation("NARMA input mapping expects a symmetric [-1, 1] stream")
    if mapping == "interval":
        return Stream((s.values + 1.0) / 4.0, NARMA)
    if mapping == "literal":
        return Stream((s.values + 2.0) / 4.0, SHIFTED)
    raise ContractViolation(f"unknown NARMA mapping {mapping!r}")


def narma10(u, limit=NARMA_LIMIT):
    """NARMA10 targets for input ``u`` with zero history before the first step.

    A response whose magnitude passes ``limit`` is reported as diverged; the
    values from that step on are NaN and must not be used.
    """
    if not isinstance(u, Stream):
        u = Stream(u, NARMA)
    if u.domain not in (NARMA, SHIFTED):
        raise ContractViolation("narma10 needs a NARMA-range input stream")
    if len(u) < 11:
        raise ContractViolation("narma10 needs at least 11 input samples")
    y = np.zeros(len(u))
    at = int(_kernels.narma10(u.values, y, float(limit)))
    return NarmaSeries(y, at >= 0, at)


def _sq_corr(a, b):
    """Squared Pearson correlation of matching columns, 0 where either is flat."""
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    cov = np.mean(a * b, axis=0)
    var_a = np.mean(a * a, axis=0)
    var_b = np.mean(b * b, axis=0)
    denom = var_a * var_b
    out = np.zeros_like(cov)
    ok = denom > 0
    out[ok] = cov[ok] * cov[ok] / denom[ok]
    return np.clip(out, 0.0, 1.0)


def delayed_inputs(u, start, stop, tau_max):
    """Matrix whose column ``tau - 1`` holds u(t - tau) for t in [start, stop).

    Samples before the beginning of ``u`` count as zero.
    """
    u = np.asarray(u, dtype=np.float64)
    if not 0 <= start <= stop <= len(u):
        raise ContractViolation("delay window outside the input sequence")
    padded = np.concatenate([np.zeros(tau_max), u])
    # window w covers u[w - tau_max : w]; reversed, column tau - 1 is u[w - tau]
    windows = np.lib.stride_tricks.sliding_window_view(padded, tau_max)
    return windows[start:stop, ::-1].copy()


def mc_tau(u, y, tau):
    """Squared correlation between the prediction ``y`` and u delayed by ``tau``.

    The last ``len(y)`` samples of ``u`` are simultaneous with ``y``; earlier
    samples of ``u`` provide the history, and anything before it is zero.
    """
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or u.ndim != 1 or len(u) < len(y):
        raise ContractViolation("mc_tau needs 1-D sequences with len(u) >= len(y)")
    if tau < 0:
        raise ContractViolation("delay must be non-negative")
    start = len(u) - len(y)
    idx = np.arange(start, len(u)) - tau
    target = np.where(idx >= 0, u[np.clip(idx, 0, None)], 0.0)
    return float(_sq_corr(target[:, None], y[:, None])[0])


def mc_profile(targets, predictions):
    """Per-delay MC values for a whole block of delay targets at once."""
    targets = np.asarray(targets, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    if targets.shape != predictions.shape:
        raise ContractViolation("targets and predictions must have the same shape")
    return _sq_corr(targets, predictions)


def memory_capacity(profile):
    return float(np.sum(np.asarray(profile, dtype=np.float64)))


def nmse(y, y_hat):
    """Mean squared error of ``y`` normalized by the variance of the target ``y_hat``.

    Values above 1 are reported as 1 with ``clamped`` set.
    """
    y = np.asarray(y, dtype=np.float64)
    y_hat = np.asarray(y_hat, dtype=np.float64)
    if y.shape != y_hat.shape:
        raise ContractViolation("prediction and target lengths differ")
    var = float(np.var(y_hat))
    if not var > 0:
        raise ContractViolation("target has zero variance")
    value = float(np.mean((y - y_hat) ** 2)) / var
    if not math.isfinite(value) or value > 1.0:
        return MetricReport("NMSE", 1.0, clamped=True)
    return MetricReport("NMSE", value)


def robustness_ratio(noisy, clean, kind):
    """Noisy/clean MC, or clean/noisy NMSE; below 1 means noise hurt."""
    kind = kind.upper()
    if kind == "MC":
        num, den = noisy, clean
    elif kind == "NMSE":
        num, den = clean, noisy
    else:
        raise ContractViolation(f"unknown metric kind {kind!r}")
    if den == 0:
        raise UndefinedRatio(f"{kind} ratio with zero denominator")
    return num / den


def _full_grid(surface):
    grid = np.asarray(surface, dtype=np.float64)
    if grid.ndim != 2 or grid.size == 0 or not np.all(np.isfinite(grid)):
        raise ContractViolation("aggregate needs a complete 2-D grid of finite values")
    return grid


def aggregate_nmse(surface):
    return float(np.sum(_full_grid(surface)))


def aggregate_log_gamma(surface):
    grid = _full_grid(surface)
    if np.any(grid <= 0):
        raise ContractViolation("log aggregate needs strictly positive ratios")
    return float(np.sum(np.log(grid)))
