"""Occupation-measure checks: the delta bound, the occupation-time formula,
the quadratic variation of local time and the level/time Fubini exchange."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..core import GParams, SeedSpec, ValidationError
from ..expectation import ControlFamily, EstimateReport, sublinear_expectations
from ..sampler import SamplePath, ito_sum
from .estimators import LocalTimeField, sgn, window_local_time

__all__ = [
    "DeltaBoundReport",
    "OccupationReport",
    "QVReport",
    "FubiniReport",
    "delta_bound_check",
    "occupation_check",
    "qv_of_local_time",
    "dyadic_levels",
    "stochastic_fubini_check",
    "trapezoid_weights",
]


def trapezoid_weights(levels: np.ndarray) -> np.ndarray:
    lv = np.asarray(levels, dtype=float)
    w = np.zeros_like(lv)
    if lv.size > 1:
        d = np.diff(lv)
        w[:-1] += 0.5 * d
        w[1:] += 0.5 * d
    return w


@dataclass
class DeltaBoundReport:
    a: float
    t: float
    deltas: np.ndarray
    estimates: list[EstimateReport]

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.estimates])

    @property
    def ratios(self) -> np.ndarray:
        """``estimate(delta_k) / estimate(delta_{k+1})`` for consecutive deltas."""
        v = self.values
        with np.errstate(divide="ignore", invalid="ignore"):
            return v[:-1] / v[1:]

    @property
    def slopes(self) -> np.ndarray:
        """Fitted constants ``estimate(delta) / delta``; bounded when the bound holds."""
        return self.values / self.deltas


def delta_bound_check(
    family: ControlFamily,
    a: float,
    deltas: Sequence[float],
    t: float,
    n_paths: int,
    seeds: SeedSpec,
) -> DeltaBoundReport:
    """Sup-estimates of ``int_0^t 1_[a, a+delta](B_s) d<B>_s`` for each delta.

    All deltas share one simulation pass (common random numbers).
    """
    d = np.asarray(deltas, dtype=float)
    if d.ndim != 1 or d.size == 0 or np.any(d <= 0):
        raise ValidationError("deltas must be a non-empty sequence of positive numbers")
    if np.any(np.diff(d) >= 0):
        raise ValidationError("deltas must be strictly decreasing")
    grid = family.grid
    if not 0 < t <= grid.t_end * (1 + 1e-12):
        raise ValidationError(f"t must lie in (0, {grid.t_end}], got {t}")
    # Left endpoints t_i < t contribute.
    n_used = int(np.searchsorted(grid.times, t, side="left"))
    n_used = max(min(n_used, grid.n_steps), 1)

    def make(delta):
        def occ(path: SamplePath) -> np.ndarray:
            x = path.left[..., :n_used]
            hit = (x >= a) & (x <= a + delta)
            return np.sum(np.where(hit, path.dqv[..., :n_used], 0.0), axis=-1)

        return occ

    reports = sublinear_expectations([make(x) for x in d], family, n_paths, seeds)
    return DeltaBoundReport(float(a), float(t), d, reports)


@dataclass
class OccupationReport:
    lhs: np.ndarray | float
    rhs: np.ndarray | float
    rhs_window: np.ndarray | float | None = None

    @property
    def diff(self):
        return self.lhs - self.rhs


def occupation_check(path: SamplePath, a: float, b: float, n_bins: int, eps: float | None = None) -> OccupationReport:
    """Both sides of the occupation-time formula on ``(a, b)`` at the terminal time.

    The right-hand side uses histogram local times on ``n_bins`` equal bins that
    partition ``(a, b)``, so the identity is algebraic. With ``eps`` given the
    report also carries the non-aligned version built from window estimators
    at the bin centres.
    """
    if not a < b:
        raise ValidationError(f"need a < b, got ({a}, {b})")
    if int(n_bins) != n_bins or n_bins < 1:
        raise ValidationError(f"n_bins must be a positive integer, got {n_bins}")
    width = (b - a) / n_bins
    x = path.left
    dqv = np.broadcast_to(path.dqv, x.shape)
    inside = (x > a) & (x < b)
    lhs = np.sum(np.where(inside, dqv, 0.0), axis=-1)

    idx = np.clip(np.floor((x - a) / width).astype(np.int64), 0, n_bins - 1)
    batch = x.reshape(-1, x.shape[-1]).shape[0]
    flat_idx = (idx.reshape(batch, -1) + n_bins * np.arange(batch)[:, None])[inside.reshape(batch, -1)]
    occupation = np.bincount(flat_idx, weights=dqv.reshape(batch, -1)[inside.reshape(batch, -1)], minlength=batch * n_bins)
    local = occupation.reshape(batch, n_bins) / width
    rhs = np.sum(local * width, axis=-1).reshape(lhs.shape)

    rhs_window = None
    if eps is not None:
        centres = a + width * (np.arange(n_bins) + 0.5)
        rhs_window = sum(window_local_time(path, c, eps)[..., -1] for c in centres) * width
    if np.ndim(lhs) == 0:
        lhs, rhs = float(lhs), float(rhs)
        rhs_window = None if rhs_window is None else float(rhs_window)
    return OccupationReport(lhs, rhs, rhs_window)


def dyadic_levels(a: float, b: float, n: int) -> np.ndarray:
    """``a + i (b - a) / 2^n`` for ``i = 0..2^n``."""
    if not a < b:
        raise ValidationError(f"need a < b, got ({a}, {b})")
    if n < 0:
        raise ValidationError(f"n must be non-negative, got {n}")
    m = 2**n
    lv = a + (b - a) * np.arange(m + 1) / m
    lv[-1] = b
    return lv


@dataclass
class QVReport:
    n: int
    t_index: int
    sum_sq: float
    target: float

    @property
    def ratio(self) -> float:
        if self.target == 0:
            return 1.0 if self.sum_sq == 0 else float("inf")
        return self.sum_sq / self.target

    @property
    def distance(self) -> float:
        return abs(self.sum_sq - self.target)


QV_HYPOTHESIS = "the quadratic variation law for local time requires a non-degenerate band, sigma_lo > 0"


def qv_of_local_time(field: LocalTimeField, n: int, t_index: int, params: GParams) -> QVReport:
    """Sum of squared local-time increments along the dyadic partition ``pi_n``
    of ``[a, b] = [levels[0], levels[-1]]`` against ``4 int_a^b L^x dx``."""
    if params.sigma_lo <= 0:
        raise ValidationError(f"refused: {QV_HYPOTHESIS} (got sigma_lo = {params.sigma_lo})")
    lv = field.levels
    a, b = float(lv[0]), float(lv[-1])
    if lv.size < 2:
        raise ValidationError("field needs at least two levels")
    if not -field.values.shape[1] <= t_index < field.values.shape[1]:
        raise ValidationError(f"t_index {t_index} out of range")
    want = dyadic_levels(a, b, n)
    # nearest field level to each dyadic point; tolerates rounding in the caller's grid
    near = np.abs(lv[:, None] - want[None, :]).argmin(axis=0)
    if np.any(np.abs(lv[near] - want) > 1e-9 * (b - a)):
        raise ValidationError(f"field levels do not contain the dyadic partition of order {n}")
    col = field.values[:, t_index]
    sum_sq = float(np.sum(np.diff(col[near]) ** 2))
    target = float(4.0 * np.sum(trapezoid_weights(lv) * col))
    return QVReport(int(n), int(t_index), sum_sq, target)


@dataclass
class FubiniReport:
    lhs: np.ndarray | float
    rhs: np.ndarray | float

    @property
    def diff(self):
        return self.lhs - self.rhs


def stochastic_fubini_check(path: SamplePath, weight: Callable[[np.ndarray], np.ndarray], levels) -> FubiniReport:
    """Exchange of the level integral and the Ito integral of ``sgn(B - a)``.

    ``lhs = int w(a) (int_0^T sgn(B - a) dB) da`` and
    ``rhs = int_0^T (int w(a) sgn(B - a) da) dB``, both with trapezoid
    quadrature over ``levels``, which should cover the support of ``w``.
    """
    lv = np.asarray(levels, dtype=float)
    if lv.ndim != 1 or lv.size < 2 or np.any(np.diff(lv) <= 0):
        raise ValidationError("levels must be a strictly increasing sequence of length >= 2")
    q = trapezoid_weights(lv) * np.asarray(weight(lv), dtype=float)
    signs = sgn(path.left[..., None, :] - lv[:, None])  # (..., levels, N)
    per_level = ito_sum(path[..., None, :], signs)[..., -1]
    lhs = np.sum(q * per_level, axis=-1)
    inner = np.sum(q[:, None] * signs, axis=-2)
    rhs = ito_sum(path, inner)[..., -1]
    if np.ndim(lhs) == 0:
        return FubiniReport(float(lhs), float(rhs))
    return FubiniReport(lhs, rhs)
