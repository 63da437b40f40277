"""Local time estimators, the Tanaka residual and level-continuity diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import TimeGrid, ValidationError
from ..sampler import SamplePath, prefix_sum, ito_sum

__all__ = [
    "MollifierSpec",
    "LocalTimeField",
    "phi_eps",
    "phi_eps_prime",
    "phi_eps_second",
    "mollifier",
    "sgn",
    "abs_shift",
    "window_local_time",
    "tanaka_local_time",
    "tanaka_residual",
    "local_time_field",
    "holder_exponent",
    "level_increments",
    "level_moduli",
    "fit_exponent",
]


def _check_eps(eps: float) -> float:
    if not np.isfinite(eps) or eps <= 0:
        raise ValidationError(f"bandwidth eps must be positive, got {eps}")
    return float(eps)


def sgn(x):
    """Sign with ``sgn(0) = 0``."""
    return np.sign(x)


def phi_eps(x, eps: float):
    """C^1 approximation of ``|x|``: ``(eps + x^2/eps)/2`` inside ``(-eps, eps)``."""
    eps = _check_eps(eps)
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) < eps, 0.5 * (eps + x * x / eps), np.abs(x))
    return float(out) if out.ndim == 0 else out


def phi_eps_prime(x, eps: float):
    eps = _check_eps(eps)
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) <= eps, x / eps, np.sign(x))
    return float(out) if out.ndim == 0 else out


def phi_eps_second(x, eps: float):
    """``1/eps`` on the open window, ``0`` elsewhere including ``|x| = eps``."""
    eps = _check_eps(eps)
    x = np.asarray(x, dtype=float)
    out = np.where(np.abs(x) < eps, 1.0 / eps, 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class MollifierSpec:
    eps: float
    n: int = 1

    def __post_init__(self) -> None:
        _check_eps(self.eps)
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"mollification index must be >= 1, got {self.n}")


def mollifier(x, n: int = 1):
    """Normalised bump ``n * eta(n x)`` with ``eta ~ exp(1/(x^2 - 1))`` on ``(-1, 1)``."""
    from scipy.integrate import quad

    c = 1.0 / quad(lambda y: np.exp(1.0 / (y * y - 1.0)), -1.0, 1.0)[0]
    y = n * np.asarray(x, dtype=float)
    inside = np.abs(y) < 1
    out = np.zeros_like(y)
    out[inside] = c * np.exp(1.0 / (y[inside] ** 2 - 1.0))
    out = n * out
    return float(out) if out.ndim == 0 else out


def window_local_time(path: SamplePath, a: float, eps: float) -> np.ndarray:
    """``(1/2eps) * sum_{i<k} 1_(a-eps, a+eps)(B_{t_i}) (<B>_{i+1} - <B>_i)``."""
    eps = _check_eps(eps)
    inside = np.abs(path.left - a) < eps
    return prefix_sum(np.where(inside, path.dqv, 0.0)) / (2.0 * eps)


def abs_shift(x, a):
    """``|x - a| - |a|`` written as ``s x - (1 + s sgn(a)) |a|`` with ``s = sgn(x - a)``.

    When ``x`` lies between ``a`` and 0 this is ``s x`` with no rounding, so a
    level the path never reaches gives a Tanaka local time of exactly 0.
    """
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    s = sgn(x - a)
    return s * x - (1.0 + s * sgn(a)) * np.abs(a)


def tanaka_local_time(path: SamplePath, a: float) -> np.ndarray:
    """``|B_t - a| - |a| - int sgn(B - a) dB``; increments are non-negative by convexity."""
    return abs_shift(path.values, a) - ito_sum(path, sgn(path.left - a))


def tanaka_residual(path: SamplePath, a: float, eps: float):
    """Sup over time of the gap between the window and Tanaka estimators."""
    gap = np.abs(window_local_time(path, a, eps) - tanaka_local_time(path, a))
    out = gap.max(axis=-1)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class LocalTimeField:
    """``values[j, k]`` estimates the local time at ``levels[j]`` and ``times[k]``.

    ``bandwidth`` is the window half-width, or ``None`` for the Tanaka estimator.
    """

    levels: np.ndarray
    grid: TimeGrid
    values: np.ndarray
    bandwidth: float | None

    @property
    def terminal(self) -> np.ndarray:
        return self.values[:, -1]


def local_time_field(path: SamplePath, levels, eps: float | None = None, method: str = "window") -> LocalTimeField:
    """Local times of a single path over a sorted level grid.

    ``method="window"`` uses :func:`window_local_time` with bandwidth ``eps``;
    ``method="tanaka"`` uses :func:`tanaka_local_time` and ignores ``eps``.
    """
    lv = np.asarray(levels, dtype=float)
    if lv.ndim != 1 or lv.size == 0:
        raise ValidationError("levels must be a non-empty 1-d sequence")
    if np.any(np.diff(lv) <= 0):
        raise ValidationError("levels must be strictly increasing")
    if path.values.ndim != 1:
        raise ValidationError("local_time_field takes a single path")
    if method == "window":
        eps = _check_eps(eps)
        inside = np.abs(path.left[None, :] - lv[:, None]) < eps
        values = prefix_sum(np.where(inside, path.dqv[None, :], 0.0)) / (2.0 * eps)
    elif method == "tanaka":
        eps = None
        left = path.left
        values = abs_shift(path.values[None, :], lv[:, None]) - prefix_sum(sgn(left[None, :] - lv[:, None]) * path.increments[None, :])
    else:
        raise ValidationError(f"unknown local time method {method!r}")
    return LocalTimeField(lv, path.grid, values, eps)


def level_increments(field: LocalTimeField, spacing: int) -> np.ndarray:
    """``max_t |L^{a+h} - L^a|`` for every level pair ``spacing`` grid steps apart."""
    v = field.values
    return np.max(np.abs(v[spacing:] - v[:-spacing]), axis=-1)


def level_moduli(field: LocalTimeField, spacings) -> np.ndarray:
    """Mean over level pairs of :func:`level_increments`, one entry per spacing."""
    return np.array([level_increments(field, s).mean() for s in spacings])


def fit_exponent(hs, moduli) -> float:
    """Least-squares slope of ``log(moduli)`` against ``log(hs)``; NaN if any modulus is 0."""
    hs, moduli = np.asarray(hs, dtype=float), np.asarray(moduli, dtype=float)
    if np.any(moduli <= 0):
        return float("nan")
    return float(np.polyfit(np.log(hs), np.log(moduli), 1)[0])


def holder_exponent(fields, spacings=(1, 2, 4, 8)) -> tuple[float, np.ndarray, np.ndarray]:
    """Level-direction Holder exponent by log-log least squares.

    For each dyadic spacing ``h`` the modulus ``max_t |L^{a+h} - L^a|`` is
    averaged over all level pairs and all supplied fields; the slope of
    ``log(mean modulus)`` against ``log h`` is returned with the data used.
    Fields must share a uniform level grid.
    """
    fields = list(fields)
    if not fields:
        raise ValidationError("need at least one field")
    lv = fields[0].levels
    step = np.diff(lv)
    if not np.allclose(step, step[0], rtol=1e-9, atol=0.0):
        raise ValidationError("Holder regression needs a uniform level grid")
    spacings = [s for s in spacings if s < lv.size]
    if len(spacings) < 2:
        raise ValidationError("need at least two usable spacings")
    hs = np.array([s * step[0] for s in spacings])
    mod = np.mean([level_moduli(f, spacings) for f in fields], axis=0)
    return fit_exponent(hs, mod), hs, mod
