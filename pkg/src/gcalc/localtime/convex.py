"""Ito formula for convex functions through local times.

A convex ``f`` with compactly supported curvature measure ``mu = f''`` satisfies

    f(B_t) = f(0) + int_0^t f'(B_s) dB_s + 1/2 int L^a_t mu(da).

``mu`` is represented as point masses plus a piecewise-constant density.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..core import ValidationError
from ..sampler import SamplePath, ito_sum
from .estimators import window_local_time
from .occupation import trapezoid_weights

__all__ = ["ConvexSpec", "convex_ito_check", "convex_ito_residuals"]

CONSISTENCY_TOL = 1e-8


def _ramp_integral(y, lo: float, width: float):
    """``int_{-inf}^y clip(s - lo, 0, width) ds``."""
    y = np.asarray(y, dtype=float)
    u = np.clip(y - lo, 0.0, width)
    return 0.5 * u * u + width * np.maximum(y - lo - width, 0.0)


@dataclass(frozen=True)
class ConvexSpec:
    """Convex function given by value, left derivative and curvature measure.

    ``atoms`` is a sequence of ``(location, weight)``; ``density`` is an
    optional pair ``(edges, values)`` describing a piecewise-constant density
    on ``[edges[0], edges[-1]]`` with ``values[j]`` on ``[edges[j], edges[j+1])``.
    """

    f: Callable[[np.ndarray], np.ndarray]
    f_left: Callable[[np.ndarray], np.ndarray]
    atoms: tuple = ()
    density: tuple | None = None
    support: tuple = field(init=False, default=(0.0, 0.0))

    def __post_init__(self) -> None:
        atoms = tuple((float(x), float(w)) for x, w in self.atoms)
        if any(w < 0 or not np.isfinite(w) or not np.isfinite(x) for x, w in atoms):
            raise ValidationError("atom weights must be finite and non-negative")
        object.__setattr__(self, "atoms", atoms)
        pts = [x for x, _ in atoms]
        if self.density is not None:
            edges, vals = (np.asarray(v, dtype=float) for v in self.density)
            if edges.ndim != 1 or vals.shape != (edges.size - 1,) or edges.size < 2:
                raise ValidationError("density needs edges of length m+1 and m values")
            if np.any(np.diff(edges) <= 0) or np.any(vals < 0) or not np.all(np.isfinite(vals)):
                raise ValidationError("density edges must increase and values be finite, non-negative")
            object.__setattr__(self, "density", (edges, vals))
            pts += [edges[0], edges[-1]]
        lo, hi = (min(pts), max(pts)) if pts else (0.0, 0.0)
        object.__setattr__(self, "support", (lo, hi))
        self._check_consistency()

    @property
    def total_mass(self) -> float:
        m = sum(w for _, w in self.atoms)
        if self.density is not None:
            edges, vals = self.density
            m += float(np.sum(vals * np.diff(edges)))
        return m

    def mass(self, a: float, b: float) -> float:
        """``mu[a, b)``."""
        m = sum(w for x, w in self.atoms if a <= x < b)
        if self.density is not None:
            edges, vals = self.density
            overlap = np.clip(np.minimum(edges[1:], b) - np.maximum(edges[:-1], a), 0.0, None)
            m += float(np.sum(vals * overlap))
        return m

    def atom_weight(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros_like(np.asarray(x, dtype=float))
        for loc, w in self.atoms:
            out = out + np.where(x == loc, w, 0.0)
        return out

    def derivative(self, x: np.ndarray) -> np.ndarray:
        """Integrand for the Ito term: ``f'_-`` plus half the jump at an atom.

        Off the atoms this is ``f'_-`` itself; at an atom it is the midpoint of
        the one-sided derivatives, matching ``sgn(0) = 0`` in the Tanaka formula.
        """
        x = np.asarray(x, dtype=float)
        d = np.asarray(self.f_left(x), dtype=float)
        if self.atoms:
            d = d + 0.5 * self.atom_weight(x)
        return d

    def _check_consistency(self) -> None:
        lo, hi = self.support
        span = max(hi - lo, 1.0)
        probe = np.unique(
            np.concatenate(
                [
                    np.linspace(lo - 0.5 * span, hi + 0.5 * span, 257),
                    [x for x, _ in self.atoms],
                    [x + 1e-3 * span for x, _ in self.atoms],
                ]
            )
        )
        fl = np.asarray(self.f_left(probe), dtype=float)
        for i in range(probe.size - 1):
            got = fl[i + 1] - fl[i]
            want = self.mass(probe[i], probe[i + 1])
            if abs(got - want) > CONSISTENCY_TOL:
                raise ValidationError(
                    f"inconsistent convex spec: f'_-({probe[i + 1]:.6g}) - f'_-({probe[i]:.6g}) = {got:.10g} "
                    f"but mu[a, b) = {want:.10g}"
                )

    # -- constructors -----------------------------------------------------

    @classmethod
    def affine(cls, slope: float, intercept: float) -> "ConvexSpec":
        return cls(lambda x: slope * np.asarray(x, dtype=float) + intercept,
                   lambda x: np.full_like(np.asarray(x, dtype=float), float(slope)))

    @classmethod
    def abs_at(cls, a: float) -> "ConvexSpec":
        """``|x - a|`` with ``mu = 2 delta_a``."""
        return cls(lambda x: np.abs(np.asarray(x, dtype=float) - a),
                   lambda x: np.where(np.asarray(x, dtype=float) > a, 1.0, -1.0),
                   atoms=((a, 2.0),))

    @classmethod
    def positive_part(cls, a: float) -> "ConvexSpec":
        """``(x - a)^+`` with ``mu = delta_a``."""
        return cls(lambda x: np.maximum(np.asarray(x, dtype=float) - a, 0.0),
                   lambda x: np.where(np.asarray(x, dtype=float) > a, 1.0, 0.0),
                   atoms=((a, 1.0),))

    @classmethod
    def from_measure(
        cls,
        atoms: Sequence[tuple[float, float]] = (),
        density: tuple | None = None,
        left_slope: float = 0.0,
        value_at_zero: float = 0.0,
    ) -> "ConvexSpec":
        """Integrate a curvature measure twice: ``f'_-(x) = left_slope + mu(-inf, x)``."""
        atoms = tuple((float(x), float(w)) for x, w in atoms)
        pieces = []
        if density is not None:
            edges, vals = (np.asarray(v, dtype=float) for v in density)
            if edges.ndim != 1 or vals.shape != (edges.size - 1,):
                raise ValidationError("density needs edges of length m+1 and m values")
            pieces = [(edges[j], edges[j + 1] - edges[j], vals[j]) for j in range(vals.size)]

        def f(x):
            x = np.asarray(x, dtype=float)
            out = value_at_zero + left_slope * x
            for loc, w in atoms:
                out = out + w * (np.maximum(x - loc, 0.0) - max(-loc, 0.0))
            for lo, width, r in pieces:
                out = out + r * (_ramp_integral(x, lo, width) - _ramp_integral(0.0, lo, width))
            return out

        def f_left(x):
            x = np.asarray(x, dtype=float)
            out = np.full_like(x, float(left_slope))
            for loc, w in atoms:
                out = out + np.where(x > loc, w, 0.0)
            for lo, width, r in pieces:
                out = out + r * np.clip(x - lo, 0.0, width)
            return out

        return cls(f, f_left, atoms=atoms, density=density)

    @classmethod
    def piecewise_linear(cls, kinks: Sequence[float], slopes: Sequence[float], value_at_zero: float = 0.0) -> "ConvexSpec":
        """Continuous piecewise-linear ``f`` with ``slopes[j]`` left of ``kinks[j]``."""
        kinks = np.asarray(kinks, dtype=float)
        slopes = np.asarray(slopes, dtype=float)
        if slopes.size != kinks.size + 1:
            raise ValidationError("need one more slope than kinks")
        if np.any(np.diff(kinks) <= 0):
            raise ValidationError("kinks must be strictly increasing")
        jumps = np.diff(slopes)
        if np.any(jumps < 0):
            raise ValidationError("slopes must be non-decreasing for a convex function")
        return cls.from_measure(list(zip(kinks, jumps)), None, slopes[0], value_at_zero)


def convex_ito_residuals(spec: ConvexSpec, path: SamplePath, eps: float, level_step: float | None = None) -> np.ndarray:
    """Signed residual process of the convex Ito formula, shape ``(..., N+1)``."""
    b = path.values
    lhs = np.asarray(spec.f(b), dtype=float) - float(np.asarray(spec.f(np.array(0.0))))
    lhs = lhs - ito_sum(path, spec.derivative(path.left))
    local = np.zeros_like(b)
    for loc, w in spec.atoms:
        local = local + 0.5 * w * window_local_time(path, loc, eps)
    if spec.density is not None:
        edges, vals = spec.density
        step = eps if level_step is None else level_step
        for j in range(vals.size):
            m = max(int(np.ceil((edges[j + 1] - edges[j]) / step)), 1) + 1
            lv = np.linspace(edges[j], edges[j + 1], m)
            q = trapezoid_weights(lv) * vals[j]
            for a, qa in zip(lv, q):
                local = local + 0.5 * qa * window_local_time(path, a, eps)
    return lhs - local


def convex_ito_check(spec: ConvexSpec, path: SamplePath, eps: float, level_step: float | None = None):
    """``sup_k |f(B_k) - f(0) - int f' dB - 1/2 int L^a_k mu(da)|`` per path."""
    out = np.max(np.abs(convex_ito_residuals(spec, path, eps, level_step)), axis=-1)
    return float(out) if np.ndim(out) == 0 else out
