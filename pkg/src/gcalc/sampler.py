"""Discrete G-Brownian paths under piecewise-constant volatility controls.

Under a measure selected by a control ``sigma`` the canonical process is the
integral of ``sigma`` against a classical Brownian motion, so on a uniform grid

    B_{i+1} = B_i + sigma_i * sqrt(dt) * xi_i,     <B>_{i+1} = <B>_i + sigma_i^2 * dt.

Paths may carry leading batch axes: ``values`` and ``qv`` have shape
``(..., N + 1)`` and every operation here works along the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import GParams, TimeGrid, ValidationError, normal_block

__all__ = [
    "ControlPath",
    "SamplePath",
    "constant_control",
    "sample_path",
    "sample_paths",
    "ito_sum",
    "qv_from_increments",
    "prefix_sum",
]


@dataclass(frozen=True)
class ControlPath:
    """Volatility value per grid interval ``[t_i, t_{i+1})``."""

    grid: TimeGrid
    sigmas: np.ndarray

    def __post_init__(self) -> None:
        s = np.array(self.sigmas, dtype=float)
        if s.shape != (self.grid.n_steps,):
            raise ValidationError(f"control needs {self.grid.n_steps} values, got shape {s.shape}")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise ValidationError("control values must be finite and non-negative")
        s.setflags(write=False)
        object.__setattr__(self, "sigmas", s)

    def check(self, params: GParams) -> "ControlPath":
        if np.any(self.sigmas < params.sigma_lo) or np.any(self.sigmas > params.sigma_hi):
            raise ValidationError(
                f"control leaves the band [{params.sigma_lo}, {params.sigma_hi}]: "
                f"range [{self.sigmas.min()}, {self.sigmas.max()}]"
            )
        return self

    @property
    def signature(self) -> tuple:
        return tuple(self.sigmas.tolist())


def constant_control(grid: TimeGrid, sigma: float) -> ControlPath:
    return ControlPath(grid, np.full(grid.n_steps, float(sigma)))


@dataclass(frozen=True)
class SamplePath:
    """Values of B and its quadratic variation on a time grid (optionally batched)."""

    grid: TimeGrid
    values: np.ndarray
    qv: np.ndarray

    def __post_init__(self) -> None:
        n1 = self.grid.n_steps + 1
        if self.values.shape[-1] != n1 or self.qv.shape[-1] != n1:
            raise ValidationError(
                f"path arrays must end with axis of length {n1}, got {self.values.shape} / {self.qv.shape}"
            )

    @property
    def n_paths(self) -> int:
        return int(np.prod(self.values.shape[:-1], dtype=int))

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=-1)

    @property
    def left(self) -> np.ndarray:
        """Left-endpoint values ``B_{t_0..t_{N-1}}``."""
        return self.values[..., :-1]

    @property
    def dqv(self) -> np.ndarray:
        return np.diff(self.qv, axis=-1)

    def __getitem__(self, idx) -> "SamplePath":
        return SamplePath(self.grid, self.values[idx], self.qv[idx])

    @classmethod
    def from_values(cls, grid: TimeGrid, values, qv) -> "SamplePath":
        return cls(grid, np.asarray(values, dtype=float), np.asarray(qv, dtype=float))


def prefix_sum(x: np.ndarray) -> np.ndarray:
    """Cumulative sums with a leading zero along the last axis."""
    out = np.zeros(x.shape[:-1] + (x.shape[-1] + 1,))
    np.cumsum(x, axis=-1, out=out[..., 1:])
    return out


def sample_path(control: ControlPath | np.ndarray, noise, grid: TimeGrid | None = None) -> SamplePath:
    """Push standard normal noise through the controlled recursion.

    ``control`` is a :class:`ControlPath` or a raw sigma array of shape ``(..., N)``
    (one row per path, ``grid`` then required). ``noise`` has shape ``(..., N)``.
    """
    if isinstance(control, ControlPath):
        grid, sig = control.grid, control.sigmas
    else:
        if grid is None:
            raise ValidationError("a grid is required with a raw sigma array")
        sig = np.asarray(control, dtype=float)
    xi = np.asarray(noise, dtype=float)
    n = grid.n_steps
    if xi.shape[-1:] != (n,) or sig.shape[-1:] != (n,):
        raise ValidationError(f"noise and control must have {n} entries per path, got {xi.shape} / {sig.shape}")
    dt = grid.dt
    values = prefix_sum(sig * np.sqrt(dt) * xi)
    qv = prefix_sum(np.broadcast_to(sig * sig * dt, np.broadcast_shapes(sig.shape, xi.shape)))
    return SamplePath(grid, values, qv)


def sample_paths(control: ControlPath, seed: int, n_paths: int, first_stream: int = 0) -> SamplePath:
    """Batch of ``n_paths`` paths; path ``i`` uses noise stream ``first_stream + i``."""
    noise = normal_block(seed, first_stream, n_paths, control.grid.n_steps)
    return sample_path(control, noise)


def ito_sum(path: SamplePath, integrand) -> np.ndarray:
    """Left-endpoint Ito sums ``S_k = sum_{i<k} eta_i (B_{i+1} - B_i)``, ``S_0 = 0``."""
    eta = np.asarray(integrand, dtype=float)
    if eta.shape[-1:] != (path.grid.n_steps,):
        raise ValidationError(f"integrand must have {path.grid.n_steps} entries, got shape {eta.shape}")
    return prefix_sum(eta * path.increments)


def qv_from_increments(path: SamplePath) -> np.ndarray:
    """Realized quadratic variation: running sum of squared increments."""
    return prefix_sum(path.increments**2)
