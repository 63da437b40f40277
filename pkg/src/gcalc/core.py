"""Shared parameters, time grids, seeded noise and the G function."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence, TypeVar

import numpy as np

__all__ = [
    "ValidationError",
    "EstimationError",
    "GParams",
    "TimeGrid",
    "SeedSpec",
    "g_function",
    "make_grid",
    "normal_stream",
    "normal_block",
    "worker_count",
    "map_ordered",
]

T = TypeVar("T")

_UINT64 = (1 << 64) - 1


class ValidationError(ValueError):
    """Raised when inputs violate an operation's preconditions."""


class EstimationError(RuntimeError):
    """Raised when a Monte Carlo estimate cannot be formed (non-finite samples)."""


@dataclass(frozen=True)
class GParams:
    """Volatility band ``[sigma_lo, sigma_hi]`` defining the sublinear function G."""

    sigma_lo: float
    sigma_hi: float

    def __post_init__(self) -> None:
        lo, hi = float(self.sigma_lo), float(self.sigma_hi)
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise ValidationError(f"volatility bounds must be finite, got ({lo}, {hi})")
        if lo < 0 or lo > hi:
            raise ValidationError(f"need 0 <= sigma_lo <= sigma_hi, got ({lo}, {hi})")
        if hi <= 0:
            raise ValidationError("degenerate band sigma_lo = sigma_hi = 0 is not allowed")
        object.__setattr__(self, "sigma_lo", lo)
        object.__setattr__(self, "sigma_hi", hi)

    @property
    def classical(self) -> bool:
        return self.sigma_lo == self.sigma_hi


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition ``0 = t_0 < ... < t_N = T``."""

    t_end: float
    n_steps: int
    times: np.ndarray = field(repr=False, compare=False)

    @property
    def dt(self) -> float:
        return self.t_end / self.n_steps


def make_grid(t_end: float, n_steps: int) -> TimeGrid:
    """Uniform time grid with ``n_steps`` intervals on ``[0, t_end]``."""
    t_end = float(t_end)
    if not np.isfinite(t_end) or t_end <= 0:
        raise ValidationError(f"horizon must be positive, got {t_end}")
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValidationError(f"n_steps must be a positive integer, got {n_steps}")
    n_steps = int(n_steps)
    times = np.arange(n_steps + 1, dtype=float) * (t_end / n_steps)
    times[-1] = t_end
    times.setflags(write=False)
    return TimeGrid(t_end, n_steps, times)


@dataclass(frozen=True)
class SeedSpec:
    """Identifies one independent normal stream: ``(seed, stream_id)``."""

    seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        if int(self.stream_id) != self.stream_id or self.stream_id < 0:
            raise ValidationError(f"stream_id must be a non-negative integer, got {self.stream_id}")

    def child(self, offset: int) -> "SeedSpec":
        return SeedSpec(self.seed, self.stream_id + offset)


def g_function(alpha: float, params: GParams) -> float:
    """``G(alpha) = (sigma_hi^2 alpha^+ - sigma_lo^2 alpha^-) / 2``; accepts arrays."""
    a = np.asarray(alpha, dtype=float)
    out = 0.5 * (params.sigma_hi**2 * np.maximum(a, 0.0) - params.sigma_lo**2 * np.maximum(-a, 0.0))
    return float(out) if out.ndim == 0 else out


def _generator(spec: SeedSpec) -> np.random.Generator:
    # Philox is counter based: the stream depends only on (seed, stream_id).
    ss = np.random.SeedSequence(int(spec.seed) & _UINT64, spawn_key=(int(spec.stream_id),))
    return np.random.Generator(np.random.Philox(ss))


def normal_stream(spec: SeedSpec, count: int) -> np.ndarray:
    """Deterministic standard normal variates for one ``(seed, stream_id)``."""
    if count < 0:
        raise ValidationError(f"count must be non-negative, got {count}")
    return _generator(spec).standard_normal(int(count))


def normal_block(seed: int, first_stream: int, n_streams: int, count: int) -> np.ndarray:
    """Rows ``i`` hold ``normal_stream(SeedSpec(seed, first_stream + i), count)``."""
    out = np.empty((n_streams, count))
    for i in range(n_streams):
        out[i] = _generator(SeedSpec(seed, first_stream + i)).standard_normal(count)
    return out


def worker_count() -> int:
    """Worker threads from ``G_CALC_THREADS``, defaulting to the CPU count."""
    raw = os.environ.get("G_CALC_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValidationError(f"G_CALC_THREADS must be an integer, got {raw!r}") from None
        return max(n, 1)
    return os.cpu_count() or 1


def map_ordered(fn: Callable[[T], object], items: Sequence[T], workers: int | None = None) -> list:
    """Apply ``fn`` to every item, possibly on threads; results keep input order."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
