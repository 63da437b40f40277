"""Sublinear expectation as a supremum of Monte Carlo means over volatility controls.

The family of measures is approximated by deterministic piecewise-constant
controls: every bang-bang control on ``K`` coarse blocks plus constant controls
on an ``M``-point ladder in ``[sigma_lo, sigma_hi]``. All controls share the
same noise streams (common random numbers), so the estimator inherits the
sublinear-expectation axioms exactly on fixed seeds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import EstimationError, GParams, SeedSpec, TimeGrid, ValidationError, map_ordered, normal_block
from .sampler import ControlPath, SamplePath, ito_sum, sample_path

__all__ = [
    "ControlFamily",
    "EstimateReport",
    "BDGReport",
    "build_family",
    "evaluate_family",
    "sublinear_expectation",
    "sublinear_expectations",
    "bdg_check",
    "CLASSICAL_BDG_CONSTANTS",
]

CHUNK_PATHS = 256
MAX_BLOCKS = 12

# Classical BDG / Doob constants per exponent p; p = 1 is Doob's L^2 constant.
CLASSICAL_BDG_CONSTANTS = {1.0: 4.0}

Functional = Callable[[SamplePath], np.ndarray]


@dataclass(frozen=True)
class ControlFamily:
    """Finite set of controls standing in for the family of measures.

    Controls are stored deduplicated and sorted by signature, so evaluation
    order (and therefore argmax tie-breaking) never depends on how the family
    was enumerated.
    """

    grid: TimeGrid
    controls: tuple
    block_count: int = 0
    ladder_size: int = 0

    def __post_init__(self) -> None:
        if not self.controls:
            raise ValidationError("control family is empty")
        uniq = {}
        for c in self.controls:
            if c.grid.n_steps != self.grid.n_steps or c.grid.t_end != self.grid.t_end:
                raise ValidationError("every control must live on the family's grid")
            uniq.setdefault(c.signature, c)
        object.__setattr__(self, "controls", tuple(uniq[k] for k in sorted(uniq)))

    def __len__(self) -> int:
        return len(self.controls)

    @classmethod
    def of(cls, controls: Sequence[ControlPath]) -> "ControlFamily":
        controls = list(controls)
        if not controls:
            raise ValidationError("control family is empty")
        return cls(controls[0].grid, tuple(controls))

    def sigma_matrix(self) -> np.ndarray:
        return np.stack([c.sigmas for c in self.controls])


def build_family(params: GParams, grid: TimeGrid, blocks: int = 6, ladder: int = 5) -> ControlFamily:
    """Bang-bang controls on ``blocks`` coarse blocks plus a ``ladder``-point constant ladder."""
    if not 1 <= blocks <= MAX_BLOCKS:
        raise ValidationError(f"block count must be in [1, {MAX_BLOCKS}], got {blocks}")
    if ladder < 2:
        raise ValidationError(f"ladder needs at least the two endpoints, got {ladder}")
    k = min(blocks, grid.n_steps)
    block_of_step = (np.arange(grid.n_steps) * k) // grid.n_steps
    lo, hi = params.sigma_lo, params.sigma_hi
    controls = []
    for pattern in itertools.product((lo, hi), repeat=k):
        controls.append(ControlPath(grid, np.asarray(pattern)[block_of_step]))
    for s in np.linspace(lo, hi, ladder):
        controls.append(ControlPath(grid, np.full(grid.n_steps, s)))
    for c in controls:
        c.check(params)
    return ControlFamily(grid, tuple(controls), block_count=k, ladder_size=ladder)


@dataclass
class EstimateReport:
    value: float
    argmax_control: ControlPath
    std_error: float
    n_paths: int
    per_control_means: np.ndarray
    family: ControlFamily = field(repr=False)
    argmax_index: int = 0


def _chunks(n_paths: int) -> list[tuple[int, int]]:
    return [(s, min(s + CHUNK_PATHS, n_paths)) for s in range(0, n_paths, CHUNK_PATHS)]


def evaluate_family(
    functional: Callable[[SamplePath], np.ndarray],
    family: ControlFamily,
    n_paths: int,
    seeds: SeedSpec,
) -> np.ndarray:
    """Per-path samples of a (possibly multi-output) functional under every control.

    ``functional`` maps a batch of paths to an array of shape ``(P,)`` or
    ``(m, P)``. Returns an array of shape ``(m, n_controls, n_paths)``.
    Path ``i`` is driven by stream ``seeds.stream_id + i`` under every control.
    """
    grid = family.grid
    sig = family.sigma_matrix()

    def run(span):
        start, stop = span
        noise = normal_block(seeds.seed, seeds.stream_id + start, stop - start, grid.n_steps)
        rows = []
        for j in range(len(family)):
            out = np.asarray(functional(sample_path(sig[j], noise, grid)), dtype=float)
            if out.ndim == 1:
                out = out[None, :]
            if out.shape[-1] != stop - start:
                raise ValidationError(
                    f"functional must return one value per path, got shape {out.shape} for {stop - start} paths"
                )
            rows.append(out)
        return np.stack(rows, axis=1)

    parts = map_ordered(run, _chunks(n_paths))
    return np.concatenate(parts, axis=-1)


def _report(samples: np.ndarray, family: ControlFamily, label: str = "functional") -> EstimateReport:
    bad = ~np.isfinite(samples)
    if bad.any():
        j, i = (int(v[0]) for v in np.nonzero(bad))
        sig = family.controls[j].sigmas
        raise EstimationError(
            f"{label} is not finite under control #{j} (sigma range [{sig.min()}, {sig.max()}]) at path {i}"
        )
    n = samples.shape[1]
    means = samples.mean(axis=1)
    best = int(np.argmax(means))  # first maximum = smallest signature
    se = float(samples[best].std(ddof=1) / np.sqrt(n))
    return EstimateReport(
        value=float(means[best]),
        argmax_control=family.controls[best],
        std_error=se,
        n_paths=n,
        per_control_means=means,
        family=family,
        argmax_index=best,
    )


def sublinear_expectations(
    functionals: Sequence[Functional], family: ControlFamily, n_paths: int, seeds: SeedSpec
) -> list[EstimateReport]:
    """Several sup-estimates from one shared simulation pass."""
    if n_paths < 2:
        raise ValidationError(f"n_paths must be >= 2, got {n_paths}")
    functionals = list(functionals)
    samples = evaluate_family(lambda p: np.stack([f(p) for f in functionals]), family, n_paths, seeds)
    return [_report(samples[m], family, f"functional {m}") for m in range(len(functionals))]


def sublinear_expectation(
    functional: Functional, family: ControlFamily, n_paths: int, seeds: SeedSpec
) -> EstimateReport:
    """Estimate ``E^[X] = sup_P E_P[X]`` over the control family.

    ``functional`` receives a batch of paths and returns one value per path.
    """
    return sublinear_expectations([functional], family, n_paths, seeds)[0]


@dataclass
class BDGReport:
    lhs: float
    mid: float
    hi: float
    lo: float
    p: float
    c_p: float
    pathwise_ordered: bool
    mean_integral: EstimateReport

    @property
    def ratio(self) -> float:
        return self.lhs / self.mid if self.mid > 0 else float("nan")

    @property
    def within_constants(self) -> bool:
        if self.mid == 0:
            return self.lhs == 0
        return 1.0 / self.c_p <= self.ratio <= self.c_p


# Pathwise orderings compare sums formed in different order; allow a few ulps.
_ORDER_SLACK = 1e-12


def bdg_check(
    integrand: Callable[[SamplePath], np.ndarray],
    family: ControlFamily,
    p: float,
    n_paths: int,
    seeds: SeedSpec,
    params: GParams,
    c_p: float | None = None,
) -> BDGReport:
    """Empirical BDG moments for the Ito integral of ``integrand`` over the family."""
    if p < 1:
        raise ValidationError(f"p must be >= 1, got {p}")
    if n_paths < 2:
        raise ValidationError(f"n_paths must be >= 2, got {n_paths}")
    if c_p is None:
        c_p = CLASSICAL_BDG_CONSTANTS.get(float(p))
        if c_p is None:
            raise ValidationError(f"no classical BDG constant configured for p = {p}; pass c_p")
    dt = family.grid.dt

    def stats(path: SamplePath) -> np.ndarray:
        eta = np.asarray(integrand(path), dtype=float)
        eta = np.broadcast_to(eta, path.increments.shape)
        s = ito_sum(path, eta)
        sup_term = np.max(np.abs(s), axis=-1) ** (2 * p)
        mid = np.sum(eta**2 * path.dqv, axis=-1) ** p
        base = np.sum(eta**2 * dt, axis=-1) ** p
        lo = params.sigma_lo ** (2 * p) * base
        hi = params.sigma_hi ** (2 * p) * base
        slack = _ORDER_SLACK * (1.0 + hi)
        ordered = ((lo <= mid + slack) & (mid <= hi + slack)).astype(float)
        return np.stack([sup_term, mid, base, ordered, s[..., -1]])

    samples = evaluate_family(stats, family, n_paths, seeds)
    lhs = _report(samples[0], family, "sup |int eta dB|^2p")
    mid = _report(samples[1], family, "(int eta^2 d<B>)^p")
    base = _report(samples[2], family, "(int eta^2 ds)^p")
    return BDGReport(
        lhs=lhs.value,
        mid=mid.value,
        hi=params.sigma_hi ** (2 * p) * base.value,
        lo=params.sigma_lo ** (2 * p) * base.value,
        p=float(p),
        c_p=float(c_p),
        pathwise_ordered=bool(np.all(samples[3] == 1.0)),
        mean_integral=_report(samples[4], family, "int eta dB"),
    )
