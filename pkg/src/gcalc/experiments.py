"""Runnable checks, one per stochastic-calculus identity, each producing CSV rows and pass/fail flags.

Every runner takes an :class:`~gcalc.cli.ExperimentConfig` and returns an
:class:`Outcome`. Columns and assertion names are declared in ``REGISTRY`` and
documented in the README; runners must produce exactly the declared flags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable

import numpy as np
from scipy.stats import norm

from .core import GParams, SeedSpec, ValidationError, make_grid, map_ordered, normal_block
from .expectation import CHUNK_PATHS, ControlFamily, bdg_check, build_family, sublinear_expectation
from .gheat import default_space_grid, gnormal_expectation
from .localtime import (
    ConvexSpec,
    convex_ito_check,
    convex_ito_residuals,
    delta_bound_check,
    dyadic_levels,
    fit_exponent,
    level_moduli,
    local_time_field,
    occupation_check,
    qv_of_local_time,
    stochastic_fubini_check,
    tanaka_local_time,
    tanaka_residual,
    window_local_time,
)
from .localtime.occupation import QV_HYPOTHESIS
from .sampler import SamplePath, sample_path

if TYPE_CHECKING:
    from .cli import ExperimentConfig

__all__ = ["Outcome", "Experiment", "REGISTRY", "PAYOFFS", "preflight"]


@dataclass
class Outcome:
    columns: list[str]
    rows: list[list]
    summary: dict[str, object]
    flags: dict[str, bool]
    plot: Callable | None = None


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    columns: tuple[str, ...]
    assertions: tuple[str, ...]
    runner: Callable[["ExperimentConfig"], Outcome] = field(repr=False)


PAYOFFS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "x2": lambda x: x * x,
    "-x2": lambda x: -(x * x),
    "abs": np.abs,
    "-abs": lambda x: -np.abs(x),
}


def _params(cfg) -> GParams:
    return GParams(cfg.sigma_lo, cfg.sigma_hi)


def _eps(cfg, dt: float) -> float:
    return math.sqrt(dt) if cfg.eps_value is None else cfg.eps_value


def _family(cfg, n_steps: int | None = None) -> ControlFamily:
    grid = make_grid(cfg.t_end, cfg.n_steps if n_steps is None else n_steps)
    return build_family(_params(cfg), grid, cfg.blocks, cfg.ladder)


def _map_paths(cfg, family: ControlFamily, fn: Callable[[SamplePath, int], object]) -> list:
    """Run ``fn(batch, start)`` over path chunks; path ``i`` uses control ``i mod |family|``.

    Chunk boundaries are fixed, so results do not depend on the worker count.
    """
    grid = family.grid
    sig = family.sigma_matrix()
    spans = [(s, min(s + CHUNK_PATHS, cfg.n_paths)) for s in range(0, cfg.n_paths, CHUNK_PATHS)]

    def run(span):
        start, stop = span
        noise = normal_block(cfg.seed, start, stop - start, grid.n_steps)
        rows = sig[np.arange(start, stop) % len(family)]
        return fn(sample_path(rows, noise, grid), start)

    return map_ordered(run, spans)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _expected_abs_shift(v: np.ndarray, a: float) -> np.ndarray:
    """``E|X - a| - |a|`` for ``X ~ N(0, v)``."""
    s = np.sqrt(v)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(s > 0, a / np.where(s > 0, s, 1.0), 0.0)
        val = s * 2.0 * norm.pdf(z) + a * (2.0 * norm.cdf(z) - 1.0)
    return np.where(s > 0, val, abs(a)) - abs(a)


def _svg(draw: Callable) -> Callable[[str], None]:
    def write(path: str) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        plt.rcParams["svg.hashsalt"] = "gcalc"
        fig, ax = plt.subplots(figsize=(5, 3.5))
        draw(ax)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)

    return write


# -- gheat-oracle -------------------------------------------------------------

GHEAT_DX = 0.02


def _exact_gnormal(payoff: str, p: GParams, t: float) -> float:
    c = math.sqrt(2.0 * t / math.pi)
    return {"x2": p.sigma_hi**2 * t, "-x2": -(p.sigma_lo**2) * t, "abs": p.sigma_hi * c, "-abs": -p.sigma_lo * c}[payoff]


def run_gheat(cfg) -> Outcome:
    p = _params(cfg)
    phi = PAYOFFS[cfg.payoff]
    pde = gnormal_expectation(phi, cfg.t_end, p, default_space_grid(p, cfg.t_end, GHEAT_DX))
    exact = _exact_gnormal(cfg.payoff, p, cfg.t_end)
    fam = _family(cfg)
    est = sublinear_expectation(lambda path: phi(path.values[..., -1]), fam, cfg.n_paths, SeedSpec(cfg.seed))
    tol = 1e-6 if cfg.payoff in ("x2", "-x2") else 1e-3
    flags = {
        "pde_matches_exact": abs(pde - exact) <= tol,
        "mc_within_3se_of_pde": abs(est.value - pde) <= 3.0 * est.std_error,
    }
    row = [cfg.payoff, p.sigma_lo, p.sigma_hi, cfg.t_end, GHEAT_DX, pde, exact, est.value, est.std_error, cfg.n_paths, len(fam)]
    summary = {"pde_value": pde, "exact_value": exact, "mc_value": est.value, "mc_std_error": est.std_error}
    return Outcome(list(REGISTRY["gheat-oracle"].columns), [row], summary, flags)


# -- tanaka -------------------------------------------------------------------

TANAKA_BOUND = 0.05


def tanaka_refinements(n_steps: int) -> list[int]:
    return [n_steps // 16, n_steps // 4, n_steps]


def run_tanaka(cfg) -> Outcome:
    a = cfg.level
    rows = []
    for n in tanaka_refinements(cfg.n_steps):
        fam = _family(cfg, n)
        eps = _eps(cfg, fam.grid.dt)

        def chunk(batch: SamplePath, start: int):
            lw = window_local_time(batch, a, eps)[..., -1]
            lt = tanaka_local_time(batch, a)[..., -1]
            return lw, lt, _expected_abs_shift(batch.qv[..., -1], a)

        parts = _map_paths(cfg, fam, chunk)
        lw, lt, oracle = (np.concatenate(x) for x in zip(*parts))
        resid = lw - lt
        mw, sw = _mean_se(lw)
        mt, st = _mean_se(lt)
        rows.append([n, fam.grid.dt, eps, math.sqrt(np.mean(resid**2)), float(np.mean(resid**2)), mw, sw, float(oracle.mean()), mt, st])
    l2 = [r[3] for r in rows]
    fin = rows[-1]
    flags = {
        "residual_strictly_decreasing": all(x > y for x, y in zip(l2, l2[1:])),
        "terminal_residual_below_0.05": fin[3] < TANAKA_BOUND,
        "window_mean_within_3se": abs(fin[5] - fin[7]) <= 3.0 * fin[6],
    }
    summary = {"l2_residual_" + str(r[0]): r[3] for r in rows}
    summary.update(mean_window_L=fin[5], window_std_error=fin[6], oracle_mean_L=fin[7])

    def draw(ax):
        ax.loglog([r[0] for r in rows], l2, "o-")
        ax.set_xlabel("steps N")
        ax.set_ylabel("L2 terminal residual")
        ax.set_title("window vs Tanaka local time")

    return Outcome(list(REGISTRY["tanaka"].columns), rows, summary, flags, _svg(draw))


# -- delta-bound --------------------------------------------------------------

DELTAS = (0.4, 0.2, 0.1)
RATIO_BAND = (1.5, 2.5)


def run_delta(cfg) -> Outcome:
    fam = _family(cfg)
    rep = delta_bound_check(fam, cfg.level, DELTAS, cfg.t_end, cfg.n_paths, SeedSpec(cfg.seed))
    vals, ratios = rep.values, rep.ratios
    rows = []
    for k, (d, e) in enumerate(zip(rep.deltas, rep.estimates)):
        ratio = ratios[k] if k < ratios.size else float("nan")
        rows.append([d, e.value, e.std_error, ratio, e.value / d])
    flags = {
        "ratios_in_band": bool(np.all((ratios >= RATIO_BAND[0]) & (ratios <= RATIO_BAND[1]))),
        "estimates_monotone": bool(np.all(np.diff(vals) < 0)),
    }
    summary = {f"estimate_{d:g}": v for d, v in zip(rep.deltas, vals)}
    summary.update({f"ratio_{k}": r for k, r in enumerate(ratios)})

    def draw(ax):
        ax.loglog(rep.deltas, vals, "o-")
        ax.set_xlabel("delta")
        ax.set_ylabel("sup-estimate of occupation")

    return Outcome(list(REGISTRY["delta-bound"].columns), rows, summary, flags, _svg(draw))


# -- occupation ---------------------------------------------------------------

OCC_TOL = 1e-10


def occupation_oracle(qv_left: np.ndarray, dqv: np.ndarray, a: float, b: float) -> np.ndarray:
    """``E sum_i 1_(a,b)(B_{t_i}) d<B>_i`` for a deterministic control, per path."""
    s = np.sqrt(qv_left)
    with np.errstate(divide="ignore", invalid="ignore"):
        prob = np.where(
            s > 0,
            norm.cdf(b / np.where(s > 0, s, 1.0)) - norm.cdf(a / np.where(s > 0, s, 1.0)),
            float(a < 0 < b),
        )
    return np.sum(prob * dqv, axis=-1)


def run_occupation(cfg) -> Outcome:
    fam = _family(cfg)
    a, b = cfg.level - 1.0, cfg.level + 1.0
    eps = _eps(cfg, fam.grid.dt)

    def chunk(batch: SamplePath, start: int):
        rep = occupation_check(batch, a, b, cfg.n_levels, eps)
        oracle = occupation_oracle(batch.qv[..., :-1], batch.dqv, a, b)
        return rep.lhs, rep.rhs, rep.rhs_window, oracle

    lhs, rhs, rhs_w, oracle = (np.concatenate(x) for x in zip(*_map_paths(cfg, fam, chunk)))
    diff = lhs - rhs
    m, se = _mean_se(lhs)
    orc = float(oracle.mean())
    rows = [[i, lhs[i], rhs[i], diff[i], rhs_w[i]] for i in range(lhs.size)]
    flags = {
        "identity_exact": bool(np.all(np.abs(diff) <= OCC_TOL * (1.0 + lhs))),
        "lhs_within_3se_of_oracle": abs(m - orc) <= 3.0 * se,
    }
    summary = {
        "mean_lhs": m,
        "lhs_std_error": se,
        "oracle": orc,
        "max_rel_diff": float(np.max(np.abs(diff) / (1.0 + lhs))),
        "mean_abs_window_gap": float(np.mean(np.abs(lhs - rhs_w))),
    }
    return Outcome(list(REGISTRY["occupation"].columns), rows, summary, flags)


# -- qv-localtime -------------------------------------------------------------

QV_BAND = (0.75, 1.25)


def run_qv(cfg) -> Outcome:
    p = _params(cfg)
    if p.sigma_lo <= 0:
        raise ValidationError(f"qv-localtime refused: {QV_HYPOTHESIS} (sigma_lo = {p.sigma_lo})")
    fam = _family(cfg)
    a, b = cfg.level - 1.0, cfg.level + 1.0
    top = cfg.dyadic_n
    orders = [n for n in (top - 2, top - 1, top) if n >= 1]
    levels = dyadic_levels(a, b, top)
    t_idx = {"mid": fam.grid.n_steps // 2, "end": fam.grid.n_steps}

    def chunk(batch: SamplePath, start: int):
        out = []
        for i in range(batch.values.shape[0]):
            path = batch[i]
            fld = local_time_field(path, levels, method="tanaka")
            per = {}
            for n in orders:
                sub = local_time_field(path, dyadic_levels(a, b, n), eps=(b - a) / 2 ** (n + 1))
                for tk, k in t_idx.items():
                    r = qv_of_local_time(fld, n, k, p)
                    w = qv_of_local_time(sub, n, k, p)
                    per[(n, tk)] = (r.ratio, r.distance, w.ratio)
            out.append(per)
        return out

    per_path = [x for part in _map_paths(cfg, fam, chunk) for x in part]
    rows = []
    stats = {}
    for n in orders:
        for tk in t_idx:
            arr = np.array([d[(n, tk)] for d in per_path])
            mr, sr = _mean_se(arr[:, 0])
            md = float(arr[:, 1].mean())
            mw = float(arr[:, 2].mean())
            stats[(n, tk)] = (mr, md)
            rows.append([n, tk, fam.grid.times[t_idx[tk]], mr, sr, md, mw])
    dist_end = [stats[(n, "end")][1] for n in orders]
    flags = {
        "mean_ratio_in_band": QV_BAND[0] <= stats[(top, "end")][0] <= QV_BAND[1],
        "distance_decreasing": all(x > y for x, y in zip(dist_end, dist_end[1:])),
    }
    summary = {f"mean_ratio_n{n}_{tk}": stats[(n, tk)][0] for n in orders for tk in t_idx}
    summary.update({f"mean_distance_n{n}_end": stats[(n, 'end')][1] for n in orders})

    def draw(ax):
        ax.semilogy(orders, dist_end, "o-")
        ax.set_xlabel("dyadic order n")
        ax.set_ylabel("mean |sum_sq - target|")

    return Outcome(list(REGISTRY["qv-localtime"].columns), rows, summary, flags, _svg(draw))


# -- convex-ito ---------------------------------------------------------------

CONVEX_EXACT_TOL = 1e-10
# c * B_k and sum_i c * dB_i agree only to rounding unless c = 1
AFFINE_ROUNDOFF = 1e-12
AFFINE = ConvexSpec.affine(3.0, 2.0)
CONVEX_KINK_BOUND = 0.1
THREE_KINK = ConvexSpec.piecewise_linear([-0.5, 0.0, 0.5], [-1.0, -0.25, 0.25, 1.0], value_at_zero=0.0)
SMOOTH = ConvexSpec.from_measure(density=([-1.0, 1.0], [1.0]), left_slope=-1.0)


def run_convex(cfg) -> Outcome:
    fam = _family(cfg)
    eps = _eps(cfg, fam.grid.dt)
    shift = 0.3
    cases = {
        "affine": AFFINE,
        "abs": ConvexSpec.abs_at(0.0),
        "positive_part": ConvexSpec.positive_part(shift),
        "three_kink": THREE_KINK,
        "density": SMOOTH,
    }

    def chunk(batch: SamplePath, start: int):
        out = {name: convex_ito_check(spec, batch, eps) for name, spec in cases.items()}
        out["tanaka_0"] = tanaka_residual(batch, 0.0, eps)
        out["tanaka_shift"] = tanaka_residual(batch, shift, eps)
        out["affine_scale"] = 1.0 + np.max(np.abs(AFFINE.f(batch.values) - AFFINE.f(np.array(0.0))), axis=-1)
        out["three_kink_terminal"] = _terminal_residual(cases["three_kink"], batch, eps)
        return out

    parts = _map_paths(cfg, fam, chunk)
    res = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
    refs = {"affine": None, "abs": "tanaka_0", "positive_part": "tanaka_shift", "three_kink": None, "density": None}
    scale = {"abs": 1.0, "positive_part": 0.5}
    rows = []
    for name in cases:
        r = res[name]
        ref = refs[name]
        gap = float(np.max(np.abs(r - scale[name] * res[ref]))) if ref else float("nan")
        rows.append([name, float(r.mean()), float(r.max()), ref or "", gap])
    kink_mean = float(res["three_kink_terminal"].mean())
    rows.append(["three_kink_terminal", kink_mean, float(res["three_kink_terminal"].max()), "", float("nan")])
    flags = {
        "affine_zero": bool(np.all(res["affine"] <= AFFINE_ROUNDOFF * res["affine_scale"])),
        "abs_equals_tanaka": bool(np.all(res["abs"] == res["tanaka_0"])),
        "positive_part_half_tanaka": bool(np.all(np.abs(res["positive_part"] - 0.5 * res["tanaka_shift"]) <= CONVEX_EXACT_TOL)),
        "three_kink_mean_residual_below_0.1": kink_mean < CONVEX_KINK_BOUND,
    }
    summary = {f"mean_residual_{r[0]}": r[1] for r in rows}
    return Outcome(list(REGISTRY["convex-ito"].columns), rows, summary, flags)


def _terminal_residual(spec: ConvexSpec, batch: SamplePath, eps: float) -> np.ndarray:
    return np.abs(convex_ito_residuals(spec, batch, eps)[..., -1])


# -- bdg ----------------------------------------------------------------------


def run_bdg(cfg) -> Outcome:
    p = _params(cfg)
    fam = _family(cfg)
    rep = bdg_check(lambda path: np.ones(path.increments.shape), fam, 1.0, cfg.n_paths, SeedSpec(cfg.seed), p, cfg.bdg_c)
    mi = rep.mean_integral
    row = [rep.p, rep.lhs, rep.mid, rep.hi, rep.lo, rep.ratio, rep.c_p, int(rep.pathwise_ordered), mi.value, mi.std_error]
    flags = {
        "pathwise_ordered": rep.pathwise_ordered and rep.lo <= rep.mid <= rep.hi,
        "ratio_within_constants": rep.within_constants,
        "mean_integral_within_3se": abs(mi.value) <= 3.0 * mi.std_error,
    }
    summary = {"lhs": rep.lhs, "mid": rep.mid, "hi": rep.hi, "lo": rep.lo, "ratio": rep.ratio}
    return Outcome(list(REGISTRY["bdg"].columns), [row], summary, flags)


# -- holder-field -------------------------------------------------------------

HOLDER_FLOOR = 0.35
HOLDER_SPACINGS = (1, 2, 4, 8)


def run_holder(cfg) -> Outcome:
    fam = _family(cfg)
    eps = _eps(cfg, fam.grid.dt)
    levels = np.linspace(cfg.level - 2.0, cfg.level + 2.0, cfg.n_levels)

    def chunk(batch: SamplePath, start: int):
        return [level_moduli(local_time_field(batch[i], levels, eps), HOLDER_SPACINGS) for i in range(batch.values.shape[0])]

    mods = np.array([x for part in _map_paths(cfg, fam, chunk) for x in part])
    hs = np.array(HOLDER_SPACINGS) * (levels[1] - levels[0])
    mean_mod = mods.mean(axis=0)
    slope = fit_exponent(hs, mean_mod)
    rows = [[h, m, slope] for h, m in zip(hs, mean_mod)]
    flags = {"exponent_at_least_0.35": bool(slope >= HOLDER_FLOOR)}

    def draw(ax):
        ax.loglog(hs, mean_mod, "o-")
        ax.set_xlabel("level spacing h")
        ax.set_ylabel("mean max_t |L(a+h) - L(a)|")
        ax.set_title(f"slope {slope:.3f}")

    return Outcome(list(REGISTRY["holder-field"].columns), rows, {"exponent": slope}, flags, _svg(draw))


# -- fubini -------------------------------------------------------------------

FUBINI_TOL = 1e-10
FUBINI_LEVELS = 32


def hat(x):
    return np.maximum(1.0 - np.abs(np.asarray(x, dtype=float)), 0.0)


def run_fubini(cfg) -> Outcome:
    fam = _family(cfg)
    levels = np.linspace(-1.0, 1.0, FUBINI_LEVELS)

    def chunk(batch: SamplePath, start: int):
        rep = stochastic_fubini_check(batch, hat, levels)
        return rep.lhs, rep.rhs

    lhs, rhs = (np.concatenate(x) for x in zip(*_map_paths(cfg, fam, chunk)))
    diff = lhs - rhs
    rows = [[i, lhs[i], rhs[i], diff[i]] for i in range(lhs.size)]
    flags = {
        "exchange_exact": bool(np.all(np.isfinite(lhs)) and np.all(np.abs(diff) <= FUBINI_TOL * (1.0 + np.abs(lhs))))
    }
    return Outcome(list(REGISTRY["fubini"].columns), rows, {"max_abs_diff": float(np.max(np.abs(diff)))}, flags)


REGISTRY: dict[str, Experiment] = {
    e.name: e
    for e in [
        Experiment(
            "gheat-oracle",
            "G-heat PDE value vs sup-Monte-Carlo estimate of E^[phi(B_T)]",
            ("payoff", "sigma_lo", "sigma_hi", "t_end", "dx", "pde_value", "exact_value", "mc_value",
             "mc_std_error", "n_paths", "n_controls"),
            ("pde_matches_exact", "mc_within_3se_of_pde"),
            run_gheat,
        ),
        Experiment(
            "tanaka",
            "window vs Tanaka local time under refinement N/16, N/4, N",
            ("n_steps", "dt", "eps", "l2_residual", "mean_sq_residual", "mean_window_L", "window_std_error",
             "oracle_mean_L", "mean_tanaka_L", "tanaka_std_error"),
            ("residual_strictly_decreasing", "terminal_residual_below_0.05", "window_mean_within_3se"),
            run_tanaka,
        ),
        Experiment(
            "delta-bound",
            "sup-estimates of occupation of [a, a+delta] for delta = 0.4, 0.2, 0.1",
            ("delta", "estimate", "std_error", "ratio_to_next", "estimate_over_delta"),
            ("ratios_in_band", "estimates_monotone"),
            run_delta,
        ),
        Experiment(
            "occupation",
            "occupation-time formula on (a-1, a+1): histogram identity and Gaussian oracle",
            ("path", "lhs", "rhs", "diff", "rhs_window"),
            ("identity_exact", "lhs_within_3se_of_oracle"),
            run_occupation,
        ),
        Experiment(
            "qv-localtime",
            "sum of squared local-time increments vs 4 * int L dx on dyadic partitions",
            ("n", "time_label", "time", "mean_ratio", "ratio_std_error", "mean_distance", "mean_ratio_window"),
            ("mean_ratio_in_band", "distance_decreasing"),
            run_qv,
        ),
        Experiment(
            "convex-ito",
            "Ito formula for convex functions via local times",
            ("case", "mean_residual", "max_residual", "reference", "max_gap_to_reference"),
            ("affine_zero", "abs_equals_tanaka", "positive_part_half_tanaka", "three_kink_mean_residual_below_0.1"),
            run_convex,
        ),
        Experiment(
            "bdg",
            "BDG moments for eta = 1, p = 1",
            ("p", "lhs", "mid", "hi", "lo", "ratio", "c_p", "pathwise_ordered", "mean_integral",
             "mean_integral_std_error"),
            ("pathwise_ordered", "ratio_within_constants", "mean_integral_within_3se"),
            run_bdg,
        ),
        Experiment(
            "holder-field",
            "level-direction Holder exponent of the window local-time field",
            ("h", "mean_modulus", "fitted_exponent"),
            ("exponent_at_least_0.35",),
            run_holder,
        ),
        Experiment(
            "fubini",
            "exchange of level and Ito integrals for sgn(B - a) with a hat weight",
            ("path", "lhs", "rhs", "diff"),
            ("exchange_exact",),
            run_fubini,
        ),
    ]
}


def preflight(cfg) -> None:
    """Experiment-specific preconditions, checked before anything runs."""
    if cfg.experiment == "qv-localtime" and cfg.sigma_lo <= 0:
        raise ValidationError(f"qv-localtime refused: {QV_HYPOTHESIS} (sigma_lo = {cfg.sigma_lo})")
    if cfg.experiment == "tanaka" and cfg.n_steps % 16:
        raise ValidationError(f"tanaka refines N/16, N/4, N: n_steps must be divisible by 16, got {cfg.n_steps}")
    if cfg.experiment == "qv-localtime" and 2**cfg.dyadic_n > 4 * cfg.n_steps:
        raise ValidationError("dyadic_n too fine for n_steps")
