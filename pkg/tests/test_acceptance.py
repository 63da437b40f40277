"""Acceptance criteria at full size.

Each test prints exactly one ``criterion N: PASS|FAIL ...`` line (visible
without ``-s``) and then asserts. Run just this file with::

    pytest tests/test_acceptance.py -v
"""

import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from gcalc import GParams, SeedSpec, ValidationError, constant_control, ito_sum, make_grid, qv_from_increments, sample_paths
from gcalc.cli import ConfigError, parse_config, run_experiment
from gcalc.expectation import ControlFamily, build_family, sublinear_expectation, sublinear_expectations
from gcalc.gheat import default_space_grid, gnormal_expectation

pytestmark = pytest.mark.acceptance

ROOT_2_OVER_PI = math.sqrt(2 / math.pi)


@pytest.fixture
def verdict(capsys):
    """Print one line per criterion, then fail the test if any check failed."""

    def report(number, checks, seconds, limit=None):
        failed = [name for name, ok in checks.items() if not ok]
        if limit is not None and seconds >= limit:
            failed.append(f"runtime {seconds:.1f}s >= {limit}s")
        status = "FAIL" if failed else "PASS"
        detail = "; ".join(failed) if failed else ", ".join(checks)
        with capsys.disabled():
            print(f"\ncriterion {number}: {status} ({seconds:.1f}s) {detail}")
        assert not failed, f"criterion {number}: " + "; ".join(failed)

    return report


def config(tmp_path, text):
    return parse_config(f"{text}\nout_dir = {tmp_path}\n")


def test_01_gheat_quadratics(verdict):
    start = time.perf_counter()
    p = GParams(0.5, 1.0)
    grid = default_space_grid(p, 1.0, 0.05)
    up = gnormal_expectation(lambda x: x * x, 1.0, p, grid)
    down = gnormal_expectation(lambda x: -x * x, 1.0, p, grid)
    checks = {"u[x^2] = 1": abs(up - 1.0) <= 1e-6, "u[-x^2] = -0.25": abs(down + 0.25) <= 1e-6}
    verdict(1, checks, time.perf_counter() - start, 5)


def test_02_pde_monte_carlo_agreement(verdict):
    start = time.perf_counter()
    p = GParams(0.5, 1.0)
    grid = default_space_grid(p, 1.0, 0.02)
    pde_up = gnormal_expectation(np.abs, 1.0, p, grid)
    pde_down = gnormal_expectation(lambda x: -np.abs(x), 1.0, p, grid)
    fam = build_family(p, make_grid(1.0, 2**12), blocks=6, ladder=5)
    up, down = sublinear_expectations(
        [lambda q: np.abs(q.values[..., -1]), lambda q: -np.abs(q.values[..., -1])], fam, 10_000, SeedSpec(0)
    )
    checks = {
        "pde |x| within 1e-3": abs(pde_up - ROOT_2_OVER_PI) <= 1e-3,
        "mc |x| within 3se": abs(up.value - pde_up) <= 3 * up.std_error,
        "pde -|x| within 1e-3": abs(-pde_down - 0.5 * ROOT_2_OVER_PI) <= 1e-3,
        "mc -|x| within 3se": abs(down.value - pde_down) <= 3 * down.std_error,
    }
    verdict(2, checks, time.perf_counter() - start, 120)


def test_03_discrete_ito_identity(verdict):
    start = time.perf_counter()
    p = sample_paths(constant_control(make_grid(1.0, 2**12), 1.0), 3, 1000)
    bt = p.values[:, -1]
    resid = bt**2 - 2 * ito_sum(p, p.left)[:, -1] - qv_from_increments(p)[:, -1]
    checks = {"identity on every path": bool(np.all(np.abs(resid) <= 1e-10 * (1 + bt**2)))}
    verdict(3, checks, time.perf_counter() - start, 10)


def test_04_tanaka(verdict, tmp_path):
    start = time.perf_counter()
    cfg = config(tmp_path, "experiment = tanaka\nsigma_lo = 1\nsigma_hi = 1\nn_steps = 16384\nn_paths = 1000")
    rep = run_experiment(cfg, plots=False)
    checks = {
        "L2 residual strictly decreasing": rep.flags["residual_strictly_decreasing"],
        f"L2 residual at 2^14 < 0.05 (got {rep.summary['l2_residual_16384']:.4f})": rep.flags["terminal_residual_below_0.05"],
        "window mean within 3se of sqrt(2/pi)": rep.flags["window_mean_within_3se"],
    }
    verdict(4, checks, time.perf_counter() - start, 120)


def test_05_delta_slope(verdict, tmp_path):
    start = time.perf_counter()
    cfg = config(tmp_path, "experiment = delta-bound\nlevel = 0\nt_end = 1\nn_paths = 1000")
    rep = run_experiment(cfg, plots=False)
    checks = {"ratios in [1.5, 2.5]": rep.flags["ratios_in_band"], "monotone in delta": rep.flags["estimates_monotone"]}
    verdict(5, checks, time.perf_counter() - start, 60)


def test_06_occupation(verdict, tmp_path):
    start = time.perf_counter()
    cfg = config(tmp_path, "experiment = occupation\nsigma_lo = 1\nsigma_hi = 1\nn_paths = 1000")
    rep = run_experiment(cfg, plots=False)
    checks = {"bin identity to 1e-10": rep.flags["identity_exact"], "Gaussian oracle within 3se": rep.flags["lhs_within_3se_of_oracle"]}
    verdict(6, checks, time.perf_counter() - start, 60)


def test_07_local_time_quadratic_variation(verdict, tmp_path):
    start = time.perf_counter()
    cfg = config(tmp_path, "experiment = qv-localtime\nsigma_lo = 1\nsigma_hi = 1\nn_steps = 65536\nn_paths = 200\ndyadic_n = 7")
    rep = run_experiment(cfg, plots=False)
    try:
        parse_config("experiment = qv-localtime\nsigma_lo = 0\nsigma_hi = 1")
        refused = False
    except ConfigError as exc:
        refused = "sigma_lo > 0" in str(exc)
    checks = {
        f"mean ratio in [0.75, 1.25] (got {rep.summary['mean_ratio_n7_end']:.3f})": rep.flags["mean_ratio_in_band"],
        "distance decreasing n = 5, 6, 7": rep.flags["distance_decreasing"],
        "sigma_lo = 0 refused": refused,
    }
    verdict(7, checks, time.perf_counter() - start, 300)


def test_08_convex_ito(verdict, tmp_path):
    start = time.perf_counter()
    cfg = config(tmp_path, "experiment = convex-ito\nsigma_lo = 1\nsigma_hi = 1\nn_steps = 16384\nn_paths = 1000")
    rep = run_experiment(cfg, plots=False)
    checks = {
        "affine residual 0": rep.flags["affine_zero"],
        "|x| equals Tanaka": rep.flags["abs_equals_tanaka"],
        "(x-0.3)+ is half Tanaka": rep.flags["positive_part_half_tanaka"],
        f"three kinks terminal < 0.1 (got {rep.summary['mean_residual_three_kink_terminal']:.4f})": rep.flags[
            "three_kink_mean_residual_below_0.1"
        ],
    }
    verdict(8, checks, time.perf_counter() - start, 120)


def test_09_sublinear_axioms(verdict):
    start = time.perf_counter()
    p = GParams(0.5, 1.0)
    fam = build_family(p, make_grid(1.0, 64), blocks=4, ladder=5)
    seeds = SeedSpec(9)
    rng = np.random.default_rng(2024)

    def feats(q):
        b = q.values
        return np.stack([b[..., -1], b[..., -1] ** 2, np.abs(b[..., -1] - 0.2), b.max(axis=-1), np.cos(b[..., 32])])

    ok = dict(monotonicity=True, constants=True, subadditivity=True, homogeneity=True)
    for _ in range(100):
        cx, cy = rng.uniform(-2, 2, (2, 5))
        lam, c = rng.uniform(0, 10), rng.uniform(-5, 5)
        x = lambda q, cx=cx: np.tensordot(cx, feats(q), axes=1)
        y = lambda q, cy=cy: np.tensordot(cy, feats(q), axes=1)
        vx, vy, vsum, vlam, vmono, vc = sublinear_expectations(
            [x, y, lambda q: x(q) + y(q), lambda q: lam * x(q), lambda q: x(q) + np.abs(y(q)),
             lambda q: np.full(q.values.shape[0], c)],
            fam, 200, seeds,
        )
        ok["monotonicity"] &= vx.value <= vmono.value
        ok["constants"] &= abs(vc.value - c) <= 1e-10
        ok["subadditivity"] &= vsum.value <= vx.value + vy.value + 1e-10
        ok["homogeneity"] &= abs(vlam.value - lam * vx.value) <= 1e-10 * (1 + abs(lam * vx.value))
    single = constant_control(fam.grid, 0.75)
    r = sublinear_expectation(lambda q: q.values[..., -1] ** 2, ControlFamily.of([single]), 500, seeds)
    ok["singleton reduction exact"] = r.value == np.mean(sample_paths(single, seeds.seed, 500).values[:, -1] ** 2)
    verdict(9, ok, time.perf_counter() - start, 60)


def test_10_bdg(verdict, tmp_path):
    start = time.perf_counter()
    cfg = config(tmp_path, "experiment = bdg\nsigma_lo = 1\nsigma_hi = 1\nn_paths = 10000")
    rep = run_experiment(cfg, plots=False)
    checks = {
        f"lhs/mid in [1, 4] (got {rep.summary['ratio']:.3f})": 1.0 <= rep.summary["ratio"] <= 4.0,
        "lo <= mid <= hi pathwise": rep.flags["pathwise_ordered"],
        "E[int dB] within 3se of 0": rep.flags["mean_integral_within_3se"],
    }
    verdict(10, checks, time.perf_counter() - start, 60)


def test_11_holder_exponent(verdict, tmp_path):
    start = time.perf_counter()
    cfg = config(tmp_path, "experiment = holder-field\nsigma_lo = 1\nsigma_hi = 1\nn_steps = 16384\nn_paths = 100\nn_levels = 64")
    rep = run_experiment(cfg, plots=False)
    checks = {f"exponent >= 0.35 (got {rep.summary['exponent']:.3f})": rep.flags["exponent_at_least_0.35"]}
    verdict(11, checks, time.perf_counter() - start, 120)


REPRO = {
    "gheat-oracle": "n_steps = 512\nn_paths = 600",
    "tanaka": "sigma_lo = 1\nn_steps = 1024\nn_paths = 600",
    "delta-bound": "n_steps = 512\nn_paths = 600",
    "occupation": "n_steps = 512\nn_paths = 600",
    "qv-localtime": "sigma_lo = 1\nn_steps = 2048\nn_paths = 300\ndyadic_n = 5",
    "convex-ito": "n_steps = 512\nn_paths = 600",
    "bdg": "n_steps = 512\nn_paths = 600",
    "holder-field": "sigma_lo = 1\nn_steps = 1024\nn_paths = 300",
    "fubini": "n_steps = 512\nn_paths = 600",
}


def test_12_reproducibility(verdict, tmp_path):
    start = time.perf_counter()
    checks = {}
    for name, body in REPRO.items():
        cfg_path = tmp_path / f"{name}.cfg"
        cfg_path.write_text(f"experiment = {name}\nseed = 11\n{body}\n")
        outputs = []
        for threads in ("1", "4", "4"):
            out = tmp_path / f"{name}-t{threads}-{len(outputs)}"
            env = dict(os.environ, G_CALC_THREADS=threads)
            subprocess.run(
                [sys.executable, "-m", "gcalc.cli", str(cfg_path), "--out", str(out), "--no-plot"],
                env=env, check=False, capture_output=True,
            )
            csv_path = out / f"{name}-11.csv"
            outputs.append(csv_path.read_bytes() if csv_path.exists() else None)
        checks[name] = outputs[0] is not None and outputs[0] == outputs[1] == outputs[2]
    verdict(12, checks, time.perf_counter() - start)
