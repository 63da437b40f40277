import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcalc import EstimationError, GParams, SeedSpec, ValidationError, constant_control, make_grid, sample_paths
from gcalc.expectation import (
    MAX_BLOCKS,
    ControlFamily,
    bdg_check,
    build_family,
    sublinear_expectation,
    sublinear_expectations,
)

BAND = GParams(0.5, 1.0)
GRID = make_grid(1.0, 64)
FAMILY = build_family(BAND, GRID, blocks=3, ladder=3)
SEEDS = SeedSpec(17)
N_PATHS = 200


def features(path):
    b = path.values
    return np.stack([b[..., -1], b[..., -1] ** 2, np.abs(b[..., -1] - 0.3), b.max(axis=-1), path.qv[..., -1]])


def payoff(coef):
    coef = np.asarray(coef, dtype=float)
    return lambda path: np.tensordot(coef, features(path), axes=1)


coefs = st.lists(st.floats(-3, 3), min_size=5, max_size=5)


class TestFamily:
    def test_contents(self):
        fam = build_family(BAND, GRID, blocks=4, ladder=5)
        # the two constant controls appear in both parts
        assert len(fam) == 2**4 + 5 - 2
        sigs = {c.signature for c in fam.controls}
        assert constant_control(GRID, 0.5).signature in sigs
        assert constant_control(GRID, 1.0).signature in sigs
        for c in fam.controls:
            c.check(BAND)

    def test_sorted_and_deduplicated(self):
        c = [constant_control(GRID, s) for s in (1.0, 0.5, 1.0, 0.7)]
        fam = ControlFamily.of(c)
        assert [x.sigmas[0] for x in fam.controls] == [0.5, 0.7, 1.0]

    def test_classical_collapses(self):
        assert len(build_family(GParams(1.0, 1.0), GRID, 6, 5)) == 1

    @pytest.mark.parametrize("blocks, ladder", [(0, 5), (MAX_BLOCKS + 1, 5), (3, 1)])
    def test_rejects(self, blocks, ladder):
        with pytest.raises(ValidationError):
            build_family(BAND, GRID, blocks, ladder)

    def test_empty(self):
        with pytest.raises(ValidationError):
            ControlFamily.of([])

    def test_grid_mismatch(self):
        with pytest.raises(ValidationError):
            ControlFamily(GRID, (constant_control(make_grid(1.0, 32), 1.0),))

    def test_block_structure(self):
        fam = build_family(BAND, make_grid(1.0, 12), blocks=3, ladder=2)
        for c in fam.controls:
            assert np.all(c.sigmas.reshape(3, 4) == c.sigmas.reshape(3, 4)[:, :1])


class TestEstimator:
    def test_value_is_max_of_means(self):
        r = sublinear_expectation(payoff([1, 1, 0, 0, 0]), FAMILY, N_PATHS, SEEDS)
        assert r.value == r.per_control_means.max()
        assert r.std_error >= 0
        assert r.argmax_control is FAMILY.controls[r.argmax_index]

    def test_singleton_is_plain_mean(self):
        c = constant_control(GRID, 1.0)
        r = sublinear_expectation(lambda p: p.values[..., -1], ControlFamily.of([c]), 300, SEEDS)
        plain = sample_paths(c, SEEDS.seed, 300).values[:, -1]
        assert r.value == plain.mean()
        assert r.std_error == pytest.approx(plain.std(ddof=1) / np.sqrt(300), rel=1e-12)

    def test_classical_band_is_plain_mean(self):
        fam = build_family(GParams(0.8, 0.8), GRID)
        r = sublinear_expectation(lambda p: p.values[..., -1] ** 2, fam, 300, SEEDS)
        plain = sample_paths(constant_control(GRID, 0.8), SEEDS.seed, 300).values[:, -1] ** 2
        assert r.value == plain.mean()

    def test_second_moment_oracles(self):
        fam = ControlFamily.of([constant_control(GRID, 0.5), constant_control(GRID, 1.0)])
        up, down = sublinear_expectations(
            [lambda p: p.values[..., -1] ** 2, lambda p: -p.values[..., -1] ** 2], fam, 10_000, SEEDS
        )
        assert abs(up.value - 1.0) <= 3 * up.std_error
        assert abs(down.value + 0.25) <= 3 * down.std_error
        assert up.argmax_control.sigmas[0] == 1.0 and down.argmax_control.sigmas[0] == 0.5

    def test_nonfinite_names_control_and_path(self):
        def bad(p):
            out = p.values[..., -1].copy()
            if p.values.shape[0] > 7 and np.all(p.qv[..., -1] == 1.0):
                out[7] = np.nan
            return out

        fam = ControlFamily.of([constant_control(GRID, 0.5), constant_control(GRID, 1.0)])
        with pytest.raises(EstimationError, match=r"control #1.*path 7"):
            sublinear_expectation(bad, fam, 20, SEEDS)

    def test_wrong_output_length(self):
        with pytest.raises(ValidationError):
            sublinear_expectation(lambda p: np.zeros(3), FAMILY, 20, SEEDS)

    def test_needs_two_paths(self):
        with pytest.raises(ValidationError):
            sublinear_expectation(lambda p: p.values[..., -1], FAMILY, 1, SEEDS)

    def test_chunking_does_not_change_values(self):
        # 600 paths spans three chunks; the first 256 must match a 256-path run
        f = lambda p: np.abs(p.values[..., -1])
        a = sublinear_expectation(f, FAMILY, 600, SEEDS)
        b = sublinear_expectation(f, FAMILY, 256, SEEDS)
        assert not np.array_equal(a.per_control_means, b.per_control_means)
        from gcalc.expectation import evaluate_family

        np.testing.assert_array_equal(evaluate_family(f, FAMILY, 600, SEEDS)[..., :256], evaluate_family(f, FAMILY, 256, SEEDS))

    def test_thread_count_invariant(self, monkeypatch):
        f = lambda p: np.abs(p.values[..., -1])
        monkeypatch.setenv("G_CALC_THREADS", "1")
        a = sublinear_expectation(f, FAMILY, 600, SEEDS)
        monkeypatch.setenv("G_CALC_THREADS", "4")
        b = sublinear_expectation(f, FAMILY, 600, SEEDS)
        np.testing.assert_array_equal(a.per_control_means, b.per_control_means)
        assert a.std_error == b.std_error


class TestAxioms:
    @given(coefs, coefs)
    def test_subadditivity(self, cx, cy):
        x, y = payoff(cx), payoff(cy)
        vx, vy, vxy = sublinear_expectations([x, y, lambda p: x(p) + y(p)], FAMILY, N_PATHS, SEEDS)
        assert vxy.value <= vx.value + vy.value + 1e-10

    @given(coefs, st.floats(0, 50))
    def test_positive_homogeneity(self, cx, lam):
        x = payoff(cx)
        vx, vl = sublinear_expectations([x, lambda p: lam * x(p)], FAMILY, N_PATHS, SEEDS)
        assert abs(vl.value - lam * vx.value) <= 1e-10 * (1 + abs(lam * vx.value))

    @given(coefs, coefs)
    def test_monotonicity(self, cx, cy):
        x = payoff(cx)
        y = lambda p: x(p) + np.abs(payoff(cy)(p))
        vx, vy = sublinear_expectations([x, y], FAMILY, N_PATHS, SEEDS)
        assert vx.value <= vy.value

    @given(st.floats(-1e3, 1e3))
    def test_constants(self, c):
        r = sublinear_expectation(lambda p: np.full(p.values.shape[0], c), FAMILY, N_PATHS, SEEDS)
        # summing 200 copies of c can move the mean by an ulp
        assert abs(r.value - c) <= 1e-10 * (1 + abs(c))

    @given(coefs, st.randoms(use_true_random=False))
    def test_enumeration_order_irrelevant(self, cx, rnd):
        controls = list(FAMILY.controls)
        rnd.shuffle(controls)
        a = sublinear_expectation(payoff(cx), FAMILY, N_PATHS, SEEDS)
        b = sublinear_expectation(payoff(cx), ControlFamily.of(controls), N_PATHS, SEEDS)
        assert a.value == b.value
        assert a.argmax_control.signature == b.argmax_control.signature

    @given(coefs, st.integers(1, len(FAMILY) - 1))
    def test_enlarging_never_decreases(self, cx, k):
        small = ControlFamily.of(FAMILY.controls[:k])
        assert sublinear_expectation(payoff(cx), small, N_PATHS, SEEDS).value <= sublinear_expectation(
            payoff(cx), FAMILY, N_PATHS, SEEDS
        ).value

    def test_tie_goes_to_smallest_signature(self):
        r = sublinear_expectation(lambda p: np.zeros(p.values.shape[0]), FAMILY, N_PATHS, SEEDS)
        assert r.argmax_index == 0
        assert r.argmax_control.signature == min(c.signature for c in FAMILY.controls)


class TestBDG:
    def test_zero_integrand(self):
        r = bdg_check(lambda p: np.zeros(p.increments.shape), FAMILY, 1.0, 50, SEEDS, BAND)
        assert (r.lhs, r.mid, r.hi, r.lo) == (0.0, 0.0, 0.0, 0.0)
        assert r.within_constants

    def test_classical_unit_integrand(self):
        p = GParams(1.0, 1.0)
        fam = build_family(p, make_grid(1.0, 1024))
        r = bdg_check(lambda q: np.ones(q.increments.shape), fam, 1.0, 2000, SEEDS, p)
        assert r.mid == pytest.approx(1.0, rel=1e-12)
        assert r.mid <= r.lhs <= 4 * r.mid
        assert r.pathwise_ordered and r.lo <= r.mid <= r.hi
        assert abs(r.mean_integral.value) <= 3 * r.mean_integral.std_error

    def test_band_orderings(self):
        integrand = lambda q: np.sign(q.left) + 0.5
        r = bdg_check(integrand, FAMILY, 1.0, 300, SEEDS, BAND)
        assert r.pathwise_ordered
        assert r.lo <= r.mid <= r.hi

    def test_preconditions(self):
        f = lambda q: np.ones(q.increments.shape)
        with pytest.raises(ValidationError):
            bdg_check(f, FAMILY, 0.5, 50, SEEDS, BAND)
        with pytest.raises(ValidationError):
            bdg_check(f, FAMILY, 2.0, 50, SEEDS, BAND)
        assert bdg_check(f, FAMILY, 2.0, 50, SEEDS, BAND, c_p=10.0).c_p == 10.0
