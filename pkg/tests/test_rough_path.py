import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughflow.rough_core import ParameterError, TimeGrid
from roughflow.rough_path import (
    NoiseSpec,
    RoughPath,
    canonical_lift,
    chen_defect,
    restrict,
    rough_distance,
    sample_noise,
    time_reverse,
    translate,
)


def random_lift(rng, n=16, m=2):
    z = rng.standard_normal((n + 1, m)).cumsum(axis=0)
    return canonical_lift(TimeGrid.uniform(0, 1, n), z)


class TestCanonicalLift:
    def test_linear_path_second_level(self):
        g = TimeGrid.uniform(0, 1, 8)
        rp = canonical_lift(g, g.times.copy())
        assert rp.second(0, 8)[0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_constant_path_vanishes(self):
        g = TimeGrid.uniform(0, 1, 8)
        rp = canonical_lift(g, np.full((9, 2), 1.7))
        assert np.all(rp.second_adjacent == 0.0)
        assert np.all(rp.increment(0, 8) == 0.0)

    def test_circle_levy_area(self):
        g = TimeGrid.dyadic(12)
        theta = 2 * np.pi * g.times
        rp = canonical_lift(g, np.stack([np.cos(theta), np.sin(theta)], axis=1))
        zz = rp.second(0, len(g) - 1)
        area = 0.5 * (zz[0, 1] - zz[1, 0])
        assert area == pytest.approx(np.pi, abs=1e-3)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            canonical_lift(TimeGrid.uniform(0, 1, 4), np.zeros((3, 2)))


class TestChenDefect:
    def test_canonical_lift_is_chen_consistent(self, rng):
        rp = random_lift(rng, n=24, m=3)
        scale = 1e-12 * (1 + np.abs(rp.first_level).max() ** 2)
        assert chen_defect(rp) <= scale

    def test_corrupted_entry_detected(self, rng):
        rp = random_lift(rng, n=12, m=2).with_dense_second()
        dense = rp.second_dense.copy()
        dense[3, 9, 0, 1] += 1.0
        bad = RoughPath(
            rp.grid, rp.first_level, rp.second_adjacent, rp.p_exponent, dense
        )
        assert chen_defect(bad) >= 1.0 - 1e-9

    def test_sampler_outputs_pass(self):
        g = TimeGrid.uniform(0, 1, 40)
        for spec in (
            NoiseSpec("brownian", 2, g, seed=1),
            NoiseSpec("fbm", 2, g, seed=2, hurst=0.45),
        ):
            rp = sample_noise(spec)
            scale = 1e-12 * (1 + np.abs(rp.first_level).max() ** 2)
            assert chen_defect(rp) <= scale


class TestSamplers:
    def test_brownian_two_point_grid_is_seeded_normal(self):
        g = TimeGrid(np.array([0.0, 1.0]))
        rp = sample_noise(NoiseSpec("brownian", 1, g, seed=7))
        from roughflow.rough_path import rng_for

        expected = rng_for(7).standard_normal((1, 1))[0, 0]
        assert rp.first_level[1, 0] - rp.first_level[0, 0] == pytest.approx(expected)

    def test_bit_reproducible(self):
        g = TimeGrid.uniform(0, 1, 32)
        spec = NoiseSpec("fbm", 2, g, seed=99, hurst=0.6)
        a = sample_noise(spec)
        b = sample_noise(spec)
        assert np.array_equal(a.first_level, b.first_level)
        assert np.array_equal(a.second_adjacent, b.second_adjacent)

    def test_fbm_half_matches_brownian_covariance(self):
        # Monte Carlo moment check on a small non-uniform grid.
        g = TimeGrid(np.array([0.0, 0.3, 0.55, 1.0]))
        n_mc = 4000
        incs = np.empty((n_mc, 3))
        for s in range(n_mc):
            rp = sample_noise(NoiseSpec("fbm", 1, g, seed=s, hurst=0.5))
            incs[s] = np.diff(rp.first_level[:, 0])
        cov = np.cov(incs.T)
        expected = np.diag(np.diff(g.times))
        se = 5.0 * np.sqrt(2.0 / n_mc) * np.abs(expected).max()
        assert np.abs(cov - expected).max() < max(se, 0.03)

    def test_fbm_variance_scaling(self):
        g = TimeGrid.uniform(0, 1, 16)
        for hurst in (0.4, 0.75, 1.0):
            vals = np.array(
                [
                    sample_noise(
                        NoiseSpec("fbm", 1, g, seed=s, hurst=hurst)
                    ).first_level[-1, 0]
                    for s in range(1500)
                ]
            )
            assert vals.var() == pytest.approx(1.0, abs=0.12)

    def test_fbm_p_exponent_default(self):
        g = TimeGrid.uniform(0, 1, 8)
        assert sample_noise(
            NoiseSpec("fbm", 1, g, seed=0, hurst=0.75)
        ).p_exponent == pytest.approx(2.01)
        assert sample_noise(
            NoiseSpec("fbm", 1, g, seed=0, hurst=0.4)
        ).p_exponent == pytest.approx(2.51)

    def test_piecewise_linear_from_samples(self, rng):
        g = TimeGrid.uniform(0, 1, 12)
        samples = rng.standard_normal((13, 2)).cumsum(axis=0)
        rp = sample_noise(
            NoiseSpec("piecewise-linear-from-samples", 2, g, samples=samples)
        )
        direct = canonical_lift(g, samples)
        assert np.array_equal(rp.first_level, direct.first_level)
        assert np.array_equal(rp.second_adjacent, direct.second_adjacent)

    def test_samples_required_for_piecewise_linear(self):
        g = TimeGrid.uniform(0, 1, 4)
        with pytest.raises(ParameterError):
            NoiseSpec("piecewise-linear-from-samples", 2, g)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_chen_bound_property(self, seed):
        rng = np.random.default_rng(seed)
        scale = rng.uniform(0.1, 10.0)
        g = TimeGrid.uniform(0, 1, 10)
        z = scale * rng.standard_normal((11, 2)).cumsum(axis=0)
        rp = canonical_lift(g, z)
        assert chen_defect(rp) <= 1e-12 * (1 + np.abs(z).max() ** 2)

    def test_hurst_out_of_range_rejected(self):
        g = TimeGrid.uniform(0, 1, 8)
        with pytest.raises(ParameterError):
            NoiseSpec("fbm", 1, g, seed=0, hurst=0.25)
        with pytest.raises(ParameterError):
            NoiseSpec("fbm", 1, g, seed=0, hurst=1.2)


class TestTimeReverse:
    def test_double_reversal_identity(self, rng):
        rp = random_lift(rng, n=20, m=2)
        back = time_reverse(time_reverse(rp))
        assert np.abs(back.first_level - rp.first_level).max() <= 1e-14
        assert np.abs(back.second_adjacent - rp.second_adjacent).max() <= 1e-14
        assert np.abs(back.grid.times - rp.grid.times).max() <= 1e-14

    def test_linear_path_formula(self):
        # Z_t = t: zz_{st} = (t-s)^2/2 and the reversal reproduces it.
        g = TimeGrid.uniform(0, 1, 10)
        rp = canonical_lift(g, g.times.copy())
        rev = time_reverse(rp)
        assert rev.second(0, 10)[0, 0] == pytest.approx(0.5, abs=1e-14)
        assert rev.second(2, 7)[0, 0] == pytest.approx(
            0.5 * (g.times[7] - g.times[2]) ** 2, abs=1e-14
        )

    def test_commutes_with_canonical_lift(self, rng):
        g = TimeGrid.uniform(0, 1, 15)
        z = rng.standard_normal((16, 2)).cumsum(axis=0)
        lift_then_reverse = time_reverse(canonical_lift(g, z))
        reverse_then_lift = canonical_lift(g, z[::-1])
        assert np.abs(
            lift_then_reverse.first_level - reverse_then_lift.first_level
        ).max() <= 1e-12
        assert np.abs(
            lift_then_reverse.second_adjacent - reverse_then_lift.second_adjacent
        ).max() <= 1e-12

    def test_reversal_satisfies_chen(self, rng):
        rp = time_reverse(random_lift(rng, n=14, m=2))
        scale = 1e-12 * (1 + np.abs(rp.first_level).max() ** 2)
        assert chen_defect(rp) <= scale

    def test_wide_window_formula(self, rng):
        # reversed zz_{st} = -zz_{T-t,T-s} + dZrev (x) dZrev on wide windows
        rp = random_lift(rng, n=12, m=2)
        rev = time_reverse(rp)
        n = 12
        for (s, t) in [(0, 5), (3, 11), (2, 7)]:
            dz = rev.increment(s, t)
            expected = -rp.second(n - t, n - s) + np.outer(dz, dz)
            assert np.abs(rev.second(s, t) - expected).max() <= 1e-12


class TestRoughDistance:
    def test_identity_of_indiscernibles(self, rng):
        rp = random_lift(rng)
        assert rough_distance(rp, rp) == 0.0

    def test_symmetry(self, rng):
        a = random_lift(rng)
        b = random_lift(rng)
        assert rough_distance(a, b) == pytest.approx(rough_distance(b, a), rel=1e-12)

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=10, deadline=None)
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (random_lift(rng, n=8) for _ in range(3))
        assert rough_distance(a, c) <= (
            rough_distance(a, b) + rough_distance(b, c) + 1e-12
        )

    def test_dyadic_interpolations_converge(self):
        # piecewise-linear coarsenings of one Brownian sample, compared on
        # the common fine grid: consecutive distances decrease.
        base_grid = TimeGrid.dyadic(10)
        base = sample_noise(NoiseSpec("brownian", 1, base_grid, seed=4)).first_level
        lifts = []
        for lev in (6, 7, 8, 9, 10):
            f = 2 ** (10 - lev)
            coarse = base[::f]
            # linear interpolation back onto the fine grid
            t_c = base_grid.times[::f]
            fine_vals = np.stack(
                [np.interp(base_grid.times, t_c, coarse[:, k]) for k in range(1)],
                axis=1,
            )
            lifts.append(canonical_lift(base_grid, fine_vals))
        dists = [
            rough_distance(a, b, p=2.5) for a, b in zip(lifts[:-1], lifts[1:])
        ]
        assert all(x > y for x, y in zip(dists, dists[1:]))

    def test_grid_mismatch_rejected(self, rng):
        a = random_lift(rng, n=8)
        b = random_lift(rng, n=10)
        with pytest.raises(ValueError):
            rough_distance(a, b)


class TestRestrictTranslate:
    def test_restrict_full_window_is_identity(self, rng):
        rp = random_lift(rng, n=10)
        sub = restrict(rp, (0, 10))
        assert np.array_equal(sub.first_level, rp.first_level)
        assert np.array_equal(sub.second_adjacent, rp.second_adjacent)

    def test_restrict_keeps_chen(self, rng):
        rp = random_lift(rng, n=16)
        sub = restrict(rp, (3, 12))
        scale = 1e-12 * (1 + np.abs(sub.first_level).max() ** 2)
        assert chen_defect(sub) <= scale

    def test_translate_zero_is_identity(self, rng):
        rp = random_lift(rng, n=10)
        assert translate(rp, 0) is rp

    def test_translate_cocycle_increments(self, rng):
        rp = random_lift(rng, n=12)
        shifted = translate(rp, 4)
        for (s, t) in [(0, 3), (2, 8)]:
            assert np.array_equal(shifted.increment(s, t), rp.increment(s + 4, t + 4))
            assert np.abs(shifted.second(s, t) - rp.second(s + 4, t + 4)).max() <= 1e-12

    def test_translate_semigroup(self, rng):
        rp = random_lift(rng, n=12)
        a = translate(translate(rp, 3), 4)
        b = translate(rp, 7)
        assert np.array_equal(a.first_level, b.first_level)
        assert np.array_equal(a.second_adjacent, b.second_adjacent)
        assert np.abs(a.grid.times - b.grid.times).max() <= 1e-14

    def test_out_of_range_window(self, rng):
        rp = random_lift(rng, n=8)
        with pytest.raises(ParameterError):
            restrict(rp, (5, 20))
        with pytest.raises(ParameterError):
            translate(rp, 99)


class TestSerialization:
    def test_round_trip_lossless(self, rng):
        rp = random_lift(rng, n=13, m=3)
        back = RoughPath.from_json(rp.to_json())
        assert np.array_equal(back.first_level, rp.first_level)
        assert np.array_equal(back.second_adjacent, rp.second_adjacent)
        assert np.array_equal(back.grid.times, rp.grid.times)
        assert back.p_exponent == rp.p_exponent
