import math

import numpy as np
import pytest

from vsmhl import (
    ConfigurationError,
    DegenerateStateError,
    GammaLaw,
    ModelParams,
    ParticlePaths,
    PointMass,
    ValidationError,
    euler_full_truncation,
    log_growth_diagnostic,
    mean_path,
    paths_to_csv,
    sample_initial,
    simulate_system,
    split_rng,
)


def scalar_scheme(eta: float, y0: np.ndarray, h: float, noise: np.ndarray) -> np.ndarray:
    """Independent N=1 replications of the scheme, vectorized over columns."""
    y = y0.copy()
    for k in range(noise.shape[0]):
        y = np.maximum(y + 0.5 * eta * y * h + y * math.sqrt(h) * noise[k], 0.0)
    return y


class TestSimulate:
    def test_initial_total_matches_samples_exactly(self):
        params = ModelParams(2.0, 37, 1.0)
        law = GammaLaw(2.0, 0.5)
        paths = simulate_system(params, law, 0.05, split_rng(3))
        y0 = sample_initial(law, 37, split_rng(3))
        assert np.array_equal(paths.positions[:, 0], y0)
        assert paths.totals[0] == y0.sum()

    def test_bit_identical_reruns(self):
        params = ModelParams(2.5, 16, 0.5)
        a = simulate_system(params, PointMass(1.0), 0.01, split_rng(8))
        b = simulate_system(params, PointMass(1.0), 0.01, split_rng(8))
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.totals, b.totals)

    def test_nonnegative_even_with_coarse_steps(self):
        params = ModelParams(4.0, 8, 2.0)
        paths = simulate_system(params, GammaLaw(0.5, 1.0), 0.5, split_rng(10))
        assert paths.positions.min() >= 0.0

    def test_grid_spans_horizon(self):
        params = ModelParams(2.0, 4, 0.7)
        paths = simulate_system(params, PointMass(1.0), 0.1, split_rng(0))
        assert paths.time_grid[0] == 0.0
        assert paths.time_grid[-1] == 0.7

    def test_n1_reduces_to_scalar_scheme_bitwise(self):
        params = ModelParams(2.0, 1, 1.0)
        paths = simulate_system(params, PointMass(1.0), 1 / 512, split_rng(5))
        rng = split_rng(5)
        y0 = sample_initial(PointMass(1.0), 1, rng)
        noise = rng.standard_normal((512, 1))
        ref = euler_full_truncation(2.0, y0, 1 / 512, noise)
        assert np.array_equal(paths.positions, ref)

    def test_n1_gbm_mean(self):
        # at N=1 the scheme is Euler for dY = (eta/2) Y dt + Y dB, whose exact
        # mean at t=1 is e^{eta/2}; 10^4 replications, vectorized columns
        eta, steps, reps = 2.0, 512, 10**4
        rng = split_rng(11)
        noise = rng.standard_normal((steps, reps))
        y = scalar_scheme(eta, np.ones(reps), 1.0 / steps, noise)
        se = y.std(ddof=1) / math.sqrt(reps)
        assert abs(y.mean() - math.e) < 3 * se

    def test_validation_errors_propagate(self):
        with pytest.raises(ValidationError):
            simulate_system(ModelParams(1.0, 4, 1.0), PointMass(1.0), 0.1, split_rng(0))
        with pytest.raises(ValidationError):
            simulate_system(ModelParams(2.0, 4, 1.0), PointMass(0.0), 0.1, split_rng(0))

    def test_dt_bounds(self):
        params = ModelParams(2.0, 4, 1.0)
        with pytest.raises(ValueError):
            simulate_system(params, PointMass(1.0), 0.0, split_rng(0))
        with pytest.raises(ValueError):
            simulate_system(params, PointMass(1.0), 2.0, split_rng(0))

    def test_overflow_guard(self):
        params = ModelParams(2.0, 4, 1000.0)
        with pytest.raises(ConfigurationError, match="horizon"):
            simulate_system(params, PointMass(1.0), 0.1, split_rng(0))

    def test_degenerate_state_error(self):
        with pytest.raises(DegenerateStateError):
            euler_full_truncation(2.0, np.zeros(3), 0.1, np.zeros((2, 3)))


class TestMomentIdentities:
    def test_first_and_second_moment(self):
        # E[S(t)] = E[S(0)] e^{eta t/2}, E[S(t)^2] = E[S(0)^2] e^{(eta+1/N)t}
        eta, n, reps = 2.0, 64, 80
        params = ModelParams(eta, n, 1.0)
        finals = np.array(
            [simulate_system(params, PointMass(1.0), 2e-3, split_rng(31, r)).totals[-1] for r in range(reps)]
        )
        target1 = n * math.exp(eta / 2)
        se1 = finals.std(ddof=1) / math.sqrt(reps)
        assert abs(finals.mean() - target1) < 3 * se1
        sq = finals**2
        target2 = (n + n * (n - 1)) * math.exp((eta + 1.0 / n) * 1.0)
        se2 = sq.std(ddof=1) / math.sqrt(reps)
        assert abs(sq.mean() - target2) < 4 * se2


class TestStrongError:
    def test_halving_ratio_band(self):
        # error against the exact geometric solution driven by the same
        # increments decays roughly like sqrt(dt)
        eta, reps = 2.0, 2000
        fine = 10
        n_fine = 2**fine
        rng = split_rng(41)
        increments = rng.standard_normal((n_fine, reps)) * math.sqrt(1.0 / n_fine)
        exact = np.exp((eta / 2 - 0.5) + increments.sum(axis=0))
        errors = {}
        for level in range(6, 11):
            n = 2**level
            agg = increments.reshape(n, n_fine // n, reps).sum(axis=1)
            y = np.ones(reps)
            h = 1.0 / n
            for k in range(n):
                y = np.maximum(y + 0.5 * eta * y * h + y * agg[k], 0.0)
            errors[level] = np.abs(y - exact).mean()
        for level in range(6, 10):
            ratio = errors[level] / errors[level + 1]
            assert 1.2 <= ratio <= 3.0


class TestMeanPath:
    def test_elementwise_division(self):
        grid = np.array([0.0, 1.0])
        positions = np.array([[1.0, 2.0]] * 4)
        totals = np.array([positions[:, 0].sum(), positions[:, 1].sum()])
        paths = ParticlePaths(grid, positions, totals)
        assert np.array_equal(mean_path(paths), [1.0, 2.0])

    def test_starts_at_initial_mean(self):
        params = ModelParams(2.0, 32, 1.0)
        paths = simulate_system(params, PointMass(1.0), 0.05, split_rng(51))
        assert mean_path(paths)[0] == 1.0

    def test_supremum_gap_shrinks_with_n(self):
        # the average position tracks e^{eta t / 2} better at larger N
        eta, reps = 2.0, 20
        meds = {}
        for n in (64, 1024):
            sups = []
            for r in range(reps):
                params = ModelParams(eta, n, 1.0)
                paths = simulate_system(params, PointMass(1.0), 5e-3, split_rng(52, n, r))
                curve = np.exp(0.5 * eta * paths.time_grid)
                sups.append(np.abs(mean_path(paths) - curve).max())
            meds[n] = np.median(sups)
        assert meds[1024] < meds[64]


class TestLogGrowthDiagnostic:
    def test_constant_path_gives_zero_increments(self):
        grid = np.linspace(0.0, 1.0, 5)
        positions = np.full((3, 5), 2.0)
        totals = np.array([positions[:, j].sum() for j in range(5)])
        paths = ParticlePaths(grid, positions, totals)
        inc, wts = log_growth_diagnostic(paths, 0)
        assert np.all(inc == 0.0)
        assert np.allclose(wts, 1.0 / 3.0)

    def test_single_e_fold_step(self):
        grid = np.array([0.0, 1.0])
        positions = np.array([[2.0, 2.0 * math.e]])
        totals = np.array([positions[:, 0].sum(), positions[:, 1].sum()])
        inc, _ = log_growth_diagnostic(ParticlePaths(grid, positions, totals), 0)
        assert inc[0] == pytest.approx(1.0, rel=1e-14)

    def test_smaller_weight_grows_faster(self):
        # start one particle 10x larger; over many replications the smaller
        # particle's average log increment dominates, as the weight-scaled
        # drift (eta - 1) / (2 alpha) predicts
        eta, reps, steps = 4.0, 500, 50
        small_mean, large_mean = [], []
        for r in range(reps):
            rng = split_rng(61, r)
            noise = rng.standard_normal((steps, 2))
            positions = euler_full_truncation(eta, np.array([1.0, 10.0]), 1e-3, noise)
            if positions.min() <= 0:
                continue
            logs = np.log(positions)
            small_mean.append(np.diff(logs[0]).mean())
            large_mean.append(np.diff(logs[1]).mean())
        assert np.mean(small_mean) > np.mean(large_mean)

    def test_rejects_zero_values(self):
        grid = np.array([0.0, 1.0])
        positions = np.array([[0.0, 1.0], [1.0, 1.0]])
        totals = np.array([positions[:, 0].sum(), positions[:, 1].sum()])
        with pytest.raises(ValueError, match="positive"):
            log_growth_diagnostic(ParticlePaths(grid, positions, totals), 0)


class TestParticlePathsInvariants:
    def test_rejects_mismatched_totals(self):
        grid = np.array([0.0, 1.0])
        positions = np.ones((2, 2))
        with pytest.raises(ValueError, match="totals"):
            ParticlePaths(grid, positions, np.array([2.0, 2.0001]))

    def test_rejects_negative_positions(self):
        grid = np.array([0.0, 1.0])
        positions = np.array([[1.0, -0.1]])
        totals = np.array([1.0, -0.1])
        with pytest.raises(ValueError, match="nonnegative"):
            ParticlePaths(grid, positions, totals)

    def test_rejects_bad_grid(self):
        positions = np.ones((1, 2))
        totals = np.array([1.0, 1.0])
        with pytest.raises(ValueError, match="grid"):
            ParticlePaths(np.array([0.5, 1.0]), positions, totals)


def test_csv_export_with_particle_cap(tmp_path):
    params = ModelParams(2.0, 6, 0.2)
    paths = simulate_system(params, PointMass(1.0), 0.1, split_rng(71))
    out = tmp_path / "paths.csv"
    paths_to_csv(paths, out, max_particles=2)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "t,total,y0,y1"
    assert len(lines) == len(paths.time_grid) + 1
