import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import gamma as gamma_dist

from vsmhl import (
    DiscreteAtoms,
    GammaLaw,
    ModelParams,
    PointMass,
    UniformLaw,
    ValidationError,
    law_from_dict,
    law_to_dict,
    moments,
    sample_initial,
    split_rng,
    validate,
)

ALL_LAWS = [
    PointMass(2.0),
    GammaLaw(2.0, 0.5),
    UniformLaw(0.0, 2.0),
    DiscreteAtoms(((0.0, 0.25), (1.0, 0.5), (4.0, 0.25))),
]


class TestMoments:
    def test_point_mass(self):
        assert moments(PointMass(1.0)) == (1.0, 1.0)

    def test_gamma_closed_form_vs_quadrature(self):
        m1, m2 = moments(GammaLaw(2.0, 0.5))
        assert m1 == pytest.approx(1.0, abs=1e-14)
        assert m2 == pytest.approx(1.5, abs=1e-14)
        q1 = quad(lambda x: x * gamma_dist.pdf(x, 2.0, scale=0.5), 0, np.inf)[0]
        q2 = quad(lambda x: x * x * gamma_dist.pdf(x, 2.0, scale=0.5), 0, np.inf)[0]
        assert m1 == pytest.approx(q1, rel=1e-10)
        assert m2 == pytest.approx(q2, rel=1e-10)

    def test_uniform_closed_form_vs_quadrature(self):
        m1, m2 = moments(UniformLaw(0.0, 2.0))
        assert m1 == pytest.approx(1.0, abs=1e-14)
        assert m2 == pytest.approx(4.0 / 3.0, abs=1e-14)
        q2 = quad(lambda x: x * x / 2.0, 0.0, 2.0)[0]
        assert m2 == pytest.approx(q2, rel=1e-12)

    def test_atoms(self):
        m1, m2 = moments(DiscreteAtoms(((1.0, 0.5), (3.0, 0.5))))
        assert m1 == 2.0
        assert m2 == 5.0

    def test_rejects_invalid_law(self):
        with pytest.raises(ValidationError, match="m_lambda"):
            moments(PointMass(0.0))
        with pytest.raises(ValidationError, match="support"):
            moments(UniformLaw(-1.0, 2.0))


class TestSampling:
    def test_point_mass_is_constant(self):
        out = sample_initial(PointMass(2.0), 3, split_rng(0))
        assert np.array_equal(out, [2.0, 2.0, 2.0])

    def test_gamma_lln_mean(self):
        draws = sample_initial(GammaLaw(2.0, 0.5), 10**5, split_rng(1))
        se = draws.std(ddof=1) / math.sqrt(len(draws))
        assert abs(draws.mean() - 1.0) < 3 * se

    def test_uniform_lln_second_moment(self):
        draws = sample_initial(UniformLaw(0.0, 2.0), 10**5, split_rng(2))
        sq = draws**2
        se = sq.std(ddof=1) / math.sqrt(len(sq))
        assert abs(sq.mean() - 4.0 / 3.0) < 3 * se

    @pytest.mark.parametrize("law", ALL_LAWS, ids=lambda l: type(l).__name__)
    def test_monte_carlo_matches_moments(self, law):
        m1, m2 = moments(law)
        draws = sample_initial(law, 10**6, split_rng(3))
        for data, target in ((draws, m1), (draws**2, m2)):
            se = data.std(ddof=1) / math.sqrt(len(data))
            assert abs(data.mean() - target) < max(4 * se, 1e-12)

    def test_deterministic_per_seed(self):
        a = sample_initial(GammaLaw(2.0, 0.5), 100, split_rng(9, 1))
        b = sample_initial(GammaLaw(2.0, 0.5), 100, split_rng(9, 1))
        assert np.array_equal(a, b)

    def test_nonnegative_support(self):
        for law in ALL_LAWS:
            assert sample_initial(law, 1000, split_rng(4)).min() >= 0

    def test_rejects_bad_n(self):
        with pytest.raises(ValueError):
            sample_initial(PointMass(1.0), 0, split_rng(0))


class TestValidate:
    def test_ok(self):
        assert validate(ModelParams(2.0, 10, 1.0), PointMass(1.0)) == []

    def test_eta_boundary(self):
        out = validate(ModelParams(1.0, 10, 1.0), PointMass(1.0))
        assert out == ["eta must exceed 1"]

    def test_degenerate_point_mass(self):
        out = validate(ModelParams(2.0, 10, 1.0), PointMass(0.0))
        assert "m_lambda must be positive" in out

    def test_collects_every_violation(self):
        out = validate(ModelParams(0.5, 0, -1.0), UniformLaw(-1.0, -2.0))
        assert len(out) >= 4

    def test_atom_weights_must_sum_to_one(self):
        out = validate(ModelParams(2.0, 1, 1.0), DiscreteAtoms(((1.0, 0.6), (2.0, 0.5))))
        assert any("sum to 1" in v for v in out)


class TestSerialization:
    @pytest.mark.parametrize("law", ALL_LAWS, ids=lambda l: type(l).__name__)
    def test_round_trip(self, law):
        assert law_from_dict(law_to_dict(law)) == law

    def test_example_schema(self):
        law = law_from_dict({"type": "gamma", "shape": 2, "scale": 0.5})
        assert law == GammaLaw(2.0, 0.5)

    def test_malformed(self):
        with pytest.raises(ValidationError):
            law_from_dict({"type": "gamma", "shape": 2})
        with pytest.raises(ValidationError):
            law_from_dict({"shape": 2})
        with pytest.raises(ValidationError):
            law_from_dict({"type": "cauchy"})


class TestSplitRng:
    def test_reproducible(self):
        assert split_rng(7, 3, 1).standard_normal(4).tolist() == split_rng(7, 3, 1).standard_normal(4).tolist()

    def test_keys_are_independent_streams(self):
        a = split_rng(7, 0).standard_normal(8)
        b = split_rng(7, 1).standard_normal(8)
        assert not np.array_equal(a, b)

    def test_adding_keys_never_perturbs_existing(self):
        # stream for key (64, 2) is the same whatever other keys get used
        before = split_rng(5, 64, 2).standard_normal(4)
        split_rng(5, 64, 3).standard_normal(4)
        split_rng(5, 128, 0).standard_normal(4)
        assert np.array_equal(before, split_rng(5, 64, 2).standard_normal(4))
