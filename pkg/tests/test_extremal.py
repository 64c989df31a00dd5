import math
import sys
import warnings
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

sys.path.append(str(Path(__file__).parent.parent))

from sections.errors import ExtremalError, PreconditionError
from sections.extremal import (
    OracleSettings,
    carleman_quotient,
    extremal_from_weights,
    oracle_maximize,
    reconstruct_extremal,
    verify_stationarity,
)
from sections.recursion import section_constant
from sections.weights import WeightSequence, estimate_constants

MU_2 = (1.0 + math.sqrt(2.0)) / 2.0


def _mu(seq, N):
    return section_constant(seq, estimate_constants(seq, 100), N).mu_N


@pytest.fixture(scope="module")
def unit():
    return WeightSequence.unit()


def test_reconstruct_single_term(unit):
    """Test N = 1 gives a = [1]"""
    v = reconstruct_extremal(unit, 1.0, 1)
    assert v.a.tolist() == [1.0]
    assert v.objective == 1.0
    assert verify_stationarity(unit, v, 1.0) == 0.0


def test_reconstruct_two_terms(unit):
    """Test the hand-solved N = 2 stationary point"""
    v = reconstruct_extremal(unit, MU_2, 2)
    assert v.a[0] == pytest.approx((2.0 + math.sqrt(2.0)) / 4.0, abs=1e-9)
    assert v.a == pytest.approx([0.853553, 0.146447], abs=1e-6)
    assert v.objective == pytest.approx(MU_2, abs=1e-9)
    assert verify_stationarity(unit, v, MU_2) <= 1e-10


@pytest.mark.parametrize("spec", ["unit", "power:alpha=1", "power:alpha=2"])
@pytest.mark.parametrize("N", [10, 100])
def test_reconstruct_matches_section_constant(spec, N):
    """Test objective = mu_N and stationarity at the reconstructed optimum"""
    seq = WeightSequence.parse(spec)
    mu = _mu(seq, N)
    v = reconstruct_extremal(seq, mu, N)
    assert np.all(v.a > 0)
    assert math.fsum(v.a) == pytest.approx(1.0, abs=1e-12)
    assert v.objective == pytest.approx(mu, abs=1e-9)
    assert verify_stationarity(seq, v, mu) <= 1e-8
    lam, Lam = seq.arrays(N)
    assert mu * v.a[-1] / lam[-1] == pytest.approx(v.G[-1] / Lam[-1], rel=1e-9)


def test_reconstruct_below_root_fails(unit):
    """Test a mu below mu_N makes some a_k non-positive"""
    with pytest.raises(ExtremalError):
        reconstruct_extremal(unit, 1.1, 10)


def test_uniform_point_is_not_stationary(unit):
    """Test the uniform vector at N = 3"""
    v = extremal_from_weights(unit, np.full(3, 1.0 / 3.0))
    assert verify_stationarity(unit, v, _mu(unit, 3)) > 1e-3


def test_extremal_from_weights_normalises(unit):
    """Test arbitrary positive vectors are put on the simplex"""
    v = extremal_from_weights(unit, [2.0, 1.0, 1.0])
    assert v.a == pytest.approx([0.5, 0.25, 0.25])
    assert v.G[0] == pytest.approx(0.5)
    assert v.G[1] == pytest.approx(math.sqrt(0.5 * 0.25))
    with pytest.raises(PreconditionError):
        extremal_from_weights(unit, [1.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(
    st.lists(st.floats(min_value=1e-3, max_value=1e3), min_size=1, max_size=12),
    st.floats(min_value=1e-3, max_value=1e3),
)
def test_quotient_scale_covariance(values, c):
    """Test sum G_n(c a) / sum(c a_n) does not depend on c"""
    seq = WeightSequence.power(2.0)
    a = np.asarray(values)
    assert carleman_quotient(seq, c * a) == pytest.approx(carleman_quotient(seq, a), rel=1e-12)


def test_quotient_bounded_by_section_constant(unit):
    """Test random points never beat mu_N"""
    rng = np.random.default_rng(7)
    mu = _mu(unit, 5)
    for _ in range(50):
        assert carleman_quotient(unit, rng.dirichlet(np.ones(5))) <= mu + 1e-12


def test_oracle_trivial_and_guarded(unit):
    """Test N = 1 and the cost guard"""
    assert oracle_maximize(unit, 1, restarts=0).objective == 1.0
    with pytest.raises(PreconditionError):
        oracle_maximize(unit, 9, restarts=0)
    with pytest.raises(PreconditionError):
        oracle_maximize(unit, 2, restarts=-1)


def test_oracle_two_terms(unit):
    """Test the oracle finds (1 + sqrt 2)/2"""
    v = oracle_maximize(unit, 2, restarts=4, seed=0)
    assert v.objective == pytest.approx(MU_2, abs=1e-6)
    assert v.a == pytest.approx([0.853553, 0.146447], abs=1e-3)


def test_oracle_is_deterministic(unit):
    """Test a fixed seed gives identical vectors"""
    first = oracle_maximize(unit, 5, restarts=3, seed=11)
    second = oracle_maximize(unit, 5, restarts=3, seed=11)
    assert first.a.tolist() == second.a.tolist()


@pytest.mark.parametrize("spec", ["unit", "power:alpha=1", "power:alpha=2"])
@pytest.mark.parametrize("N", [2, 3, 4, 5, 6])
def test_oracle_agrees_with_bisection(spec, N):
    """Test the independent maximiser against mu_N"""
    seq = WeightSequence.parse(spec)
    v = oracle_maximize(seq, N, restarts=4, seed=0)
    assert v.objective == pytest.approx(_mu(seq, N), abs=1e-6)


@pytest.mark.parametrize("spec", ["unit", "power:alpha=1", "power:alpha=2"])
def test_oracle_is_warning_free(spec):
    """Test underflowing trial steps do not leak numpy warnings"""
    seq = WeightSequence.parse(spec)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        v = oracle_maximize(seq, 6, restarts=4, seed=0)
    assert v.objective == pytest.approx(_mu(seq, 6), abs=1e-6)


def test_oracle_two_stage_grid_at_three_terms(unit):
    """Test the coarse-then-fine grid alone reaches mu_3"""
    grid_only = OracleSettings(max_iter=0)
    v = oracle_maximize(unit, 3, restarts=0, settings=grid_only)
    assert v.objective == pytest.approx(_mu(unit, 3), abs=1e-6)


def test_oracle_settings_from_dict():
    """Test unknown keys are ignored"""
    s = OracleSettings.from_dict({"max_n": 5, "bogus": 1})
    assert s.max_n == 5
    assert s.fine_mesh == 1e-4


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
