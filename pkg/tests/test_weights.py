import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fractaldim.errors import TailUncertified, ValidationError, ZeroWeight
from fractaldim.measures import CylinderMeasure
from fractaldim.symbolic import Sequence, d_beta
from fractaldim.weights import (SymbolPotential, WeightSystem, birkhoff_sum, check_gibbs, check_summability,
                                geometric_potential, holder_constant, potential_from_weights, pressure,
                                pressure_root)

from systems import cantor, dyadic_overlap, moebius, place_dependent

seqs = st.builds(lambda h, p: Sequence(tuple(h), tuple(p)),
                 st.lists(st.integers(1, 2), max_size=6), st.lists(st.integers(1, 2), min_size=1, max_size=4))


@pytest.mark.parametrize("make_psi", [
    lambda: potential_from_weights(cantor(), place_dependent()),
    lambda: geometric_potential(moebius(), 1.3),
    lambda: SymbolPotential([0.1, -2.0]),
])
@given(om=seqs, n=st.integers(1, 6), m=st.integers(1, 6))
def test_birkhoff_additivity(make_psi, om, n, m):
    psi = make_psi()
    lhs = birkhoff_sum(psi, om, n + m)
    rhs = birkhoff_sum(psi, om, n) + birkhoff_sum(psi, om.shift(n), m)
    assert abs(lhs - rhs) <= 1e-10 * (n + m)


@pytest.mark.parametrize("psi", [
    potential_from_weights(cantor(), place_dependent()),
    geometric_potential(moebius(), 0.7),
    geometric_potential(dyadic_overlap(), 1.0),
])
def test_pressure_subadditive(psi):
    a = pressure(psi, 8).estimates
    for n in range(1, 9):
        for m in range(1, 9 - n):
            assert (n + m) * a[n + m - 1] <= n * a[n - 1] + m * a[m - 1] + 1e-8


def test_weight_potential_holder():
    sys, w = cantor(), place_dependent()
    psi = potential_from_weights(sys, w)
    C, a = holder_constant(sys, w)
    beta = -math.log(sys.s)
    rng = np.random.default_rng(1)
    for _ in range(1000):
        L = int(rng.integers(1, 25))
        pre = tuple(rng.integers(1, 3, size=L))
        x = Sequence(pre, tuple(rng.integers(1, 3, size=3)))
        y = Sequence(pre, tuple(rng.integers(1, 3, size=3)))
        d = d_beta(x, y, beta, 40)
        assert abs(psi.value(x) - psi.value(y)) <= C * d**a * (1 + 1e-9) + 1e-13


def test_normalized_constant_weights_have_zero_pressure():
    psi = potential_from_weights(cantor(), WeightSystem.constant([0.3, 0.7]))
    assert max(abs(v) for v in pressure(psi, 8).estimates) <= 1e-14


def test_geometric_pressure_closed_form():
    for s in (0.2, 0.63, 1.0, 1.7):
        est = pressure(geometric_potential(cantor(), s), 8).estimates
        assert np.allclose(est, math.log(2 * 3.0**-s), atol=1e-10)
    root = pressure_root(lambda s: geometric_potential(cantor(), s), 0.1, 1.0)
    assert root == pytest.approx(math.log(2) / math.log(3), abs=1e-9)


def test_gibbs_check_pass_and_fail():
    mu = CylinderMeasure.bernoulli([0.5, 0.5], 10)
    own = check_gibbs(SymbolPotential([math.log(0.5)] * 2), mu, 0.0, 10)
    assert own.passed and abs(own.cmin - 1) <= 1e-14 and abs(own.cmax - 1) <= 1e-14
    bad = check_gibbs(SymbolPotential([math.log(0.3), math.log(0.7)]), mu, 0.0, 10)
    assert not bad.passed and bad.slope > 0.1
    hi = [r[1] for r in bad.per_depth]
    assert all(b > a for a, b in zip(hi, hi[1:]))


def test_weight_validation():
    sys = cantor()
    with pytest.raises(ValidationError):
        WeightSystem.constant([0.4, 0.4]).validate(sys)
    WeightSystem.constant([0.4, 0.4], tail_mass_bound=0.2).validate(sys)
    with pytest.raises(ValidationError):
        WeightSystem.affine([(1.0, -2.0), (0.0, 2.0)]).validate(sys)  # negative on V
    with pytest.raises(ValidationError):
        WeightSystem.constant([1 / 3] * 3).validate(sys)
    w = WeightSystem.expressions(["(1+x)/3", "(2-x)/3"], holder=(1 / 3, 1.0)).validate(sys)
    assert np.allclose(w.probs(np.linspace(0, 1, 5)), place_dependent().probs(np.linspace(0, 1, 5)))


def test_zero_weight_raises():
    psi = potential_from_weights(cantor(), WeightSystem.constant([0.0, 1.0]))
    with pytest.raises(ZeroWeight):
        psi.value(Sequence.constant(1))


def test_summability():
    assert check_summability(geometric_potential(cantor(), 1.0)).passed
    with pytest.raises(TailUncertified):
        check_summability(SymbolPotential([0.0, -1.0], countable=True, tail_bound=None))
    r = check_summability(SymbolPotential([-1.0, -2.0], countable=True, tail_bound=0.5))
    assert r.value == pytest.approx(math.exp(-1) + math.exp(-2) + 0.5)
