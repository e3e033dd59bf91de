from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from fractaldim.errors import UnfoldTimeout, ValidationError
from fractaldim.ifs import check_bdp
from fractaldim.symbolic import Sequence, TwoSidedSequence
from fractaldim.unfolding import (MaximalSmaleSystem, fiber_dimension, fiber_fractal_sample,
                                  psi_s, smale_project, summability_bound, unfold_indices)

from systems import cantor, coincident, dyadic_overlap, moebius

omegas = st.builds(lambda h, p: Sequence(tuple(h), tuple(p)),
                   st.lists(st.integers(1, 2), max_size=4), st.lists(st.integers(1, 2), min_size=1, max_size=3))


def brute_indices(maps, omega, K, n_max=60):
    """Exact rational scan for affine maps x -> a x + b on [0, 1]."""
    maps = [(Fraction(a).limit_denominator(10**6), Fraction(b).limit_denominator(10**6)) for a, b in maps]

    def image(word):
        lo, hi = Fraction(0), Fraction(1)
        for a, b in (maps[i - 1] for i in reversed(word)):
            lo, hi = sorted((a * lo + b, a * hi + b))
        return lo, hi

    # pi(omega) to well below any gap used here
    x = image(tuple(omega[j] for j in range(60)))[0]
    pts = [a * x + b for a, b in maps]
    ns, imgs, failures = [], [], []
    for k in range(1, K + 1):
        for n in range((ns[-1] if ns else 0) + 1, n_max):
            lo, hi = image((k,) + tuple(omega[j] for j in range(n + 1)))
            hits_point = any(lo <= p <= hi for l, p in enumerate(pts, 1) if l != k)
            meets = any(not (hi < plo or phi < lo) for plo, phi in imgs)
            if not hits_point and not meets:
                ns.append(n)
                imgs.append((lo, hi))
                break
            failures.append((k, n))
        else:
            return None, failures
    return ns, failures


AFFINE = {"dyadic": ([(0.5, 0.0), (0.5, 0.25)], dyadic_overlap), "cantor": ([(1 / 3, 0.0), (1 / 3, 2 / 3)], cantor)}


@settings(max_examples=25)
@given(omegas, st.sampled_from(sorted(AFFINE)))
def test_indices_match_brute_scan(omega, which):
    maps, make = AFFINE[which]
    sys = make()
    idx, _, _ = unfold_indices(sys, omega, 2)
    expect, failures = brute_indices(maps, omega, 2)
    assert list(idx.n) == expect
    assert all(n >= k for k, n in enumerate(idx.n, 1))
    # minimality: every skipped n in (n_{k-1}, n_k) failed the test
    for k, n in failures:
        assert n < idx.n[k - 1]


def test_dyadic_fixed_point_indices():
    smax = MaximalSmaleSystem(dyadic_overlap(), 2)
    om = Sequence.constant(1)
    assert smax.indices(om).n == (1, 2)
    assert smax.fiber_map(om, 1).word == (1, 1, 1)
    assert smax.fiber_map(om, 2).word == (2, 1, 1, 1)


@settings(max_examples=15)
@given(omegas)
def test_fiber_invariants(omega):
    for make in (dyadic_overlap, cantor, moebius):
        smax = MaximalSmaleSystem(make(), 2)
        smax.fiber_map(omega, 1)
        smax.T(omega)
        assert smax.check_fiber_osc()
        assert smax.check_deriv_bounds()


def test_composed_bdp_constant():
    sys = moebius()
    H, _ = check_bdp(sys)
    Hp = H / (1 - sys.alpha**sys.beta)
    smax = MaximalSmaleSystem(sys, 2)
    y = sys.V.grid(60)
    for om in (Sequence.constant(1), Sequence.periodic((1, 2)), Sequence((2,), (1,))):
        for i in (1, 2):
            f = smax.fiber_map(om, i)
            ld = np.log(np.abs(f.deriv(y)))
            d = np.abs(y[:, None] - y[None, :]) ** sys.beta
            off = d > 0
            assert np.max(np.abs(ld[:, None] - ld[None, :])[off] / d[off]) <= Hp * (1 + 1e-9)


def test_psi_s_holder_in_depth():
    smax = MaximalSmaleSystem(moebius(), 2)
    psi = psi_s(smax, 1.0)
    rng = np.random.default_rng(2)
    lam = smax.lam
    for _ in range(20):
        past = Sequence.periodic(tuple(rng.integers(1, 3, size=3)))
        fut = Sequence.periodic(tuple(rng.integers(1, 3, size=2)))
        eta = TwoSidedSequence(past, fut)
        for m in (2, 4, 6):
            diff = abs(psi.value(eta, m) - psi.value(eta, m + 8))
            assert diff <= 2.0 * lam ** (-m)


def test_smale_projection_shift():
    smax = MaximalSmaleSystem(dyadic_overlap(), 2)
    tau = TwoSidedSequence(Sequence.periodic((2, 1)), Sequence.periodic((1, 1, 2)))
    x, r = smale_project(smax, tau, 30)
    assert r == pytest.approx(2.0**-30)
    y, r1 = smale_project(smax, tau.shift(), 31)
    assert abs(smax.T(tau.future)(x) - y) <= r + r1


def test_summability_dominated():
    smax = MaximalSmaleSystem(dyadic_overlap(), 2)
    sums, geo = summability_bound(smax, 1.0)
    assert sums.tolist() == pytest.approx([0.125, 0.1875])
    assert np.all(sums <= geo)


def test_cantor_fiber_dimension_is_similarity_root():
    smax = MaximalSmaleSystem(cantor(), 2)
    om = Sequence.constant(1)
    r = [smax.fiber_map(om, i).deriv_bound for i in (1, 2)]
    assert r == pytest.approx([3.0**-3, 3.0**-4])
    s_star = brentq(lambda s: 3.0 ** (-3 * s) + 3.0 ** (-4 * s) - 1, 0.01, 1)
    fd = fiber_dimension(smax, s_star, 8, om, sample_depth=10)
    assert fd.hd == pytest.approx(s_star, abs=1e-6)
    assert abs(fd.local_estimate - fd.hd) <= 0.05


def test_failures():
    with pytest.raises(ValidationError):
        unfold_indices(coincident(), Sequence.constant(1), 2)
    with pytest.raises(UnfoldTimeout):
        unfold_indices(dyadic_overlap(), Sequence.constant(1), 2, n_max=1)
    with pytest.raises(ValidationError):
        unfold_indices(dyadic_overlap(), Sequence.constant(1), 3)


def test_fiber_sample_csv(tmp_path):
    smax = MaximalSmaleSystem(dyadic_overlap(), 2)
    smp = fiber_fractal_sample(smax, Sequence.constant(1), 6, s=1.0)
    assert len(smp) == 64 and smp.weights().sum() == pytest.approx(1.0)
    rnd = fiber_fractal_sample(smax, Sequence.constant(1), 6, n_words=10, seed=3)
    again = fiber_fractal_sample(smax, Sequence.constant(1), 6, n_words=10, seed=3)
    assert np.array_equal(rnd.points, again.points)
    smp.to_csv(tmp_path / "f.csv")
    lines = open(tmp_path / "f.csv").read().splitlines()
    assert lines[0] == "word,x,radius,weight" and len(lines) == 65
