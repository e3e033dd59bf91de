import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fractaldim.dimension import entropy_estimate
from fractaldim.errors import NoConvergence, ZeroMarginal
from fractaldim.measures import (CylinderMeasure, EmpiricalMeasure, GridMeasure, RefinedMeasure, adjoint_apply,
                                 chaos_ensemble, chaos_game, chaos_game_chains, conditional_measure, draw_index,
                                 gibbs_approximation, integral_of, ks_distance, stationarity_residual,
                                 stationary_measure, transfer_apply, two_sided_gibbs)
from fractaldim.weights import WeightSystem, potential_from_weights, pressure

from systems import cantor, dyadic_overlap, full_branch, half, place_dependent


def cantor_function(x, digits=40):
    """Distribution function of the (1/2, 1/2) Cantor measure, from ternary digits."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    out = np.zeros_like(x)
    done = np.zeros(x.shape, dtype=bool)
    y = x.copy()
    for k in range(1, digits + 1):
        y = 3 * y
        d = np.floor(np.minimum(y, 2.999999999999))
        y -= d
        mid = (d == 1) & ~done
        out[mid] += 0.5**k
        done |= mid
        out[(d == 2) & ~done] += 0.5**k
    out[x >= 1.0] = 1.0
    return out


@pytest.fixture(scope="module")
def cantor_grid():
    return stationary_measure(cantor(), half(), 4096)


@pytest.fixture(scope="module")
def place_grid():
    return stationary_measure(cantor(), place_dependent(), 4096)


def test_duality(place_grid):
    sys, w = cantor(), place_dependent()
    rng = np.random.default_rng(3)
    mu = GridMeasure(place_grid.region, 512, np.full(512, 1 / 512))
    pushed = adjoint_apply(sys, w, mu)
    c = mu.centers()
    for _ in range(50):
        k = rng.integers(1, 6, size=3)
        a = rng.normal(size=3)
        g = lambda x: np.sum([ai * np.sin(ki * x) for ai, ki in zip(a, k)], axis=0)
        lip = float(np.sum(np.abs(a) * k))
        lhs = sum(m * transfer_apply(sys, w, g, x) for m, x in zip(mu.mass, c))
        rhs = float(np.dot(pushed.mass, g(c)))
        assert abs(lhs - rhs) <= mu.width * lip


def test_stationarity_and_attractivity(cantor_grid, place_grid):
    for g, w in ((cantor_grid, half()), (place_grid, place_dependent())):
        assert g.info["residual_tv"] < 1e-9
        assert stationarity_residual(cantor(), w, g) < 1e-8
        assert g.info["attractive"]


def test_grid_matches_cantor_function(cantor_grid):
    xs = np.linspace(0, 1, 1001)
    assert np.max(np.abs(cantor_grid.cdf(xs) - cantor_function(xs))) < 0.01


def test_chaos_game_ks(cantor_grid):
    n = 200_000
    emp = chaos_game(cantor(), half(), n, 50, seed=5)
    assert ks_distance(cantor_grid, emp) <= 3 * (cantor_grid.width + 2 / math.sqrt(n))


def test_chaos_game_streams():
    a = chaos_game(cantor(), place_dependent(), 1000, seed=9)
    b = chaos_game(cantor(), place_dependent(), 1000, seed=9)
    c = chaos_game(cantor(), place_dependent(), 1000, seed=9, chain_id=1)
    assert np.array_equal(a.points, b.points) and np.array_equal(a.symbols, b.symbols)
    assert not np.array_equal(a.symbols, c.symbols)
    pooled1 = chaos_game_chains(cantor(), half(), 4, 500, seed=2, threads=1)
    pooled8 = chaos_game_chains(cantor(), half(), 4, 500, seed=2, threads=8)
    assert np.array_equal(pooled1.points, pooled8.points)
    ens = chaos_ensemble(cantor(), place_dependent(), 3, 400, burn_in=0, seed=9)
    assert np.allclose(ens.points[:400], a.points[:400], atol=1e-12)


@given(st.lists(st.floats(0.0, 1.0), min_size=2, max_size=6), st.floats(0.0, 0.999999))
def test_draw_index_inverse_cdf(raw, u):
    probs = np.array(raw) / max(sum(raw), 1e-9) * 0.95
    N = len(probs)
    j, tail = draw_index(list(probs), u, N)
    cum = np.cumsum(probs)
    if tail:
        assert u >= cum[-1] and j == N
    else:
        assert u < cum[j - 1] and (j == 1 or u >= cum[j - 2])


def test_refined_ball_mass_matches_cantor_function(cantor_grid):
    ref = RefinedMeasure(cantor(), half(), cantor_grid)
    rng = np.random.default_rng(4)
    for x in ref.sample(10, rng):
        for r in (1e-2, 1e-4, 1e-7, 1e-10):
            exact = cantor_function(x + r) - cantor_function(x - r)
            got = ref.ball_mass(x, r)[0]
            assert got == pytest.approx(float(exact), rel=0.05, abs=1e-14)


def test_empirical_ball_mass_brute_force():
    rng = np.random.default_rng(0)
    pts = rng.random(2000)
    emp = EmpiricalMeasure(pts)
    for x in (0.1, 0.5, 0.93):
        for r in (0.01, 0.1):
            assert emp.ball_mass(x, r)[0] == pytest.approx(np.mean(np.abs(pts - x) <= r))


@given(st.floats(0.05, 0.95), st.integers(2, 7))
def test_bernoulli_consistency(p, depth):
    mu = CylinderMeasure.bernoulli([p, 1 - p], depth)
    assert mu.flat().sum() == pytest.approx(1.0)
    assert mu.shift_invariance_error() < 1e-14
    assert mu.marginal(1).ravel() == pytest.approx([p, 1 - p])


def test_gibbs_marginal_consistency():
    psi = potential_from_weights(cantor(), place_dependent())
    errs = []
    for n in (4, 6, 8, 10):
        mu = gibbs_approximation(psi, n)
        assert np.allclose(mu.marginal(n - 1), mu.weights.sum(axis=-1), atol=1e-15)
        assert mu.flat().sum() == pytest.approx(1.0, abs=1e-12)
        assert mu.shift_invariance_error() < 1e-12
        errs.append(mu.info["consistency_error"])
    # separately computed shallower levels approach the stored marginals
    assert all(b < a for a, b in zip(errs, errs[1:])) and errs[-1] < 2e-3


def test_transfer_and_adjoint_examples():
    sys = cantor()
    assert transfer_apply(sys, half(), lambda x: x, 0.0) == pytest.approx(1 / 3)
    assert transfer_apply(sys, half(), lambda x: float(x <= 1 / 3), 0.0) == pytest.approx(0.5)
    assert transfer_apply(sys, WeightSystem.constant([0.5, 0.4], 0.1), lambda x: 1.0, 0.3) == pytest.approx(0.9)
    near = lambda g, t: float(g.mass[np.abs(g.centers() - t) <= g.width].sum())  # NGP: within one bin
    out = adjoint_apply(sys, half(), GridMeasure.point_mass(sys.V, 256, 0.0))
    assert near(out, 0.0) == pytest.approx(0.5) and near(out, 2 / 3) == pytest.approx(0.5)
    out = adjoint_apply(sys, place_dependent(), GridMeasure.point_mass(sys.V, 256, 1.0))
    assert near(out, 1 / 3) == pytest.approx(2 / 3, abs=0.01) and near(out, 1.0) == pytest.approx(1 / 3, abs=0.01)


def test_variational_principle():
    psi = potential_from_weights(cantor(), place_dependent())
    a = pressure(psi, 10).estimates
    P = 0.0  # normalized weights
    for n in (6, 8, 10):
        mu = gibbs_approximation(psi, n)
        h = entropy_estimate(mu).h
        assert abs(h + integral_of(psi, mu) - P) <= abs(a[n - 1] - P) + 0.02


def test_conditional_measure():
    psi = potential_from_weights(cantor(), half())
    mu = two_sided_gibbs(psi, 3, 2)
    cm = conditional_measure(mu, (1, 2))
    tot = sum(q for _, q in cm.items())
    assert tot == pytest.approx(1.0)
    assert all(q == pytest.approx(1 / 8) for _, q in cm.items())
    zero = CylinderMeasure.delta((1, 1, 1), 2)
    zero.start = -1
    with pytest.raises(ZeroMarginal):
        conditional_measure(zero, (2,))


def test_no_convergence():
    with pytest.raises(NoConvergence):
        stationary_measure(dyadic_overlap(), half(), 256, max_iter=2)


def test_outputs(tmp_path, cantor_grid):
    cantor_grid.to_csv(tmp_path / "g.csv")
    rows = list(csv.reader(open(tmp_path / "g.csv")))
    assert rows[0] == ["bin_center", "mass"] and len(rows) == 4097
    assert sum(float(r[1]) for r in rows[1:]) == pytest.approx(1.0)
    emp = chaos_game(cantor(), half(), 100, seed=1)
    emp.to_jsonl(tmp_path / "c.jsonl")
    recs = [json.loads(l) for l in open(tmp_path / "c.jsonl")]
    assert len(recs) == 100 and set(recs[0]) == {"step", "x", "symbol"}
    from fractaldim.ifs import Affine, Box, IFSSystem
    sier = IFSSystem((Affine(0.5, 0j), Affine(0.5, 0.5 + 0j), Affine(0.5, 0.25 + 0.5j)), Box(0j, 1 + 1j), 0.5)
    g2 = stationary_measure(sier, WeightSystem.constant([1 / 3] * 3), 64)
    g2.to_pgm(tmp_path / "d.pgm")
    raw = open(tmp_path / "d.pgm", "rb").read()
    assert raw.startswith(b"P5\n64 64\n255\n") and len(raw) == len(b"P5\n64 64\n255\n") + 64 * 64


def test_full_branch_is_lebesgue():
    g = stationary_measure(full_branch(), half(), 1024)
    assert np.allclose(g.mass, 1 / 1024, atol=1e-9)
