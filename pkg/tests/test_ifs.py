import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fractaldim.errors import SymbolOutOfAlphabet, ValidationError
from fractaldim.ifs import (Affine, Box, Disk, IFSSystem, Interval, check_bdp, check_non_accumulation, code_point,
                            compose_word, map_from_dict, periodic_points, region_from_dict)
from fractaldim.symbolic import Sequence

from systems import cantor, coincident, dyadic_overlap, moebius

words = st.lists(st.integers(1, 2), min_size=1, max_size=10)


@pytest.mark.parametrize("make", [cantor, dyadic_overlap, moebius])
@given(w=words)
def test_composed_derivative_bound(make, w):
    sys = make()
    f = compose_word(sys, w)
    x = sys.V.grid(100)
    assert np.all(f.deriv(x) <= sys.s ** len(w) * (1 + 1e-12))


@pytest.mark.parametrize("make", [cantor, dyadic_overlap, moebius])
@given(head=st.lists(st.integers(1, 2), min_size=1, max_size=6), period=st.lists(st.integers(1, 2), min_size=1,
                                                                                   max_size=4))
def test_code_point_shift_consistency(make, head, period):
    sys = make()
    om = Sequence(tuple(head), tuple(period))
    tol = 1e-12
    lhs = sys.maps[om[0] - 1](code_point(sys, om.shift(), tol))
    assert abs(lhs - code_point(sys, om, tol)) <= 2 * tol


@given(words)
def test_affine_image_is_exact(w):
    sys = cantor()
    f = compose_word(sys, w)
    img = f.image(sys.V)
    ends = sorted([f(0.0), f(1.0)])
    assert img.lo == pytest.approx(ends[0], abs=1e-12) and img.hi == pytest.approx(ends[1], abs=1e-12)


@given(words)
def test_moebius_image_contains_samples(w):
    sys = moebius()
    f = compose_word(sys, w)
    img = f.image(sys.V)
    ys = f(sys.V.grid(200))
    assert np.all((ys >= img.lo - 1e-15) & (ys <= img.hi + 1e-15))


def test_cantor_code_points():
    sys = cantor()
    assert code_point(sys, Sequence.constant(1)) == pytest.approx(0.0, abs=1e-12)
    assert code_point(sys, Sequence.constant(2)) == pytest.approx(1.0, abs=1e-12)
    # 0.(02) in base 3 = 2/8
    assert code_point(sys, Sequence.periodic((1, 2))) == pytest.approx(0.25, abs=1e-12)
    assert periodic_points(sys, np.array([[1, 2]]))[0] == pytest.approx(0.25, abs=1e-13)


def test_validation_errors():
    with pytest.raises(ValidationError):
        IFSSystem((Affine(0.5, 0.0),), Interval(0, 1), 0.5)
    with pytest.raises(ValidationError):
        IFSSystem((Affine(0.5, 0.0), Affine(0.5, 0.7)), Interval(0, 1), 0.5)  # image leaves V
    with pytest.raises(ValidationError):
        IFSSystem((Affine(0.6, 0.0), Affine(0.5, 0.5)), Interval(0, 1), 0.5)  # contraction bound
    with pytest.raises(ValidationError):
        IFSSystem((Affine(0.5, 0.0), Affine(0.5, 0.5)), Interval(0, 1), 1.2)
    with pytest.raises(SymbolOutOfAlphabet):
        cantor().map(3)


def test_map_and_region_parsing():
    f = map_from_dict({"kind": "affine", "a": "1/3", "b": "2/3"})
    assert f(1.0) == pytest.approx(1.0)
    g = map_from_dict({"kind": "affine", "a": [0, 0.5], "b": [0.5, 0]})
    assert g(1 + 0j) == pytest.approx(0.5 + 0.5j)
    h = map_from_dict({"kind": "expression", "expr": "x/(x+2)"})
    assert h(1.0) == pytest.approx(1 / 3)
    with pytest.raises(ValidationError):
        map_from_dict({"kind": "spline"})
    for d in ({"type": "interval", "lo": 0, "hi": 2}, {"type": "disk", "center": [0, 1], "radius": 2.0},
              {"type": "box", "lo": [0, 0], "hi": [1, 2]}):
        assert region_from_dict(region_from_dict(d).to_dict()).to_dict() == region_from_dict(d).to_dict()


def test_planar_system():
    V = Box(0j, 1 + 1j)
    sys = IFSSystem((Affine(0.5, 0j), Affine(0.5, 0.5 + 0j), Affine(0.5, 0.25 + 0.5j)), V, 0.5)
    assert sys.dim == 2
    x = code_point(sys, Sequence.constant(3))
    assert x == pytest.approx(0.5 + 1j, abs=1e-12)
    D = Disk(0j, 1.0)
    rot = IFSSystem((Affine(0.5j, 0.4 + 0j), Affine(-0.5j, -0.4 + 0j)), D, 0.5)
    assert abs(code_point(rot, Sequence.constant(1)) - 0.4 / (1 - 0.5j)) < 1e-12


def test_non_accumulation_and_bdp():
    assert check_non_accumulation(cantor(), 0.5)
    assert not check_non_accumulation(coincident(), 0.3)
    H, ok = check_bdp(moebius())
    assert ok and 0.3 < H <= 1.0
    assert check_bdp(cantor())[0] == 0.0
