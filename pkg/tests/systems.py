"""Small reference systems shared by the tests."""

from fractaldim.ifs import Affine, GaussBranch, IFSSystem, Interval
from fractaldim.weights import WeightSystem


def cantor():
    return IFSSystem((Affine(1 / 3, 0.0), Affine(1 / 3, 2 / 3)), Interval(0.0, 1.0), 1 / 3)


def dyadic_overlap():
    return IFSSystem((Affine(0.5, 0.0), Affine(0.5, 0.25)), Interval(0.0, 1.0), 0.5)


def full_branch():
    return IFSSystem((Affine(0.5, 0.0), Affine(0.5, 0.5)), Interval(0.0, 1.0), 0.5)


def coincident():
    return IFSSystem((Affine(0.5, 0.0), Affine(0.5, 0.0)), Interval(0.0, 1.0), 0.5)


def collapse3():
    return IFSSystem((Affine(0.5, 0.0), Affine(0.5, 0.0), Affine(0.5, 0.5)), Interval(0.0, 1.0), 0.5)


def moebius():
    """x -> 1/(2+x), 1/(3+x) on [0, 1]; |phi'| <= 1/4."""
    return IFSSystem((GaussBranch(2), GaussBranch(3)), Interval(0.0, 1.0), 0.25, H=1.0)


def half():
    return WeightSystem.constant([0.5, 0.5])


def place_dependent():
    return WeightSystem.affine([(1 / 3, 1 / 3), (2 / 3, -1 / 3)])
