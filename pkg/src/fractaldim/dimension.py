"""Lyapunov exponents, entropies and dimension estimators."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import EmptyBall, NonHyperbolic
from .ifs import IFSSystem, word_points
from .measures import CylinderMeasure, EmpiricalMeasure, GridMeasure, RefinedMeasure, integral_of
from .symbolic import all_words
from .weights import geometric_potential


# ---------------------------------------------------------------------------
# Lyapunov exponent


class LyapunovResult(NamedTuple):
    cylinder: Optional[float]
    trajectory: Optional[float]
    difference: Optional[float]

    @property
    def value(self):
        return self.cylinder if self.cylinder is not None else self.trajectory


def lyapunov_cylinder(sys: IFSSystem, mu: CylinderMeasure) -> float:
    """-int log|phi'_{w_0}(pi(sigma w))| dmu, averaged over rotations of each periodic word."""
    return -integral_of(geometric_potential(sys, 1.0), mu)


def lyapunov_trajectory(sys: IFSSystem, traj: EmpiricalMeasure) -> float:
    """Birkhoff average of -log|phi'_{xi_k}(x_{k-1})| along a chaos-game run."""
    if traj.symbols is None or len(traj) < 2:
        raise ValueError("trajectory needs symbols and at least two points")
    x = traj.points[:-1]
    sym = traj.symbols[1:]
    ld = np.empty(x.shape)
    for i in np.unique(sym):
        m = sym == i
        ld[m] = np.log(sys.maps[i - 1].deriv(x[m]))
    return float(-ld.mean())


def lyapunov(sys: IFSSystem, mu: Optional[CylinderMeasure] = None,
             trajectory: Optional[EmpiricalMeasure] = None) -> LyapunovResult:
    if mu is None and trajectory is None:
        raise ValueError("need a cylinder measure or a trajectory")
    a = lyapunov_cylinder(sys, mu) if mu is not None else None
    b = lyapunov_trajectory(sys, trajectory) if trajectory is not None else None
    d = abs(a - b) if a is not None and b is not None else None
    return LyapunovResult(a, b, d)


# ---------------------------------------------------------------------------
# entropy


class EntropyResult(NamedTuple):
    block: list       # H_n, n = 1..depth
    per_symbol: list  # H_n / n
    increments: list  # H_n - H_{n-1}
    h: float


def _H(p):
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def entropy_estimate(mu: CylinderMeasure) -> EntropyResult:
    """Block entropies H_n and increments H_n - H_{n-1}.

    Finite-depth Gibbs weights come from periodic extensions, which distort
    the last few positions; the estimate is the increment at two thirds of
    the stored depth, where the increments have settled.
    """
    H = [_H(mu.marginal(n).ravel()) for n in range(1, mu.length + 1)]
    inc = [H[0]] + [H[n] - H[n - 1] for n in range(1, len(H))]
    h = max(0.0, inc[max(0, math.ceil(2 * len(H) / 3) - 1)])
    return EntropyResult(H, [H[n] / (n + 1) for n in range(len(H))], inc, h)


# ---------------------------------------------------------------------------
# projection entropy


class ProjectionEntropy(NamedTuple):
    deltas: list
    values: list
    h: float
    h_sigma: float


def _cells(sys, x, delta):
    V = sys.V
    if sys.dim == 1:
        return np.floor((x - V.lo) / delta).astype(np.int64)[:, None]
    lo = getattr(V, "lo", V.center - V.radius * (1 + 1j) if hasattr(V, "radius") else 0)
    return np.column_stack([np.floor((x.real - lo.real) / delta), np.floor((x.imag - lo.imag) / delta)]).astype(np.int64)


def _cond_entropy(first, cells, q):
    """H(xi | cell) = H(xi, cell) - H(cell) for weighted samples."""
    joint = np.column_stack([first, cells])
    _, inv = np.unique(joint, axis=0, return_inverse=True)
    Hj = _H(np.bincount(inv.ravel(), weights=q))
    _, inv = np.unique(cells, axis=0, return_inverse=True)
    Hc = _H(np.bincount(inv.ravel(), weights=q))
    return Hj - Hc


def projection_entropy_at(sys: IFSSystem, mu: CylinderMeasure, delta: float, pts=None) -> float:
    """H(xi | cell of pi(sigma w)) - H(xi | cell of pi(w)) on a grid of mesh delta."""
    words = all_words(mu.N, mu.length)
    q = mu.flat()
    keep = q > 0
    words, q = words[keep], q[keep]
    if pts is None:
        pts = (word_points(sys, words), word_points(sys, words[:, 1:]) if mu.length > 1
               else np.full(len(words), sys.V.center))
    x, y = pts
    first = words[:, 0]
    return _cond_entropy(first, _cells(sys, y, delta), q) - _cond_entropy(first, _cells(sys, x, delta), q)


def projection_entropy(sys: IFSSystem, mu: CylinderMeasure, scale_delta: Optional[float] = None,
                       ladder: int = 6, h_sigma: Optional[float] = None) -> ProjectionEntropy:
    """Projection entropy on a ladder of grid meshes ending at ``scale_delta``.

    The finest default mesh 8 s^k diam V resolves about k = ceil(2n/3)
    symbols of a depth-n measure; deeper conditioning would pick up the
    distorted last levels of the periodic-extension weights (the same cut
    used by entropy_estimate).  The finest value, clamped to [0, h_sigma],
    is reported as the estimate.
    """
    diam = sys.V.diam
    if scale_delta is None:
        scale_delta = 8 * sys.s ** math.ceil(2 * mu.length / 3) * diam
    deltas = [scale_delta * 2.0**j for j in range(ladder - 1, -1, -1)]
    words = all_words(mu.N, mu.length)
    q = mu.flat()
    keep = q > 0
    words = words[keep]
    pts = (word_points(sys, words), word_points(sys, words[:, 1:]) if mu.length > 1
           else np.full(len(words), sys.V.center))
    vals = [projection_entropy_at(sys, mu, d, pts) for d in deltas]
    hs = entropy_estimate(mu).h if h_sigma is None else h_sigma
    return ProjectionEntropy(deltas, vals, float(min(max(vals[-1], 0.0), hs)), hs)


# ---------------------------------------------------------------------------
# local and box dimension


class LocalFit(NamedTuple):
    point: complex
    slope: float
    r_lo: float
    r_hi: float
    r2: float
    n_radii: int


def _fit(logr, logm):
    if len(logr) < 2:
        return math.nan, math.nan
    A = np.vstack([logr, np.ones_like(logr)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, logm, rcond=None)
    resid = logm - (slope * logr + icpt)
    ss = float(((logm - logm.mean()) ** 2).sum())
    r2 = 1.0 if ss == 0 else 1.0 - float((resid**2).sum()) / ss
    return float(slope), float(min(max(r2, 0.0), 1.0))


def default_ladder(r_max, r_min, n=20):
    return np.geomspace(r_max, r_min, n)


def auto_ladder(mu, n=24):
    """Geometric radii from an eighth of the support span down to the resolution floor."""
    if isinstance(mu, RefinedMeasure):
        span = mu.sys.V.diam
        return default_ladder(span / 8, max(mu.floor, span * 1e-12), n)
    pts = mu.points if isinstance(mu, EmpiricalMeasure) else mu.centers()
    span = float(np.ptp(pts.real) + np.ptp(pts.imag)) if np.iscomplexobj(pts) else float(np.ptp(pts))
    r_max = max(span, 1e-300) / 8
    rmin, _ = _floor(mu)
    return default_ladder(r_max, rmin if rmin > 0 else r_max * 1e-8, n)


def _floor(mu):
    if isinstance(mu, RefinedMeasure):
        return mu.floor, 0.0
    if isinstance(mu, GridMeasure):
        return 4 * mu.width, 0.0
    if mu.weights is None:
        return 0.0, 100.0 / len(mu)
    return 0.0, 0.0


def local_dimension(mu, x, r_ladder) -> LocalFit:
    """Slope of log mu(B(x, r)) against log r over the admissible part of the ladder.

    Radii below 4 bin widths (grids) or balls holding fewer than 100 sample
    points (point clouds) are dropped.
    """
    r = np.sort(np.asarray(r_ladder, dtype=float))[::-1]
    m = np.asarray(mu.ball_mass(x, r), dtype=float)
    if m[0] <= 0:
        raise EmptyBall(f"mu(B(x, {r[0]:.3g})) = 0 at x = {x}")
    rmin, mmin = _floor(mu)
    ok = (r >= rmin) & (m >= mmin * (1 - 1e-12)) & (m > 0)
    r, m = r[ok], m[ok]
    slope, r2 = _fit(np.log(r), np.log(m))
    return LocalFit(x, max(slope, 0.0) if not math.isnan(slope) else slope,
                    float(r[-1]) if len(r) else math.nan, float(r[0]) if len(r) else math.nan, r2, len(r))


@dataclass
class DimensionReport:
    local_dims: list
    mean_dim: float
    std_dim: float
    formula_dim: Optional[float] = None
    box_dim: Optional[float] = None
    passed: bool = False
    extra: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            cplx = any(isinstance(f.point, complex) and f.point.imag != 0 for f in self.local_dims)
            w.writerow((["x", "y"] if cplx else ["x"]) + ["slope", "r_lo", "r_hi", "r2"])
            for f in self.local_dims:
                p = [repr(float(np.real(f.point))), repr(float(np.imag(f.point)))] if cplx else [
                    repr(float(np.real(f.point)))]
                w.writerow(p + [repr(f.slope), repr(f.r_lo), repr(f.r_hi), repr(f.r2)])

    def summary(self):
        return {
            "mean_dim": self.mean_dim,
            "std_dim": self.std_dim,
            "min_r2": min(f.r2 for f in self.local_dims),
            "n_points": len(self.local_dims),
            "formula_dim": self.formula_dim,
            "box_dim": self.box_dim,
            "passed": self.passed,
            **self.extra,
        }

    def to_json(self, path, **more):
        with open(path, "w") as fh:
            json.dump({**self.summary(), **more}, fh, indent=2, sort_keys=True)
            fh.write("\n")


def exact_dimensionality_test(mu, n_points=100, r_ladder=None, seed=0, threads=1, extra_points=(),
                              std_tol=0.05, r2_tol=0.98) -> DimensionReport:
    """Local dimensions at mu-sampled points; passes when they agree (std) and fit well (R^2)."""
    if n_points < 30:
        raise ValueError("exact-dimensionality test needs at least 30 sample points")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0])))
    xs = list(mu.sample(n_points, rng)) + list(extra_points)
    if r_ladder is None:
        r_ladder = auto_ladder(mu)
    r_ladder = np.asarray(r_ladder)

    def one(x):
        return local_dimension(mu, x, r_ladder)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            fits = list(ex.map(one, xs))
    else:
        fits = [one(x) for x in xs]
    slopes = np.array([f.slope for f in fits])
    r2 = np.array([f.r2 for f in fits])
    mean, std = float(np.mean(slopes)), float(np.std(slopes))
    ok = bool(std <= std_tol and np.all(r2 >= r2_tol))
    return DimensionReport(fits, mean, std, passed=ok)


def dimension_formula(h_S: float, chi: float) -> float:
    if not chi > 0:
        raise NonHyperbolic(f"Lyapunov exponent {chi} is not positive")
    return h_S / chi


def box_dimension(points, scales=None, min_points=10_000) -> float:
    """Slope of log N(eps) against -log eps, with N the number of occupied eps-boxes.

    Default scales halve from a quarter of the extent down to the point where
    boxes hold on average fewer than 20 points.
    """
    pts = points.points if isinstance(points, EmpiricalMeasure) else np.asarray(points)
    n = len(pts)
    if n < min_points:
        raise ValueError(f"box dimension needs at least {min_points} points, got {n}")
    if np.iscomplexobj(pts):
        P = np.column_stack([pts.real, pts.imag])
    else:
        P = np.asarray(pts, dtype=float)[:, None]
    lo = P.min(axis=0)
    extent = float((P.max(axis=0) - lo).max())
    if extent == 0:
        return 0.0

    def count(eps):
        return len(np.unique(np.floor((P - lo) / eps).astype(np.int64), axis=0))

    if scales is None:
        scales, counts = [], []
        eps = extent / 4
        while len(scales) < 40:
            c = count(eps)
            if c > n / 20:
                break
            scales.append(eps)
            counts.append(c)
            eps /= 2
    else:
        counts = [count(e) for e in scales]
    if len(scales) < 2:
        raise ValueError("too few admissible box scales")
    slope, _ = _fit(-np.log(np.asarray(scales)), np.log(np.asarray(counts, dtype=float)))
    return max(slope, 0.0)
