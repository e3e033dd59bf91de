"""Unfolding an overlapping IFS into a fiberwise separated skew product.

For a base sequence omega the indices n_1 < n_2 < ... are chosen so that
the fiber images T_{k omega}(V) = phi_{k omega_0 ... omega_{n_k}}(V) are
pairwise disjoint and avoid the points phi_l(pi(omega)), l != k.  The fiber
map over omega is T_omega = T_{omega_0, sigma omega}; pushing V through the
maps read off a past word gives points of the stable fibers J_omega.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import logsumexp

from .errors import NonHyperbolic, UnfoldTimeout, ValidationError, check_budget
from .ifs import IFSSystem, check_non_accumulation, code_point, compose_maps
from .measures import EmpiricalMeasure, gibbs_approximation, integral_of
from .symbolic import Sequence, TwoSidedSequence, all_words
from .weights import Potential

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class UnfoldIndices:
    omega_prefix: tuple
    n: tuple
    verified_up_to: int
    tail_checked: bool

    def to_json(self, path=None):
        d = {"omega_prefix": list(self.omega_prefix), "n": list(self.n),
             "verified_up_to": self.verified_up_to, "tail_checked": self.tail_checked}
        if path is not None:
            with open(path, "w") as fh:
                json.dump(d, fh, indent=2)
                fh.write("\n")
        return d


@dataclass(frozen=True)
class FiberMap:
    symbol: int
    word: tuple
    map: object
    image: object
    deriv_bound: float

    def __call__(self, x):
        return self.map(x)

    def deriv(self, x):
        return self.map.deriv(x)


def _disjoint(a, b):
    return not a.intersects(b)


def unfold_indices(sys: IFSSystem, omega: Sequence, K: Optional[int] = None, n_max: int = 1000,
                   sep_tol: float = 1e-9) -> tuple:
    """Inductive indices n_1..n_K for omega; returns (UnfoldIndices, images, maps).

    Tests run on exact interval images in dimension one and on bounding
    disks/boxes in the plane (then the indices are upper bounds).
    """
    K = sys.N if K is None else K
    if not 1 <= K <= sys.N:
        raise ValidationError(f"K={K} must lie in 1..{sys.N}")
    x = code_point(sys, omega)
    if not check_non_accumulation(sys, x, sep_tol):
        raise ValidationError(f"non-accumulation fails at pi(omega) = {x}")
    pts = [f(x) for f in sys.maps]
    tail = sys.tail_region if sys.countable else None
    ns, images, maps = [], [], []
    deepest = 0
    for k in range(1, K + 1):
        M = sys.maps[k - 1]
        n = 0
        M = compose_maps(M, sys.map(omega[0]))
        found = False
        while n < n_max:
            n += 1
            M = compose_maps(M, sys.map(omega[n]))
            if ns and n <= ns[-1]:
                continue
            img = M.image(sys.V)
            if any(img.contains(p) for l, p in enumerate(pts, 1) if l != k):
                continue
            if any(not _disjoint(img, prev) for prev in images):
                continue
            if tail is not None and img.intersects(tail):
                continue
            found = True
            break
        if not found:
            raise UnfoldTimeout(f"no admissible n_{k} <= {n_max} for omega prefix {omega.prefix(min(omega.depth, 12))}")
        ns.append(n)
        images.append(img)
        maps.append(M)
        deepest = max(deepest, n + 1)
    idx = UnfoldIndices(tuple(omega.prefix(deepest)), tuple(ns), sys.N, tail is not None)
    return idx, images, maps


def fiber_map_from(sys, idx: UnfoldIndices, maps, images, i) -> FiberMap:
    n = idx.n[i - 1]
    word = (i,) + idx.omega_prefix[: n + 1]
    return FiberMap(i, word, maps[i - 1], images[i - 1], float(maps[i - 1].sup_deriv(sys.V)))


class MaximalSmaleSystem:
    """Fiber maps T_{i omega}, cached per base sequence.

    Cache entries are pure functions of their key, so concurrent inserts are
    harmless; a lock only guards the dict itself.
    """

    def __init__(self, sys: IFSSystem, K: Optional[int] = None, n_max: int = 1000, lam: Optional[float] = None):
        self.sys = sys
        self.K = sys.N if K is None else K
        self.n_max = n_max
        self.lam = 1.0 / sys.alpha if lam is None else lam
        self._cache = {}
        self._lock = threading.Lock()

    def _entry(self, omega: Sequence):
        key = omega.key()
        hit = self._cache.get(key)
        if hit is None:
            idx, images, maps = unfold_indices(self.sys, omega, self.K, self.n_max)
            hit = (idx, tuple(fiber_map_from(self.sys, idx, maps, images, i) for i in range(1, self.K + 1)))
            with self._lock:
                self._cache.setdefault(key, hit)
        return hit

    def indices(self, omega) -> UnfoldIndices:
        return self._entry(omega)[0]

    def fiber_map(self, omega, i) -> FiberMap:
        if not 1 <= i <= self.K:
            raise ValidationError(f"fiber symbol {i} outside 1..{self.K}")
        return self._entry(omega)[1][i - 1]

    def T(self, omega) -> FiberMap:
        """T_omega = T_{omega_0, sigma omega}."""
        return self.fiber_map(omega.shift(), omega[0])

    def cached(self):
        return dict(self._cache)

    def check_fiber_osc(self):
        """All cached fibers have pairwise disjoint images."""
        for idx, fibers in self._cache.values():
            for a in range(len(fibers)):
                for b in range(a + 1, len(fibers)):
                    if fibers[a].image.intersects(fibers[b].image):
                        return False
        return True

    def check_deriv_bounds(self, samples=100):
        """|T'_{i omega}| <= alpha^i on sampled points of V for every cached fiber."""
        pts = self.sys.V.grid(samples if self.sys.dim == 1 else 10)
        a = self.sys.alpha
        for _, fibers in self._cache.values():
            for f in fibers:
                if np.max(np.abs(f.deriv(pts))) > a ** f.symbol * (1 + 1e-12):
                    return False
        return True


def fiber_map(smax: MaximalSmaleSystem, omega, i) -> FiberMap:
    return smax.fiber_map(omega, i)


def smale_project(smax: MaximalSmaleSystem, tau: TwoSidedSequence, m: int):
    """T_tau^m(c_V) with error radius lam^-m diam V."""
    if m < 1:
        raise ValueError("m must be at least 1")
    x = smax.sys.V.center
    for j in range(m, 0, -1):
        base = tau.tail_from(-j + 1)
        x = smax.fiber_map(base, tau[-j])(x)
    return x, smax.lam ** (-m) * smax.sys.V.diam


# ---------------------------------------------------------------------------
# fiber samples


@dataclass
class FiberFractalSample:
    omega: Sequence
    words: np.ndarray        # (M, m) past words, column 0 = position -m
    points: np.ndarray
    radius: float
    log_weights: Optional[np.ndarray] = None
    scales: Optional[np.ndarray] = None  # |(T_tau^m)'| at the sample point
    info: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def weights(self):
        if self.log_weights is None:
            return np.full(len(self.points), 1.0 / len(self.points))
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    def to_csv(self, path):
        cplx = np.iscomplexobj(self.points)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["word"] + (["x", "y"] if cplx else ["x"]) + ["radius", "weight"])
            for word, x, q in zip(self.words, self.points, self.weights()):
                xs = [repr(float(x.real)), repr(float(x.imag))] if cplx else [repr(float(x))]
                w.writerow([" ".join(str(int(a)) for a in word)] + xs + [repr(self.radius), repr(float(q))])


def _project_words(smax, omega, depth, s):
    """Points, log|T'| sums for all K^depth past words over omega (recursive)."""
    K = smax.K
    c = smax.sys.V.center
    dtype = complex if smax.sys.dim == 2 else float

    def rec(base, d):
        if d == 0:
            return (np.zeros((1, 0), dtype=np.int64), np.array([c], dtype=dtype), np.zeros(1))
        W, X, L = [], [], []
        for i in range(1, K + 1):
            sw, sx, sl = rec(base.prepend((i,)), d - 1)
            f = smax.fiber_map(base, i)
            W.append(np.column_stack([sw, np.full(len(sw), i)]))
            X.append(f(sx))
            L.append(sl + np.log(np.abs(f.deriv(sx))))
        return np.concatenate(W), np.concatenate(X), np.concatenate(L)

    return rec(omega, depth)


def _project_one(smax, omega, word):
    x = smax.sys.V.center
    logd = 0.0
    bases = [omega]
    for a in reversed(word[1:]):
        bases.append(bases[-1].prepend((a,)))
    # apply innermost (position -m) first
    for j in range(len(word)):
        base = bases[len(word) - 1 - j]
        f = smax.fiber_map(base, word[j])
        logd += float(np.log(np.abs(f.deriv(x))))
        x = f(x)
    return x, logd


def fiber_fractal_sample(smax: MaximalSmaleSystem, omega: Sequence, depth_m: int,
                         n_words: Optional[int] = None, seed: int = 0, s: Optional[float] = None) -> FiberFractalSample:
    """Points of J_omega: all K^m past words (exhaustive) or n_words random ones.

    With s given, each point carries the log-weight s * log|(T_tau^m)'|,
    i.e. the Birkhoff sum of psi_s along the past word.
    """
    K = smax.K
    if n_words is None:
        check_budget(K**depth_m, "past words")
        W, X, L = _project_words(smax, omega, depth_m, s)
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0])))
        W = rng.integers(1, K + 1, size=(n_words, depth_m))
        out = [_project_one(smax, omega, tuple(int(a) for a in w)) for w in W]
        X = np.array([o[0] for o in out])
        L = np.array([o[1] for o in out])
    radius = smax.lam ** (-depth_m) * smax.sys.V.diam
    return FiberFractalSample(omega, W, X, radius, None if s is None else s * L, np.exp(L),
                              info={"K": K, "depth": depth_m, "exhaustive": n_words is None,
                                    "diam": smax.sys.V.diam})


# ---------------------------------------------------------------------------
# the potentials psi_s


class SmalePotential(Potential):
    """psi_s(eta) = s log|T'_{eta_0^inf}(hat pi_2(eta))| over the fiber alphabet 1..K.

    Periodic evaluation: for a word w the two-sided periodic point has
    hat pi_2 equal to the fixed point of the cycle of fiber maps.
    """

    kind = "psi_s"

    def __init__(self, smax: MaximalSmaleSystem, s: float, probe_period: int = 3):
        if not s > 0:
            raise ValueError("psi_s needs s > 0")
        super().__init__(smax.K)
        self.smax = smax
        self.s = float(s)
        self.probe_period = probe_period
        sys = smax.sys
        self.countable = sys.countable
        if sys.countable:
            a = sys.alpha ** self.s
            self.tail_bound = a ** (smax.K + 1) / (1 - a)
        self._cycle_cache = {}

    def _cycle(self, word):
        word = tuple(int(a) for a in word)
        hit = self._cycle_cache.get(word)
        if hit is not None:
            return hit
        n = len(word)
        seqs = [Sequence.periodic(word[k:] + word[:k]) for k in range(n)]
        fibers = [self.smax.T(seqs[k]) for k in range(n)]  # T_{sigma^k w}: fiber k -> k+1
        # hat pi_2 at rotation k is the fixed point of T_{k-1} o ... o T_{k-n}
        x = self.smax.sys.V.center
        reps = 1
        rate = max(f.deriv_bound for f in fibers)
        while rate**(reps * n) > 1e-16 and reps < 200:
            reps += 1
        for _ in range(reps):
            for k in range(n):
                x = fibers[k](x)
        pts = []
        for k in range(n):
            pts.append(x)
            x = fibers[k](x)
        val = sum(math.log(abs(fibers[k].deriv(pts[k]))) for k in range(n))
        self._cycle_cache[word] = val
        return val

    def value(self, eta, depth=None):
        """eta: TwoSidedSequence; hat pi_2 evaluated with `depth` past symbols (default 30)."""
        m = 30 if depth is None else depth
        x, _ = smale_project(self.smax, eta, m)
        f = self.smax.T(eta.future)
        return self.s * float(np.log(np.abs(f.deriv(x))))

    def periodic_sums(self, words):
        words = np.asarray(words)
        return self.s * np.array([self._cycle(w) for w in words])

    def cylinder_sup(self, words):
        words = np.asarray(words)
        if words.shape[1] != 1:
            return self.periodic_sums(words)
        # sup over [i]: largest fiber derivative over probe bases of small period
        bases = [Sequence.periodic(tuple(int(a) for a in p))
                 for q in range(1, self.probe_period + 1) for p in all_words(self.smax.sys.N, q)]
        out = []
        for (i,) in words:
            out.append(max(math.log(self.smax.fiber_map(b, int(i)).deriv_bound) for b in bases))
        return self.s * np.array(out)


def psi_s(smax: MaximalSmaleSystem, s: float) -> SmalePotential:
    return SmalePotential(smax, s)


def summability_bound(smax: MaximalSmaleSystem, s: float):
    """(partial sums of exp sup psi_s|[i], partial sums of alpha^{s i}) for i <= K."""
    sups = psi_s(smax, s).cylinder_sup(np.arange(1, smax.K + 1)[:, None])
    a = smax.sys.alpha ** s
    return np.cumsum(np.exp(sups)), np.cumsum(a ** np.arange(1, smax.K + 1))


# ---------------------------------------------------------------------------
# fiber dimension


class FiberDimension(NamedTuple):
    hd: float
    entropy: float
    chi_T: float
    local_estimate: float
    local_r2: float
    report: dict


def ensemble_local_dimension(sample: FiberFractalSample, n_radii=16, r_max=None, r_min=None):
    """Slope of the mu-average of log nu(B(x, r)) against log r over weighted atoms.

    The ladder stops at 4 times the largest atom scale |(T_tau^m)'| diam V,
    below which atoms stop resolving the measure.
    """
    x = np.asarray(sample.points)
    q = sample.weights()
    cplx = np.iscomplexobj(x)
    span = float(np.ptp(x.real) + (np.ptp(x.imag) if cplx else 0.0))
    if r_max is None:
        r_max = span / 4
    if r_min is None:
        r_min = 4 * float(sample.scales.max()) * sample.info.get("diam", 1.0)
    if not r_min < r_max:
        raise ValueError("fiber sample too shallow for a local-dimension fit")
    radii = np.geomspace(r_max, r_min, n_radii)
    logm = np.empty(n_radii)
    if cplx:
        emp = EmpiricalMeasure(x, weights=q)
        for k, r in enumerate(radii):
            masses = np.array([emp.ball_mass(xx, r)[0] for xx in x])
            logm[k] = float(np.dot(q, np.log(masses)))
    else:
        order = np.argsort(x, kind="stable")
        xs = x[order]
        F = np.concatenate([[0.0], np.cumsum(q[order])])
        for k, r in enumerate(radii):
            masses = F[np.searchsorted(xs, x + r, side="right")] - F[np.searchsorted(xs, x - r, side="left")]
            logm[k] = float(np.dot(q, np.log(masses)))
    A = np.vstack([np.log(radii), np.ones(n_radii)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, logm, rcond=None)
    resid = logm - A @ np.array([slope, icpt])
    ss = float(((logm - logm.mean()) ** 2).sum())
    r2 = 1.0 if ss == 0 else 1.0 - float((resid**2).sum()) / ss
    return float(slope), float(r2), radii


def fiber_dimension(smax: MaximalSmaleSystem, s, depth: int, omega: Sequence,
                    sample_depth: int = 10) -> FiberDimension:
    """h(mu_s) / chi(T) from depth-`depth` Gibbs weights of psi_s, checked against
    the local dimension of the conditional measure pushed to J_omega."""
    from .dimension import entropy_estimate

    psi = s if isinstance(s, SmalePotential) else psi_s(smax, s)
    mu = gibbs_approximation(psi, depth)
    ent = entropy_estimate(mu)
    chi_T = -integral_of(psi, mu) / psi.s
    if not chi_T > 0:
        raise NonHyperbolic(f"chi(T) = {chi_T} is not positive")
    hd = ent.h / chi_T
    sample = fiber_fractal_sample(smax, omega, sample_depth, s=psi.s)
    slope, r2, radii = ensemble_local_dimension(sample)
    report = {
        "s": psi.s,
        "depth": depth,
        "entropy": ent.h,
        "entropy_increments": ent.increments,
        "chi_T": chi_T,
        "hd_formula": hd,
        "local_dimension": slope,
        "local_r2": r2,
        "r_range": [float(radii[-1]), float(radii[0])],
        "sample_points": len(sample),
        "omega_indices": list(smax.indices(omega).n),
    }
    return FiberDimension(hd, ent.h, chi_T, slope, r2, report)
