"""Place-dependent weights, symbolic potentials, pressure and Gibbs checks."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.optimize import bisect
from scipy.special import logsumexp

from .errors import TailUncertified, ValidationError, ZeroWeight, check_budget
from .expr import Expression
from .ifs import (IFSSystem, Moebius, Affine, code_point, deriv_symbols, periodic_orbits)
from .symbolic import all_words

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# weight functions


class ConstantWeight:
    def __init__(self, c):
        self.c = float(c)

    def __call__(self, x):
        return np.full(np.shape(x), self.c) if np.ndim(x) else self.c

    def sup_on(self, lo, hi):
        return np.full(np.shape(lo), self.c) if np.ndim(lo) else self.c

    inf_on = sup_on
    lipschitz = 0.0

    def to_dict(self):
        return self.c


class AffineWeight:
    """p(x) = a + b*x on an interval."""

    def __init__(self, a, b):
        self.a, self.b = float(a), float(b)

    def __call__(self, x):
        return self.a + self.b * x

    def sup_on(self, lo, hi):
        return np.maximum(self(lo), self(hi))

    def inf_on(self, lo, hi):
        return np.minimum(self(lo), self(hi))

    @property
    def lipschitz(self):
        return abs(self.b)

    def to_dict(self):
        return [self.a, self.b]


class ExpressionWeight:
    """Formula in x; interval extrema are found by sampling 33 points."""

    _probe = np.linspace(0.0, 1.0, 33)

    def __init__(self, source):
        self.expr = Expression(source)
        self.lipschitz = None

    def __call__(self, x):
        return self.expr(x)

    def _samples(self, lo, hi):
        lo, hi = np.asarray(lo, float), np.asarray(hi, float)
        return self.expr(lo[..., None] + (hi - lo)[..., None] * self._probe)

    def sup_on(self, lo, hi):
        return self._samples(lo, hi).max(axis=-1)

    def inf_on(self, lo, hi):
        return self._samples(lo, hi).min(axis=-1)

    def to_dict(self):
        return self.expr.source


@dataclass(frozen=True)
class WeightSystem:
    """Weights p_1..p_N with a declared bound on the truncated tail mass."""

    p: tuple
    tail_mass_bound: float = 0.0
    holder: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(self.p))
        if self.tail_mass_bound < 0:
            raise ValidationError("tail mass bound must be nonnegative")

    @classmethod
    def constant(cls, probs, tail_mass_bound=0.0):
        return cls(tuple(ConstantWeight(q) for q in probs), tail_mass_bound, (0.0, 1.0))

    @classmethod
    def affine(cls, coeffs, tail_mass_bound=0.0):
        ws = tuple(AffineWeight(a, b) for a, b in coeffs)
        return cls(ws, tail_mass_bound, (max(w.lipschitz for w in ws), 1.0))

    @classmethod
    def expressions(cls, sources, tail_mass_bound=0.0, holder=(0.0, 1.0)):
        return cls(tuple(ExpressionWeight(s) for s in sources), tail_mass_bound, holder)

    @property
    def N(self):
        return len(self.p)

    @property
    def is_constant(self):
        return all(isinstance(q, ConstantWeight) for q in self.p)

    def probs(self, x):
        """Array of shape (N,) + shape(x)."""
        return np.array([q(x) for q in self.p], dtype=float)

    def validate(self, sys: IFSSystem, samples=257):
        if self.N != sys.N:
            raise ValidationError(f"{self.N} weights for {sys.N} maps")
        if sys.dim == 2 and not self.is_constant and not all(callable(q) for q in self.p):
            raise ValidationError("planar systems need callable weights")
        pts = sys.V.grid(samples if sys.dim == 1 else 17)
        P = self.probs(pts)
        if np.any(P < -1e-15):
            raise ValidationError("weights must be nonnegative on V")
        tot = P.sum(axis=0)
        lo = 1.0 - self.tail_mass_bound - 1e-12
        if np.any(tot < lo) or np.any(tot > 1 + 1e-12):
            bad = tot[(tot < lo) | (tot > 1 + 1e-12)][0]
            raise ValidationError(
                f"weights sum to {bad:.6g} somewhere on V; need [1 - tail_mass, 1] "
                f"with tail_mass = {self.tail_mass_bound}"
            )
        return self

    def min_weight(self, sys: IFSSystem, samples=257):
        pts = sys.V.grid(samples if sys.dim == 1 else 17)
        return float(self.probs(pts).min())


# ---------------------------------------------------------------------------
# potentials


class Potential:
    """A real function on the one-sided shift over 1..N.

    ``periodic_sums(words)`` gives S_n psi at the periodic extension of each
    row; ``cylinder_sup(words)`` an upper bound of sup S_n psi on [w].
    """

    kind = "user"
    holder_estimate = 0.0
    countable = False
    tail_bound: Optional[float] = 0.0

    def __init__(self, N):
        self.N = N

    def value(self, seq, depth=None):
        raise NotImplementedError

    def periodic_sums(self, words):
        raise NotImplementedError

    def cylinder_sup(self, words):
        return self.periodic_sums(words)


class SymbolPotential(Potential):
    """psi(omega) = values[omega_0 - 1]."""

    def __init__(self, values, countable=False, tail_bound=0.0):
        super().__init__(len(values))
        self.values = np.asarray(values, dtype=float)
        self.countable = countable
        self.tail_bound = tail_bound

    @classmethod
    def constant(cls, c, N, **kw):
        return cls([c] * N, **kw)

    def value(self, seq, depth=None):
        return float(self.values[seq[0] - 1])

    def periodic_sums(self, words):
        words = np.asarray(words)
        return self.values[words - 1].sum(axis=1)


class _OrbitPotential(Potential):
    """psi(omega) = f(omega_0, pi(sigma omega)) for an IFS."""

    def __init__(self, sys: IFSSystem):
        super().__init__(sys.N)
        self.sys = sys
        self.countable = sys.countable

    def _term(self, symbols, x):
        raise NotImplementedError

    def _term_sup(self, symbols, lo, hi):
        raise NotImplementedError

    def _tol(self, depth):
        if depth is None:
            return 1e-13
        return max(1e-13, self.sys.V.diam * self.sys.s**depth)

    def value(self, seq, depth=None):
        x = code_point(self.sys, seq.shift(), self._tol(depth))
        v = float(self._term(np.array([seq[0]]), np.array([x]))[0])
        if v == -math.inf:
            raise ZeroWeight(f"weight p_{seq[0]} vanishes at pi(sigma omega) = {x}")
        return v

    def periodic_sums(self, words):
        words = np.asarray(words)
        X = periodic_orbits(self.sys, words)
        nxt = np.roll(X, -1, axis=1)
        with np.errstate(divide="ignore"):
            terms = self._term(words, nxt)
        return terms.sum(axis=1)

    def cylinder_sup(self, words):
        if self.sys.dim != 1:
            return self.periodic_sums(words)
        words = np.asarray(words)
        M, n = words.shape
        lo = np.full(M, self.sys.V.lo)
        hi = np.full(M, self.sys.V.hi)
        total = np.zeros(M)
        for k in range(n - 1, -1, -1):
            with np.errstate(divide="ignore"):
                total += self._term_sup(words[:, k], lo, hi)
            lo, hi = _image_bounds(self.sys, words[:, k], lo, hi)
        return total


def _image_bounds(sys, symbols, lo, hi):
    nlo, nhi = np.empty_like(lo), np.empty_like(hi)
    for i in np.unique(symbols):
        m = symbols == i
        nlo[m], nhi[m] = sys.maps[i - 1].image_bounds(lo[m], hi[m])
    return nlo, nhi


def _sup_deriv_bounds(f, lo, hi):
    if isinstance(f, Affine):
        return np.full(np.shape(lo), abs(f.a))
    if isinstance(f, Moebius):
        return np.maximum(f.deriv(lo), f.deriv(hi))
    probe = np.linspace(0.0, 1.0, 33)
    return f.deriv(lo[..., None] + (hi - lo)[..., None] * probe).max(axis=-1)


class WeightPotential(_OrbitPotential):
    """psi(omega) = log p_{omega_0}(pi(sigma omega))."""

    kind = "from_weights"

    def __init__(self, sys: IFSSystem, weights: WeightSystem):
        super().__init__(sys)
        self.weights = weights
        self.tail_bound = weights.tail_mass_bound
        self.holder_estimate, self.holder_exponent = holder_constant(sys, weights)

    def _term(self, symbols, x):
        out = np.empty(np.shape(symbols))
        for i in np.unique(symbols):
            m = symbols == i
            out[m] = self.weights.p[i - 1](x[m])
        with np.errstate(divide="ignore"):
            return np.log(np.maximum(out, 0.0))

    def _term_sup(self, symbols, lo, hi):
        out = np.empty(np.shape(symbols))
        for i in np.unique(symbols):
            m = symbols == i
            out[m] = self.weights.p[i - 1].sup_on(lo[m], hi[m])
        return np.log(np.maximum(out, 0.0))


class GeometricPotential(_OrbitPotential):
    """psi_s(omega) = s log|phi'_{omega_0}(pi(sigma omega))|."""

    kind = "psi_s"

    def __init__(self, sys: IFSSystem, s: float):
        super().__init__(sys)
        self.s = float(s)
        if sys.countable:
            a = sys.alpha ** self.s
            self.tail_bound = math.inf if self.s <= 0 else a ** (sys.N + 1) / (1 - a)
        self.holder_estimate = self.s * sys.H

    def _term(self, symbols, x):
        return self.s * np.log(deriv_symbols(self.sys, symbols, x))

    def _term_sup(self, symbols, lo, hi):
        out = np.empty(np.shape(symbols))
        for i in np.unique(symbols):
            m = symbols == i
            out[m] = _sup_deriv_bounds(self.sys.maps[i - 1], lo[m], hi[m])
        return self.s * np.log(out)


def potential_from_weights(sys: IFSSystem, weights: WeightSystem) -> WeightPotential:
    weights.validate(sys)
    return WeightPotential(sys, weights)


def geometric_potential(sys: IFSSystem, s: float) -> GeometricPotential:
    return GeometricPotential(sys, s)


def holder_constant(sys: IFSSystem, weights: WeightSystem):
    """(C', alpha') with |psi(w) - psi(t)| <= C' d_beta(w, t)^alpha' at beta = -log s."""
    C, alpha = weights.holder
    if C == 0:
        return 0.0, alpha
    pmin = weights.min_weight(sys)
    if pmin <= 0:
        return math.inf, alpha
    return C / pmin * (sys.V.diam / sys.s) ** alpha, alpha


# ---------------------------------------------------------------------------
# operations


class SummabilityResult(NamedTuple):
    value: float
    passed: bool


def check_summability(psi: Potential, N: Optional[int] = None) -> SummabilityResult:
    N = psi.N if N is None else N
    sups = psi.cylinder_sup(np.arange(1, N + 1)[:, None])
    partial = float(np.exp(sups).sum())
    if not psi.countable:
        return SummabilityResult(partial, math.isfinite(partial))
    if psi.tail_bound is None:
        raise TailUncertified("countable potential without a declared tail bound")
    total = partial + psi.tail_bound
    return SummabilityResult(total, math.isfinite(total))


def birkhoff_sum(psi: Potential, tau, n: int, depth=None) -> float:
    total = 0.0
    seq = tau
    for _ in range(n):
        total += psi.value(seq, depth)
        seq = seq.shift()
    return total


class PressureResult(NamedTuple):
    estimates: list
    P: float
    aitken: float


def _aitken(a):
    if len(a) < 3:
        return a[-1]
    d1, d2 = a[-1] - a[-2], a[-2] - a[-3]
    den = d1 - d2
    if den == 0 or not math.isfinite(den):
        return a[-1]
    return a[-1] - d1 * d1 / den


def pressure(psi: Potential, depth_max: int, N: Optional[int] = None) -> PressureResult:
    """a_n = (1/n) log sum_{|w|=n} exp(sup S_n psi|[w]) for n = 1..depth_max."""
    N = psi.N if N is None else N
    check_budget(N**depth_max)
    est = []
    for n in range(1, depth_max + 1):
        vals = psi.cylinder_sup(all_words(N, n))
        dead = int(np.sum(vals == -math.inf))
        if dead:
            log.info("pressure depth %d: pruned %d zero-weight cylinders", n, dead)
        est.append(float(logsumexp(vals[vals > -math.inf])) / n)
    return PressureResult(est, min(est), float(_aitken(est)))


def pressure_root(make_potential: Callable[[float], Potential], lo, hi, depth=8, xtol=1e-12):
    """Zero of s -> P(psi_s) by bisection on the depth-`depth` estimate."""
    return bisect(lambda s: pressure(make_potential(s), depth).estimates[-1], lo, hi, xtol=xtol)


class GibbsCheck(NamedTuple):
    cmin: float
    cmax: float
    slope: float
    passed: bool
    per_depth: list


def check_gibbs(psi: Potential, mu, P: float, depth: int, C_max: float = 100.0,
                slope_tol: float = 0.01) -> GibbsCheck:
    """Ratios mu([w]) / exp(S_n psi(w^inf) - nP) over all cylinders, n <= depth."""
    rows = []
    for n in range(1, depth + 1):
        words = all_words(psi.N, n)
        mass = mu.marginal(n).ravel()
        with np.errstate(divide="ignore", over="ignore"):
            ratio = mass / np.exp(psi.periodic_sums(words) - n * P)
        rows.append((float(ratio.min()), float(ratio.max())))
    lo = np.array([r[0] for r in rows])
    hi = np.array([r[1] for r in rows])
    ns = np.arange(1, depth + 1)
    slope = 0.0
    if depth >= 2 and np.all(lo > 0) and np.all(np.isfinite(hi)):
        slope = max(np.polyfit(ns, np.log(hi), 1)[0], np.polyfit(ns, -np.log(lo), 1)[0])
    else:
        slope = math.inf
    cmin, cmax = float(lo.min()), float(hi.max())
    ok = cmin > 0 and cmax <= C_max and 1.0 / cmin <= C_max and slope <= slope_tol
    return GibbsCheck(cmin, cmax, float(slope), bool(ok), rows)
