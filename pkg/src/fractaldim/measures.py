"""Measures on V and on the shift: grid, empirical and cylinder representations.

The adjoint transfer operator is discretized on a uniform grid by pushing
each bin's mass from its center through every map into the bin that
contains the image point.  For functions that are constant on bins this
keeps the duality  int L g dmu = int g d(L* mu)  exact.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import logsumexp

from .errors import CombinatorialBlowup, NoConvergence, ZeroMarginal, check_budget
from .ifs import Box, Disk, IFSSystem, compose_maps
from .symbolic import all_words

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# random streams


def stream(seed: int, chain_id: int = 0) -> np.random.Generator:
    """Counter-based Philox stream keyed by (seed, chain id)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(chain_id)])))


def draw_index(probs, u, N):
    """Inverse-CDF draw (left-to-right running sum); leftover tail mass goes to N.

    Returns (symbol, from_tail).
    """
    c = 0.0
    for i, q in enumerate(probs):
        c += q
        if u < c:
            return i + 1, False
    return N, True


def scalar_probs(weights):
    """Fast x -> [p_1(x), ..., p_N(x)] as Python floats (shared with the chain simulator)."""
    from .weights import AffineWeight, ConstantWeight

    ps = weights.p
    if all(isinstance(q, ConstantWeight) for q in ps):
        const = [q.c for q in ps]
        return lambda x: const
    if all(isinstance(q, (AffineWeight, ConstantWeight)) for q in ps):
        coef = [(q.a, q.b) if isinstance(q, AffineWeight) else (q.c, 0.0) for q in ps]
        return lambda x: [a + b * x for a, b in coef]
    return lambda x: [float(q(x)) for q in ps]


# ---------------------------------------------------------------------------
# representations


@dataclass
class GridMeasure:
    region: object
    resolution: int
    mass: np.ndarray
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if isinstance(self.region, Disk):
            d = self.region
            self.region = Box(d.center - d.radius * (1 + 1j), d.center + d.radius * (1 + 1j))
        self.mass = np.asarray(self.mass, dtype=float)

    @classmethod
    def uniform(cls, region, resolution):
        shape = (resolution,) if region.dim == 1 else (resolution, resolution)
        m = np.full(shape, 1.0 / np.prod(shape))
        return cls(region, resolution, m)

    @classmethod
    def point_mass(cls, region, resolution, x):
        g = cls.uniform(region, resolution)
        g.mass[:] = 0.0
        g.mass.flat[g.bin_index(np.atleast_1d(x))[0]] = 1.0
        return g

    @property
    def dim(self):
        return self.region.dim

    @property
    def width(self):
        if self.dim == 1:
            return self.region.diam / self.resolution
        return (self.region.hi - self.region.lo).real / self.resolution

    def centers(self):
        R = self.resolution
        if self.dim == 1:
            return self.region.lo + (np.arange(R) + 0.5) * self.width
        lo, hi = self.region.lo, self.region.hi
        xs = lo.real + (np.arange(R) + 0.5) * (hi.real - lo.real) / R
        ys = lo.imag + (np.arange(R) + 0.5) * (hi.imag - lo.imag) / R
        X, Y = np.meshgrid(xs, ys)
        return (X + 1j * Y).ravel()

    def bin_index(self, x):
        """Flat bin index of each point (points outside are clipped)."""
        R = self.resolution
        if self.dim == 1:
            j = np.floor((np.asarray(x) - self.region.lo) / self.width).astype(np.int64)
            return np.clip(j, 0, R - 1)
        lo, hi = self.region.lo, self.region.hi
        x = np.asarray(x)
        ix = np.clip(np.floor((x.real - lo.real) / (hi.real - lo.real) * R).astype(np.int64), 0, R - 1)
        iy = np.clip(np.floor((x.imag - lo.imag) / (hi.imag - lo.imag) * R).astype(np.int64), 0, R - 1)
        return iy * R + ix

    def total(self):
        return float(self.mass.sum())

    def mean(self):
        return complex(np.dot(self.centers(), self.mass.ravel())) if self.dim == 2 else float(
            np.dot(self.centers(), self.mass))

    def integrate(self, g):
        return float(np.dot(g(self.centers()), self.mass.ravel()))

    def cdf(self, x):
        """Piecewise-linear distribution function (dimension one)."""
        edges = self.region.lo + np.arange(self.resolution + 1) * self.width
        F = np.concatenate([[0.0], np.cumsum(self.mass)])
        return np.interp(x, edges, F)

    def ball_mass(self, x, r):
        r = np.asarray(r, dtype=float)
        if self.dim == 1:
            return self.cdf(x + r) - self.cdf(x - r)
        c = self.centers()
        m = self.mass.ravel()
        d = np.abs(c - x)
        return np.array([m[d <= rr].sum() for rr in np.atleast_1d(r)])

    def tv(self, other):
        return 0.5 * float(np.abs(self.mass - other.mass).sum())

    def sample(self, n, rng):
        flat = self.mass.ravel()
        idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
        c = self.centers()[idx]
        if self.dim == 1:
            return c + (rng.random(n) - 0.5) * self.width
        h = (self.region.hi - self.region.lo) / self.resolution
        return c + (rng.random(n) - 0.5) * h.real + 1j * (rng.random(n) - 0.5) * h.imag

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            if self.dim == 1:
                w.writerow(["bin_center", "mass"])
                for c, m in zip(self.centers(), self.mass):
                    w.writerow([repr(float(c)), repr(float(m))])
            else:
                w.writerow(["x", "y", "mass"])
                for c, m in zip(self.centers(), self.mass.ravel()):
                    w.writerow([repr(float(c.real)), repr(float(c.imag)), repr(float(m))])

    def to_pgm(self, path):
        """Binary PGM (P5), rows top to bottom = decreasing y."""
        if self.dim != 2:
            raise ValueError("PGM output needs a planar grid")
        top = self.mass.max()
        img = np.zeros_like(self.mass) if top <= 0 else self.mass / top
        data = np.round(255 * img[::-1]).astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(b"P5\n%d %d\n255\n" % (self.resolution, self.resolution))
            fh.write(data.tobytes())


@dataclass
class EmpiricalMeasure:
    """Point cloud; ``symbols[k]`` is the map index that produced ``points[k]``."""

    points: np.ndarray
    weights: Optional[np.ndarray] = None
    symbols: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.points = np.asarray(self.points)
        if self.points.size == 0:
            raise ValueError("empirical measure needs at least one point")
        if self.weights is not None:
            w = np.asarray(self.weights, dtype=float)
            if np.any(w < 0):
                raise ValueError("weights must be nonnegative")
            self.weights = w / w.sum()
        self._sorted = None

    def __len__(self):
        return len(self.points)

    @property
    def dim(self):
        return 2 if np.iscomplexobj(self.points) else 1

    def _w(self):
        if self.weights is None:
            return np.full(len(self.points), 1.0 / len(self.points))
        return self.weights

    def mean(self):
        return np.dot(self._w(), self.points)

    def fraction_in(self, lo, hi):
        x = self.points
        return float(self._w()[(x >= lo) & (x <= hi)].sum())

    def _prepare(self):
        if self._sorted is None:
            if self.dim == 1:
                order = np.argsort(self.points, kind="stable")
                self._sorted = (self.points[order], np.concatenate([[0.0], np.cumsum(self._w()[order])]))
            else:
                from scipy.spatial import cKDTree

                pts = np.column_stack([self.points.real, self.points.imag])
                self._sorted = (cKDTree(pts), None)
        return self._sorted

    def ball_mass(self, x, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if self.dim == 1:
            xs, F = self._prepare()
            hi = np.searchsorted(xs, x + r, side="right")
            lo = np.searchsorted(xs, x - r, side="left")
            return F[hi] - F[lo]
        tree, _ = self._prepare()
        w = self._w()
        out = []
        for rr in r:
            idx = tree.query_ball_point([x.real, x.imag], rr)
            out.append(w[idx].sum())
        return np.array(out)

    def cdf(self, x):
        xs, F = self._prepare()
        return F[np.searchsorted(xs, x, side="right")]

    def sample(self, n, rng):
        idx = rng.choice(len(self.points), size=n, p=self._w())
        return self.points[idx]

    def to_jsonl(self, path):
        with open(path, "w") as fh:
            for k, x in enumerate(self.points):
                xv = [float(x.real), float(x.imag)] if self.dim == 2 else float(x)
                rec = {"step": k, "x": xv}
                if self.symbols is not None:
                    rec["symbol"] = int(self.symbols[k])
                fh.write(json.dumps(rec) + "\n")


@dataclass
class CylinderMeasure:
    """Weights of all words on positions ``start .. start + length - 1``.

    ``weights`` has shape (N,) * length; entry [a_0-1, a_1-1, ...] is the
    mass of the cylinder with those symbols.
    """

    weights: np.ndarray
    start: int = 0
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        tot = self.weights.sum()
        if not abs(tot - 1.0) <= 1e-12:
            if tot <= 0:
                raise ValueError("cylinder measure has no mass")
            self.weights = self.weights / tot

    @classmethod
    def from_flat(cls, flat, N, start=0):
        flat = np.asarray(flat, dtype=float)
        n = round(math.log(flat.size, N)) if flat.size > 1 else 1
        return cls(flat.reshape((N,) * n), start)

    @classmethod
    def bernoulli(cls, probs, depth):
        p = np.asarray(probs, dtype=float)
        w = p
        for _ in range(depth - 1):
            w = np.multiply.outer(w, p)
        return cls(w)

    @classmethod
    def markov(cls, stationary, transition, depth, start=0):
        P = np.asarray(transition, float)
        w = np.asarray(stationary, float)
        for _ in range(depth - 1):
            w = w[..., None] * P.reshape((1,) * (w.ndim - 1) + P.shape)
        return cls(w, start)

    @classmethod
    def delta(cls, word, N):
        w = np.zeros((N,) * len(word))
        w[tuple(a - 1 for a in word)] = 1.0
        return cls(w)

    @property
    def N(self):
        return self.weights.shape[0]

    @property
    def length(self):
        return self.weights.ndim

    @property
    def depth(self):
        return self.length

    def weight(self, word):
        return float(self.weights[tuple(a - 1 for a in word)])

    def marginal(self, n):
        """Weights of the first n positions (an (N,)*n array)."""
        if n > self.length:
            raise ValueError(f"marginal {n} exceeds stored length {self.length}")
        if n == self.length:
            return self.weights
        return self.weights.sum(axis=tuple(range(n, self.length)))

    def flat(self, n=None):
        return self.marginal(self.length if n is None else n).ravel()

    def consistency_error(self):
        """max |mu(w) - sum_i mu(w i)| against a separately stored shorter level."""
        ref = self.info.get("previous_level")
        if ref is None:
            return 0.0
        return float(np.abs(self.marginal(self.length - 1) - ref).max())

    def shift_invariance_error(self):
        if self.length < 2:
            return 0.0
        head = self.weights.sum(axis=-1)
        tail = self.weights.sum(axis=0)
        return float(np.abs(head - tail).max())


@dataclass
class ConditionalMeasure:
    """Weights on past words (positions -m..-1) given the future word ``base``."""

    base: tuple
    weights: np.ndarray

    @property
    def N(self):
        return self.weights.shape[0]

    @property
    def depth(self):
        return self.weights.ndim

    def weight(self, past):
        return float(self.weights[tuple(a - 1 for a in past)])

    def items(self):
        flat = self.weights.ravel()
        words = all_words(self.N, self.depth)
        for w, q in zip(words, flat):
            yield tuple(int(a) for a in w), float(q)


# ---------------------------------------------------------------------------
# transfer operators


def transfer_apply(sys: IFSSystem, weights, g, x) -> float:
    """L g(x) = sum_i p_i(x) g(phi_i(x)).

    The truncated tail changes the result by at most tail_mass_bound * sup|g|.
    """
    p = weights.probs(x)
    return float(sum(p[i] * g(f(x)) for i, f in enumerate(sys.maps)))


def _push_operator(sys: IFSSystem, weights, grid: GridMeasure):
    c = grid.centers()
    B = c.size
    P = weights.probs(c).reshape(sys.N, B)
    P = np.clip(P, 0.0, None)
    deficit = 1.0 - P.sum(axis=0)
    P[-1] += np.clip(deficit, 0.0, None)  # truncated tail mass rides on symbol N
    rows, cols, vals = [], [], []
    for i, f in enumerate(sys.maps):
        rows.append(grid.bin_index(f(c)))
        cols.append(np.arange(B))
        vals.append(P[i])
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(B, B))
    return A


def adjoint_apply(sys: IFSSystem, weights, mu: GridMeasure) -> GridMeasure:
    A = _push_operator(sys, weights, mu)
    return GridMeasure(mu.region, mu.resolution, (A @ mu.mass.ravel()).reshape(mu.mass.shape))


def _iterate(A, m, tol_tv, max_iter):
    hist = []
    for it in range(1, max_iter + 1):
        nxt = A @ m
        d = 0.5 * float(np.abs(nxt - m).sum())
        hist.append(d)
        m = nxt
        if d < tol_tv:
            break
    return m, hist


def stationary_measure(sys: IFSSystem, weights, resolution=4096, tol_tv=1e-9, max_iter=10_000,
                       region=None) -> GridMeasure:
    """Fixed point of the discretized L*, iterated from the uniform measure.

    A second run from a point mass at a corner of V checks attractivity;
    both limits are reported in ``info``.
    """
    region = sys.V if region is None else region
    grid = GridMeasure.uniform(region, resolution)
    A = _push_operator(sys, weights, grid)
    m, hist = _iterate(A, grid.mass.ravel(), tol_tv, max_iter)
    if hist[-1] > 100 * tol_tv:
        raise NoConvergence(f"TV between iterates {hist[-1]:.3g} after {max_iter} iterations")
    corner = region.lo
    m2, hist2 = _iterate(A, GridMeasure.point_mass(region, resolution, corner).mass.ravel(), tol_tv, max_iter)
    result = GridMeasure(region, resolution, m.reshape(grid.mass.shape))
    residual = 0.5 * float(np.abs(A @ m - m).sum())
    gap = 0.5 * float(np.abs(m - m2).sum())
    result.info.update(
        iterations=len(hist),
        history=hist,
        residual_tv=residual,
        attractivity_tv=gap,
        attractive=gap <= 10 * tol_tv,
        second_seed_iterations=len(hist2),
    )
    return result


def stationarity_residual(sys, weights, mu: GridMeasure) -> float:
    return adjoint_apply(sys, weights, mu).tv(mu)


# ---------------------------------------------------------------------------
# chaos game


def chaos_game(sys: IFSSystem, weights, n_steps: int, burn_in: int = 0, seed: int = 0,
               x0=None, chain_id: int = 0) -> EmpiricalMeasure:
    """x_{k+1} = phi_{xi_k}(x_k) with xi_k ~ (p_i(x_k))_i; first burn_in points dropped."""
    if not n_steps > burn_in >= 0:
        raise ValueError("need n_steps > burn_in >= 0")
    u = stream(seed, chain_id).random(n_steps)
    x = sys.V.center if x0 is None else x0
    maps = sys.maps
    N = sys.N
    probs = scalar_probs(weights)
    pts = np.empty(n_steps, dtype=complex if sys.dim == 2 else float)
    syms = np.empty(n_steps, dtype=np.int64)
    tail_hits = 0
    for k in range(n_steps):
        i, tail = draw_index(probs(x), u[k], N)
        tail_hits += tail
        x = maps[i - 1](x)
        pts[k] = x
        syms[k] = i
    if tail_hits:
        log.info("chaos game: %d draws fell in the truncated tail (assigned to symbol %d)", tail_hits, N)
    return EmpiricalMeasure(pts[burn_in:], symbols=syms[burn_in:],
                            info={"seed": seed, "chain_id": chain_id, "tail_hits": tail_hits,
                                  "burn_in": burn_in})


def chaos_game_chains(sys, weights, n_chains, n_steps, burn_in=0, seed=0, threads=1):
    """Independent chains on streams (seed, 0..n_chains-1), pooled in chain order."""
    def run(cid):
        return chaos_game(sys, weights, n_steps, burn_in, seed, chain_id=cid)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            runs = list(ex.map(run, range(n_chains)))
    else:
        runs = [run(c) for c in range(n_chains)]
    return EmpiricalMeasure(np.concatenate([r.points for r in runs]),
                            symbols=np.concatenate([r.symbols for r in runs]),
                            info={"seed": seed, "chains": n_chains})


def chaos_ensemble(sys, weights, n_chains, n_steps, burn_in=50, seed=0):
    """Many chains advanced together with numpy; chain c reads stream (seed, c).

    Same update rule as chaos_game, vectorized across chains, so large point
    clouds are cheap.  Points are returned chain by chain.
    """
    if not n_steps > burn_in >= 0:
        raise ValueError("need n_steps > burn_in >= 0")
    U = np.stack([stream(seed, c).random(n_steps) for c in range(n_chains)], axis=1)
    x = np.full(n_chains, sys.V.center, dtype=complex if sys.dim == 2 else float)
    out = np.empty((n_steps - burn_in, n_chains), dtype=x.dtype)
    syms = np.empty((n_steps - burn_in, n_chains), dtype=np.int64)
    N = sys.N
    for k in range(n_steps):
        P = weights.probs(x).reshape(N, n_chains)
        cum = np.cumsum(P, axis=0)
        sym = 1 + (U[k][None, :] >= cum).sum(axis=0)
        sym = np.minimum(sym, N)
        nx = np.empty_like(x)
        for i in range(1, N + 1):
            m = sym == i
            if m.any():
                nx[m] = sys.maps[i - 1](x[m])
        x = nx
        if k >= burn_in:
            out[k - burn_in] = x
            syms[k - burn_in] = sym
    return EmpiricalMeasure(out.T.ravel(), symbols=syms.T.ravel(),
                            info={"seed": seed, "chains": n_chains, "burn_in": burn_in})


def ks_distance(grid: GridMeasure, emp: EmpiricalMeasure) -> float:
    """Kolmogorov-Smirnov distance between a 1-d grid CDF and a point cloud."""
    xs = np.sort(emp.points)
    n = xs.size
    F = grid.cdf(xs)
    upper = np.arange(1, n + 1) / n
    lower = np.arange(0, n) / n
    return float(max(np.max(np.abs(upper - F)), np.max(np.abs(F - lower))))


# ---------------------------------------------------------------------------
# symbolic measures


def gibbs_approximation(psi, depth: int, P: Optional[float] = None) -> CylinderMeasure:
    """Cylinder weights proportional to exp(S_n psi(w^inf)).

    P only shifts all log-weights equally, so it drops out of the
    normalization; ``info['log_partition']`` is log sum exp(S_n psi).
    """
    N = psi.N
    check_budget(N**depth)
    vals = psi.periodic_sums(all_words(N, depth))
    lz = logsumexp(vals)
    w = np.exp(vals - lz).reshape((N,) * depth)
    mu = CylinderMeasure(w)
    mu.info["log_partition"] = float(lz)
    if depth > 1:
        prev = psi.periodic_sums(all_words(N, depth - 1))
        mu.info["previous_level"] = np.exp(prev - logsumexp(prev)).reshape((N,) * (depth - 1))
    mu.info["consistency_error"] = mu.consistency_error()
    return mu


def two_sided_gibbs(psi, past: int, future: int) -> CylinderMeasure:
    """Gibbs weights on positions -past..future-1 (periodic extensions)."""
    mu = gibbs_approximation(psi, past + future)
    mu.start = -past
    return mu


def integral_of(psi, mu: CylinderMeasure) -> float:
    """int psi dmu, using the rotation-invariant periodic evaluation."""
    words = all_words(mu.N, mu.length)
    return float(np.dot(mu.flat(), psi.periodic_sums(words)) / mu.length)


def conditional_measure(mu: CylinderMeasure, omega) -> ConditionalMeasure:
    """Past-word weights of mu on the cylinder [omega]_0^{len-1}: joint / marginal."""
    m = -mu.start
    if m <= 0:
        raise ValueError("conditional measures need a two-sided cylinder measure (start < 0)")
    omega = tuple(omega)
    if len(omega) > mu.length - m:
        raise ValueError("omega longer than the stored future")
    future_axes = tuple(range(m + len(omega), mu.length))
    joint = mu.weights.sum(axis=future_axes) if future_axes else mu.weights
    joint = joint[(Ellipsis,) + tuple(a - 1 for a in omega)]
    tot = joint.sum()
    if tot <= 0:
        raise ZeroMarginal(f"cylinder {omega} has zero marginal mass")
    return ConditionalMeasure(omega, joint / tot)


# ---------------------------------------------------------------------------
# sub-grid ball masses


class RefinedMeasure:
    """Stationary measure with ball masses resolved below the grid scale.

    Stationarity gives mu(E) = sum_w int G_w(y) 1_E(phi_w(y)) dmu(y) with
    G_{w i}(y) = p_i(y) G_w(phi_i(y)).  Words are expanded until phi_w(V) is
    inside E, disjoint from it, or no larger than the ball radius; the
    remaining integral is taken against the converged grid measure, where
    phi_w^{-1}(E) spans a sizeable part of V.  G_w lives on the bin centers
    and is carried from parent to child by linear interpolation.
    """

    def __init__(self, sys: IFSSystem, weights, base: GridMeasure, max_depth: int = 80,
                 max_nodes: int = 200_000):
        if base.dim != 1:
            raise ValueError("sub-grid refinement is implemented for intervals")
        self.sys, self.weights, self.base = sys, weights, base
        self.max_depth, self.max_nodes = max_depth, max_nodes
        c = base.centers()
        self._c = c
        self._m = base.mass.ravel()
        P = np.clip(weights.probs(c).reshape(sys.N, -1), 0.0, None)
        P[-1] += np.clip(1.0 - P.sum(axis=0), 0.0, None)
        self._p = P
        R = base.resolution
        self._gather = []
        for f in sys.maps:
            u = np.clip((f(c) - base.region.lo) / base.width - 0.5, 0.0, R - 1.0)
            j = np.minimum(np.floor(u).astype(np.int64), R - 2)
            self._gather.append((j, u - j))
        self._cache = {(): (np.ones_like(c), None)}
        self._edges = base.region.lo + np.arange(R + 1) * base.width

    @property
    def dim(self):
        return 1

    @property
    def floor(self):
        return 4 * self.sys.V.diam * self.sys.s**self.max_depth

    def _node(self, w):
        hit = self._cache.get(w)
        if hit is not None:
            return hit
        G, M = self._node(w[:-1])
        i = w[-1]
        j, t = self._gather[i - 1]
        Gc = self._p[i - 1] * (G[j] * (1 - t) + G[j + 1] * t)
        f = self.sys.maps[i - 1]
        Mc = f if M is None else compose_maps(M, f)
        if len(self._cache) > 50_000:
            self._cache = {(): self._cache[()]}
        self._cache[w] = (Gc, Mc)
        return Gc, Mc

    def _partial(self, G, M, lo, hi):
        """int G(y) 1[lo <= M(y) <= hi] dmu(y), bins cut by linear interpolation."""
        y = self._edges
        My = M(y)
        if My[-1] < My[0]:
            y, My = y[::-1], My[::-1]
            F = np.concatenate([[0.0], np.cumsum((G * self._m)[::-1])])
        else:
            F = np.concatenate([[0.0], np.cumsum(G * self._m)])
        return float(np.interp(hi, My, F) - np.interp(lo, My, F))

    def ball_mass(self, x, r):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        return np.array([self._ball(float(x), float(rr)) for rr in r])

    def _ball(self, x, r):
        lo, hi = x - r, x + r
        V = self.sys.V
        total = 0.0
        stack = [()]
        nodes = 0
        while stack:
            w = stack.pop()
            G, M = self._node(w)
            if M is None:
                ilo, ihi = V.lo, V.hi
            else:
                a, b = M.image_bounds(np.array([V.lo]), np.array([V.hi]))
                ilo, ihi = float(a[0]), float(b[0])
            if ihi < lo or ilo > hi:
                continue
            if lo <= ilo and ihi <= hi:
                total += float(np.dot(G, self._m))
                continue
            if M is not None and (ihi - ilo <= r or len(w) >= self.max_depth):
                total += self._partial(G, M, lo, hi)
                continue
            nodes += 1
            if nodes > self.max_nodes:
                raise CombinatorialBlowup(f"ball refinement needs more than {self.max_nodes} nodes")
            stack.extend(w + (i,) for i in range(self.sys.N, 0, -1))
        return total

    def sample(self, n, rng, steps=60):
        """mu-distributed points: grid draws pushed through `steps` random maps."""
        x = self.base.sample(n, rng)
        U = rng.random((steps, n))
        for k in range(steps):
            cum = np.cumsum(self.weights.probs(x).reshape(self.sys.N, n), axis=0)
            sym = np.minimum(1 + (U[k][None, :] >= cum).sum(axis=0), self.sys.N)
            nx = np.empty_like(x)
            for i in range(1, self.sys.N + 1):
                m = sym == i
                nx[m] = self.sys.maps[i - 1](x[m])
            x = nx
        return x
