"""Random systems with complete connections (state space W, index space X, u, P).

A chain starts at w_0 and draws xi_{n+1} from P(w_n, .) with
w_{n+1} = u(w_n, xi_{n+1}).  Draws use the same inverse-CDF rule and Philox
streams as the chaos game, so the IFS bridge reproduces it bit for bit.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .measures import conditional_measure, draw_index, scalar_probs, stream

log = logging.getLogger(__name__)

MC_THRESHOLD = 10**6


@dataclass
class RSCC:
    """u(state, index) -> state; P(state) -> (support, probs).

    ``probs`` may sum to less than one; the missing mass is the truncated
    tail and is assigned to the last support element when drawn.
    ``encode`` turns a state into something JSON-serializable.
    """

    u: Callable
    P: Callable
    encode: Callable = lambda w: w
    name: str = "rscc"
    index_encode: Callable = lambda x: x

    def step(self, w, x):
        return self.u(w, x)


@dataclass
class ChainTrajectory:
    w0: object
    indices: list
    states: list
    seed: int
    chain_id: int = 0
    tail_draws: int = 0

    @property
    def tail_sampled(self):
        return self.tail_draws > 0

    def to_jsonl(self, path, r: RSCC):
        with open(path, "w") as fh:
            fh.write(json.dumps({"n": 0, "index": None, "state": r.encode(self.w0)}) + "\n")
            for n, (x, w) in enumerate(zip(self.indices, self.states), 1):
                fh.write(json.dumps({"n": n, "index": r.index_encode(x), "state": r.encode(w)}) + "\n")


def simulate_chain(r: RSCC, w0, T: int, seed: int = 0, chain_id: int = 0, uniforms=None) -> ChainTrajectory:
    if T < 1:
        raise ValueError("T must be at least 1")
    u = stream(seed, chain_id).random(T) if uniforms is None else uniforms
    w = w0
    xs, ws = [], []
    tail = 0
    for k in range(T):
        support, probs = r.P(w)
        j, hit = draw_index(probs, u[k], len(support))
        tail += hit
        x = support[j - 1]
        w = r.u(w, x)
        xs.append(x)
        ws.append(w)
    if tail:
        log.info("chain %d: tail-mass symbol drawn %d times", chain_id, tail)
    return ChainTrajectory(w0, xs, ws, seed, chain_id, tail)


# ---------------------------------------------------------------------------
# concrete systems


@dataclass(frozen=True)
class UrnScheme:
    """Colors 1..m; drawing color j adds d_j balls of that color."""

    a: tuple
    d: tuple

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(int(v) for v in self.a))
        object.__setattr__(self, "d", tuple(int(v) for v in self.d))
        if len(self.a) != len(self.d) or not self.a:
            raise ValueError("urn needs matching, nonempty count and replacement vectors")
        if min(self.a) < 0 or min(self.d) < 0 or sum(self.a) <= 0:
            raise ValueError("urn counts must be nonnegative with a positive total")

    @property
    def m(self):
        return len(self.a)

    def rscc(self) -> RSCC:
        colors = list(range(1, self.m + 1))
        d = self.d

        def P(w):
            tot = sum(w)
            return colors, [c / tot for c in w]

        def u(w, j):
            return tuple(c + (d[i] if i == j - 1 else 0) for i, c in enumerate(w))

        return RSCC(u, P, encode=list, name="urn")


@dataclass
class FiniteRSCC:
    """States 0..S-1, indices 1..X; u and P stored as tables."""

    u_table: np.ndarray   # (S, X) next state
    p_table: np.ndarray   # (S, X) probabilities

    @classmethod
    def random(cls, n_states, n_indices, seed=0):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0])))
        u = rng.integers(0, n_states, size=(n_states, n_indices))
        p = rng.dirichlet(np.ones(n_indices), size=n_states)
        return cls(u, p)

    def rscc(self) -> RSCC:
        idx = list(range(1, self.u_table.shape[1] + 1))
        U, Pt = self.u_table, self.p_table
        return RSCC(lambda w, x: int(U[w, x - 1]), lambda w: (idx, Pt[w].tolist()), name="finite")


# ---------------------------------------------------------------------------
# transfer probabilities


class TransferResult(NamedTuple):
    value: float
    halfwidth: float
    exact: bool


def _as_predicate(A):
    if callable(A):
        return A
    words = {tuple(a) for a in A}
    return lambda word: tuple(word) in words


def _support_size(r, w):
    return len(r.P(w)[0])


def transfer_probability_m(r: RSCC, w, m: int, A, budget: int = MC_THRESHOLD, n_mc: int = 100_000,
                           seed: int = 0) -> TransferResult:
    """P_m(w, A) = sum over x_1..x_m of P(w, x_1) P(w x_1, x_2) ... 1_A(x_1..x_m).

    Exact path enumeration when support^m <= budget; otherwise a Monte Carlo
    estimate with a 3-sigma binomial half-width.
    """
    if m < 1:
        raise ValueError("m must be at least 1")
    pred = _as_predicate(A)
    if _support_size(r, w) ** m <= budget:
        total = 0.0

        def rec(state, prefix, prob):
            nonlocal total
            if len(prefix) == m:
                if pred(prefix):
                    total += prob
                return
            support, probs = r.P(state)
            for x, q in zip(support, probs):
                if q > 0:
                    rec(r.u(state, x), prefix + (x,), prob * q)

        rec(w, (), 1.0)
        return TransferResult(total, 0.0, True)
    log.info("support^m exceeds %d: Monte Carlo estimate of P_m", budget)
    hits = sum(bool(pred(tuple(simulate_chain(r, w, m, seed, c).indices))) for c in range(n_mc))
    p = hits / n_mc
    return TransferResult(p, 3 * math.sqrt(max(p * (1 - p), 1.0 / n_mc) / n_mc), False)


def transfer_probability_mn(r: RSCC, w, n: int, m: int, A, budget: int = MC_THRESHOLD) -> TransferResult:
    """P_m^n(w, A) = P_{n+m-1}(w, X^{n-1} x A) through the path sum."""
    pred = _as_predicate(A)
    return transfer_probability_m(r, w, n + m - 1, lambda word: pred(word[n - 1:]), budget)


def transfer_probability_mn_states(r: RSCC, w, n: int, m: int, A, key=lambda s: s) -> float:
    """Same quantity by pushing the state distribution n-1 steps, then P_m from each state."""
    dist = {key(w): (w, 1.0)}
    for _ in range(n - 1):
        nxt = {}
        for state, q in dist.values():
            support, probs = r.P(state)
            for x, p in zip(support, probs):
                if p > 0:
                    s2 = r.u(state, x)
                    k = key(s2)
                    old = nxt.get(k, (s2, 0.0))
                    nxt[k] = (s2, old[1] + q * p)
        dist = nxt
    return float(sum(q * transfer_probability_m(r, s, m, A, budget=math.inf).value for s, q in dist.values()))


def empirical_frequency(r: RSCC, w0, n: int, m: int, A, n_chains: int, seed: int = 0):
    """Fraction of chains with (xi_n..xi_{n+m-1}) in A, plus a 3-sigma half-width."""
    pred = _as_predicate(A)
    T = n + m - 1
    hits = 0
    for c in range(n_chains):
        tr = simulate_chain(r, w0, T, seed, c)
        hits += bool(pred(tuple(tr.indices[n - 1:])))
    p = hits / n_chains
    return p, hits


# ---------------------------------------------------------------------------
# bridges


def ifs_to_rscc(sys, weights) -> RSCC:
    """W = V, X = 1..N, u(x, i) = phi_i(x), P(x) = (p_i(x))_i."""
    probs = scalar_probs(weights)
    maps = sys.maps
    idx = list(range(1, sys.N + 1))

    def encode(x):
        return [float(x.real), float(x.imag)] if isinstance(x, complex) else float(x)

    return RSCC(lambda x, i: maps[i - 1](x), lambda x: (idx, probs(x)), encode=encode, name="ifs")


def smale_to_rscc(smax, mu) -> RSCC:
    """W = {(omega, x)}, X = past words; u((omega, x), tau) = (sigma omega, T_omega(x)).

    P at (omega, x) is the conditional measure of the two-sided cylinder
    measure ``mu`` on [omega restricted to its stored future length].
    """
    if mu.start >= 0:
        raise ValueError("smale bridge needs a two-sided cylinder measure")
    future = mu.length + mu.start
    cache = {}

    def P(w):
        omega, _ = w
        key = omega.prefix(future)
        hit = cache.get(key)
        if hit is None:
            cm = conditional_measure(mu, key)
            items = [(p, q) for p, q in cm.items() if q > 0]
            hit = ([p for p, _ in items], [q for _, q in items])
            cache[key] = hit
        return hit

    def u(w, tau):
        omega, x = w
        return omega.shift(), smax.T(omega)(x)

    def encode(w):
        omega, x = w
        xv = [float(x.real), float(x.imag)] if isinstance(x, complex) else float(x)
        return {"omega_prefix": list(omega.prefix(future)), "x": xv}

    return RSCC(u, P, encode=encode, name="smale", index_encode=list)
