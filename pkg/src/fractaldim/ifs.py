"""Conformal contractions on a compact region of R or C, and IFS systems.

Points are floats in dimension one and complex numbers in dimension two
(the plane is treated as C so that conformal maps are similarities and
Moebius maps).  Every map evaluates elementwise on numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ResolutionExceeded, SymbolOutOfAlphabet, ValidationError
from .expr import Expression

_EPS = 1e-12


# ---------------------------------------------------------------------------
# Regions


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)) or self.lo > self.hi:
            raise ValidationError(f"bad interval [{self.lo}, {self.hi}]")

    dim = 1

    @property
    def diam(self):
        return self.hi - self.lo

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, x, tol=0.0):
        return bool(self.lo - tol <= x <= self.hi + tol)

    def contains_region(self, other, tol=_EPS):
        return self.lo - tol <= other.lo and other.hi <= self.hi + tol

    def intersects(self, other):
        return not (self.hi < other.lo or other.hi < self.lo)

    def distance_to(self, x):
        return max(self.lo - x, x - self.hi, 0.0)

    def grid(self, n):
        return np.linspace(self.lo, self.hi, n)

    def to_dict(self):
        return {"type": "interval", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Disk:
    center: complex
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", complex(self.center))
        if not self.radius >= 0:
            raise ValidationError("disk radius must be nonnegative")

    dim = 2

    @property
    def diam(self):
        return 2.0 * self.radius

    def contains(self, z, tol=0.0):
        return bool(abs(z - self.center) <= self.radius + tol)

    def contains_region(self, other, tol=_EPS):
        d = bounding_disk(other)
        return abs(d.center - self.center) + d.radius <= self.radius + tol

    def intersects(self, other):
        if isinstance(other, Disk):
            return abs(self.center - other.center) <= self.radius + other.radius
        return other.distance_to(self.center) <= self.radius

    def distance_to(self, z):
        return max(abs(z - self.center) - self.radius, 0.0)

    def grid(self, n):
        g = Box(self.center - self.radius * (1 + 1j), self.center + self.radius * (1 + 1j)).grid(n)
        return g[np.abs(g - self.center) <= self.radius]

    def to_dict(self):
        return {"type": "disk", "center": [self.center.real, self.center.imag], "radius": self.radius}


@dataclass(frozen=True)
class Box:
    lo: complex
    hi: complex

    def __post_init__(self):
        object.__setattr__(self, "lo", complex(self.lo))
        object.__setattr__(self, "hi", complex(self.hi))
        if self.lo.real > self.hi.real or self.lo.imag > self.hi.imag:
            raise ValidationError("box corners out of order")

    dim = 2

    @property
    def diam(self):
        return abs(self.hi - self.lo)

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def contains(self, z, tol=0.0):
        return bool(
            self.lo.real - tol <= z.real <= self.hi.real + tol
            and self.lo.imag - tol <= z.imag <= self.hi.imag + tol
        )

    def contains_region(self, other, tol=_EPS):
        if isinstance(other, Box):
            return self.contains(other.lo, tol) and self.contains(other.hi, tol)
        c, r = other.center, other.radius
        return self.contains(c + r, tol) and self.contains(c - r, tol) and self.contains(
            c + 1j * r, tol
        ) and self.contains(c - 1j * r, tol)

    def intersects(self, other):
        if isinstance(other, Box):
            return not (
                self.hi.real < other.lo.real
                or other.hi.real < self.lo.real
                or self.hi.imag < other.lo.imag
                or other.hi.imag < self.lo.imag
            )
        return other.intersects(self)

    def distance_to(self, z):
        dx = max(self.lo.real - z.real, z.real - self.hi.real, 0.0)
        dy = max(self.lo.imag - z.imag, z.imag - self.hi.imag, 0.0)
        return math.hypot(dx, dy)

    def grid(self, n):
        xs = np.linspace(self.lo.real, self.hi.real, n)
        ys = np.linspace(self.lo.imag, self.hi.imag, n)
        X, Y = np.meshgrid(xs, ys)
        return (X + 1j * Y).ravel()

    def to_dict(self):
        return {"type": "box", "lo": [self.lo.real, self.lo.imag], "hi": [self.hi.real, self.hi.imag]}


def bounding_disk(region):
    if isinstance(region, Disk):
        return region
    return Disk(region.center, 0.5 * region.diam)


def region_from_dict(d):
    kind = d.get("type", "interval")
    if kind == "interval":
        return Interval(float(d["lo"]), float(d["hi"]))
    if kind == "disk":
        c = d["center"]
        return Disk(complex(c[0], c[1]), float(d["radius"]))
    if kind == "box":
        lo, hi = d["lo"], d["hi"]
        return Box(complex(lo[0], lo[1]), complex(hi[0], hi[1]))
    raise ValidationError(f"unknown region type {kind!r}")


# ---------------------------------------------------------------------------
# Maps


class ConformalMap:
    """Base class.  Subclasses provide __call__, deriv, image, sup_deriv."""

    dim = 1
    kind = "abstract"

    def compose(self, inner):
        """Return ``self o inner``."""
        return compose_maps(self, inner)

    def image_bounds(self, lo, hi):
        """Vectorized interval image for monotone one-dimensional maps."""
        a, b = self(lo), self(hi)
        return np.minimum(a, b), np.maximum(a, b)


class Affine(ConformalMap):
    """x -> a*x + b; complex coefficients make a planar similarity."""

    kind = "affine"

    def __init__(self, a, b):
        if isinstance(a, complex) or isinstance(b, complex):
            self.a, self.b, self.dim = complex(a), complex(b), 2
        else:
            self.a, self.b, self.dim = float(a), float(b), 1
        if self.a == 0:
            raise ValidationError("affine map must be injective (a != 0)")

    def __call__(self, x):
        return self.a * x + self.b

    def deriv(self, x):
        return np.full(np.shape(x), abs(self.a)) if np.ndim(x) else abs(self.a)

    def image(self, region):
        if isinstance(region, Interval):
            u, v = self.a * region.lo + self.b, self.a * region.hi + self.b
            return Interval(min(u, v), max(u, v))
        if isinstance(region, Disk):
            return Disk(self.a * region.center + self.b, abs(self.a) * region.radius)
        corners = np.array([region.lo, region.hi, complex(region.lo.real, region.hi.imag),
                            complex(region.hi.real, region.lo.imag)])
        w = self.a * corners + self.b
        return Box(complex(w.real.min(), w.imag.min()), complex(w.real.max(), w.imag.max()))

    def sup_deriv(self, region):
        return abs(self.a)

    def as_moebius(self):
        return Moebius(self.a, self.b, 0.0, 1.0)

    def to_dict(self):
        return {"kind": "affine", "a": _num_out(self.a), "b": _num_out(self.b)}

    def __repr__(self):
        return f"Affine({self.a!r}, {self.b!r})"


class Moebius(ConformalMap):
    """x -> (a x + b) / (c x + d); real coefficients act on an interval."""

    kind = "moebius"

    def __init__(self, a, b, c, d):
        coeffs = [a, b, c, d]
        if any(isinstance(v, complex) for v in coeffs):
            coeffs = [complex(v) for v in coeffs]
            self.dim = 2
        else:
            coeffs = [float(v) for v in coeffs]
            self.dim = 1
        scale = max(abs(v) for v in coeffs)
        if scale == 0:
            raise ValidationError("degenerate Moebius map")
        self.a, self.b, self.c, self.d = (v / scale for v in coeffs)
        self.det = self.a * self.d - self.b * self.c
        if self.det == 0:
            raise ValidationError("Moebius map has zero determinant")

    @property
    def pole(self):
        return None if self.c == 0 else -self.d / self.c

    def __call__(self, x):
        return (self.a * x + self.b) / (self.c * x + self.d)

    def deriv(self, x):
        return abs(self.det) / np.abs(self.c * x + self.d) ** 2

    def _check_pole(self, region):
        p = self.pole
        if p is not None and region.distance_to(p) <= 0:
            raise ValidationError(f"Moebius pole {p} lies in the region")

    def image(self, region):
        self._check_pole(region)
        if isinstance(region, Interval):
            lo, hi = self.image_bounds(region.lo, region.hi)
            return Interval(float(lo), float(hi))
        disk = bounding_disk(region)
        if self.c == 0:
            return Disk((self.a * disk.center + self.b) / self.d, abs(self.a / self.d) * disk.radius)
        pts = disk.center + disk.radius * np.exp(1j * np.array([0.0, 2.0943951023931953, 4.1887902047863905]))
        return _circumdisk(*self(pts))

    def sup_deriv(self, region):
        self._check_pole(region)
        if isinstance(region, Interval):
            return float(max(self.deriv(region.lo), self.deriv(region.hi)))
        if self.c == 0:
            return abs(self.a / self.d)
        disk = bounding_disk(region)
        gap = abs(self.pole - disk.center) - disk.radius
        return abs(self.det) / (abs(self.c) * gap) ** 2

    def to_dict(self):
        return {"kind": "moebius", **{k: _num_out(getattr(self, k)) for k in "abcd"}}

    def __repr__(self):
        return f"Moebius({self.a!r}, {self.b!r}, {self.c!r}, {self.d!r})"


class GaussBranch(Moebius):
    """Inverse branch x -> 1/(x + n) of the Gauss map."""

    kind = "moebius_branch"

    def __init__(self, n):
        self.n = n
        super().__init__(0.0, 1.0, 1.0, float(n))

    def to_dict(self):
        return {"kind": "moebius_branch", "n": self.n}

    def __repr__(self):
        return f"GaussBranch({self.n})"


class ExpressionMap(ConformalMap):
    """User formula on an interval; must be C^1 and strictly monotone."""

    kind = "expression"
    dim = 1

    def __init__(self, source):
        self.expr = source if isinstance(source, Expression) else Expression(source)

    def __call__(self, x):
        return self.expr(x)

    def deriv(self, x):
        return np.abs(self.expr.derivative(x))

    def image(self, region):
        lo, hi = self.image_bounds(region.lo, region.hi)
        return Interval(float(lo), float(hi))

    def sup_deriv(self, region):
        return float(np.max(self.deriv(region.grid(257))))

    def check_monotone(self, region):
        d = self.expr.derivative(region.grid(257))
        if not (np.all(d > 0) or np.all(d < 0)):
            raise ValidationError(f"map {self.expr.source!r} is not strictly monotone on V")

    def to_dict(self):
        return {"kind": "expression", "expr": self.expr.source}

    def __repr__(self):
        return f"ExpressionMap({self.expr.source!r})"


class Composed(ConformalMap):
    """Composition of maps, listed outermost first."""

    kind = "composed"

    def __init__(self, maps):
        flat = []
        for m in maps:
            flat.extend(m.maps if isinstance(m, Composed) else [m])
        self.maps = tuple(flat)
        self.dim = self.maps[0].dim

    def __call__(self, x):
        for f in reversed(self.maps):
            x = f(x)
        return x

    def deriv(self, x):
        out = 1.0
        for f in reversed(self.maps):
            out = out * f.deriv(x)
            x = f(x)
        return out

    def image_bounds(self, lo, hi):
        for f in reversed(self.maps):
            lo, hi = f.image_bounds(lo, hi)
        return lo, hi

    def image(self, region):
        for f in reversed(self.maps):
            region = f.image(region)
        return region

    def sup_deriv(self, region):
        out = 1.0
        for f in reversed(self.maps):
            out *= f.sup_deriv(region)
            region = f.image(region)
        return out

    def __repr__(self):
        return f"Composed({list(self.maps)!r})"


def _circumdisk(p, q, r):
    ax, ay, bx, by, cx, cy = p.real, p.imag, q.real, q.imag, r.real, r.imag
    d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
    ux = ((ax**2 + ay**2) * (by - cy) + (bx**2 + by**2) * (cy - ay) + (cx**2 + cy**2) * (ay - by)) / d
    uy = ((ax**2 + ay**2) * (cx - bx) + (bx**2 + by**2) * (ax - cx) + (cx**2 + cy**2) * (bx - ax)) / d
    center = complex(ux, uy)
    return Disk(center, abs(p - center))


def _num_out(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    return v


def compose_maps(outer, inner):
    """outer o inner, collapsed to a single affine/Moebius map when possible."""
    if isinstance(outer, Affine) and isinstance(inner, Affine):
        return Affine(outer.a * inner.a, outer.a * inner.b + outer.b)
    if isinstance(outer, (Affine, Moebius)) and isinstance(inner, (Affine, Moebius)):
        f = outer.as_moebius() if isinstance(outer, Affine) else outer
        g = inner.as_moebius() if isinstance(inner, Affine) else inner
        return Moebius(
            f.a * g.a + f.b * g.c,
            f.a * g.b + f.b * g.d,
            f.c * g.a + f.d * g.c,
            f.c * g.b + f.d * g.d,
        )
    return Composed([outer, inner])


def map_from_dict(d):
    from .expr import number

    kind = d.get("kind")

    def num(key):
        v = d[key]
        if isinstance(v, (list, tuple)):
            return complex(number(v[0]), number(v[1]))
        return number(v)

    if kind == "affine":
        return Affine(num("a"), num("b"))
    if kind == "moebius_branch":
        return GaussBranch(int(d["n"]))
    if kind == "moebius":
        return Moebius(num("a"), num("b"), num("c"), num("d"))
    if kind == "expression":
        return ExpressionMap(d["expr"])
    raise ValidationError(f"unknown map kind {kind!r}")


# ---------------------------------------------------------------------------
# Systems


@dataclass(frozen=True)
class IFSSystem:
    """Contractions phi_1..phi_N on V (the working truncation of the alphabet).

    ``countable`` marks a truncated infinite system.  For those the tail
    (symbols > N) enters only through ``tail_certified`` and, optionally,
    ``tail_region``, a region containing every tail image phi_j(V), j > N.
    """

    maps: tuple
    V: object
    s: float
    alpha: Optional[float] = None
    H: float = 0.0
    beta: float = 1.0
    countable: bool = False
    tail_certified: bool = False
    tail_region: object = None
    validate: bool = field(default=True, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        if self.alpha is None:
            object.__setattr__(self, "alpha", self.s)
        if self.validate:
            self.check()

    @property
    def N(self):
        return len(self.maps)

    @property
    def dim(self):
        return self.V.dim

    def check(self, samples=65):
        if self.N < 2:
            raise ValidationError("an IFS needs at least two maps (N >= 2)")
        if not 0 < self.s < 1:
            raise ValidationError(f"contraction bound s={self.s} not in (0, 1)")
        if not 0 < self.alpha < 1:
            raise ValidationError(f"derivative bound alpha={self.alpha} not in (0, 1)")
        if not 0 < self.beta <= 1:
            raise ValidationError("BDP exponent beta must lie in (0, 1]")
        pts = self.V.grid(samples if self.dim == 1 else 17)
        for i, f in enumerate(self.maps, 1):
            if f.dim != self.dim:
                raise ValidationError(f"map {i} has dimension {f.dim}, V has {self.dim}")
            if isinstance(f, ExpressionMap):
                f.check_monotone(self.V)
            img = f.image(self.V)
            if not self.V.contains_region(img, tol=1e-9):
                raise ValidationError(f"phi_{i}(V) is not contained in V")
            fx = f(pts)
            num = np.abs(fx[:, None] - fx[None, :])
            den = np.abs(pts[:, None] - pts[None, :])
            if np.any(num > self.s * den * (1 + 1e-9) + 1e-15):
                raise ValidationError(f"phi_{i} violates the contraction bound s={self.s}")
            if f.sup_deriv(self.V) > self.alpha * (1 + 1e-9):
                raise ValidationError(f"sup |phi_{i}'| exceeds alpha={self.alpha}")

    def map(self, i):
        if not 1 <= i <= self.N:
            raise SymbolOutOfAlphabet(f"symbol {i} outside working alphabet 1..{self.N}")
        return self.maps[i - 1]

    def with_maps(self, maps):
        return IFSSystem(tuple(maps), self.V, self.s, self.alpha, self.H, self.beta,
                         self.countable, self.tail_certified, self.tail_region)


def compose_word(sys: IFSSystem, w) -> ConformalMap:
    """phi_{w_0} o phi_{w_1} o ... o phi_{w_{n-1}}."""
    symbols = tuple(w)
    if not symbols:
        raise ValueError("cannot compose the empty word")
    out = sys.map(symbols[-1])
    for a in reversed(symbols[:-1]):
        out = compose_maps(sys.map(a), out)
    return out


def depth_for_tol(sys: IFSSystem, tol: float) -> int:
    diam = sys.V.diam
    if diam <= tol:
        return 1
    return max(1, math.ceil(math.log(tol / diam) / math.log(sys.s)))


def code_point(sys: IFSSystem, omega, tol: float = 1e-12):
    """pi(omega): a point of phi_{omega_0..omega_{n-1}}(V) with diameter <= tol."""
    n = depth_for_tol(sys, tol)
    if omega.depth < n:
        raise ResolutionExceeded(f"code_point needs {n} symbols, sequence resolves {omega.depth}")
    x = sys.V.center
    for a in reversed(omega.prefix(n)):
        x = sys.map(a)(x)
    return x


# vectorized helpers ---------------------------------------------------------


def apply_symbols(sys: IFSSystem, symbols, x):
    """y[k] = phi_{symbols[k]}(x[k])."""
    symbols = np.asarray(symbols)
    x = np.asarray(x)
    out = np.empty(np.broadcast(symbols, x).shape, dtype=complex if sys.dim == 2 else float)
    xb = np.broadcast_to(x, out.shape)
    for i in np.unique(symbols):
        if not 1 <= i <= sys.N:
            raise SymbolOutOfAlphabet(f"symbol {i} outside working alphabet 1..{sys.N}")
        mask = symbols == i
        out[mask] = sys.maps[i - 1](xb[mask])
    return out


def deriv_symbols(sys: IFSSystem, symbols, x):
    symbols = np.asarray(symbols)
    out = np.empty(symbols.shape, dtype=float)
    x = np.broadcast_to(np.asarray(x), symbols.shape)
    for i in np.unique(symbols):
        mask = symbols == i
        out[mask] = sys.maps[i - 1].deriv(x[mask])
    return out


def word_points(sys: IFSSystem, words, x0=None):
    """phi_w(x0) for each row w of a 2-d word array (default x0 = center of V)."""
    words = np.asarray(words)
    x = np.full(words.shape[0], sys.V.center if x0 is None else x0,
                dtype=complex if sys.dim == 2 else float)
    for k in range(words.shape[1] - 1, -1, -1):
        x = apply_symbols(sys, words[:, k], x)
    return x


def periodic_points(sys: IFSSystem, words, tol=1e-13):
    """pi(w w w ...) for each row w: fixed point of phi_w."""
    words = np.asarray(words)
    n = words.shape[1]
    reps = max(1, math.ceil(depth_for_tol(sys, tol) / n))
    x = np.full(words.shape[0], sys.V.center, dtype=complex if sys.dim == 2 else float)
    for _ in range(reps):
        for k in range(n - 1, -1, -1):
            x = apply_symbols(sys, words[:, k], x)
    return x


def periodic_orbits(sys: IFSSystem, words, tol=1e-13):
    """Array X with X[:, k] = pi(sigma^k w^inf) for k = 0..n-1."""
    words = np.asarray(words)
    M, n = words.shape
    X = np.empty((M, n), dtype=complex if sys.dim == 2 else float)
    X[:, 0] = periodic_points(sys, words, tol)
    nxt = X[:, 0]
    for k in range(n - 1, 0, -1):
        nxt = apply_symbols(sys, words[:, k], nxt)
        X[:, k] = nxt
    return X


# ---------------------------------------------------------------------------
# Regularity checks


def check_bdp(sys: IFSSystem, samples: int = 64):
    """Empirical Hoelder constant of log|phi_i'| with exponent sys.beta.

    Returns ``(H_emp, passed)``; passed iff H_emp <= sys.H.
    """
    if samples < 2:
        raise ValueError("need at least two sample points")
    pts = sys.V.grid(samples if sys.dim == 1 else max(3, int(math.sqrt(samples))))
    dist = np.abs(pts[:, None] - pts[None, :]) ** sys.beta
    off = dist > 0
    H_emp = 0.0
    for f in sys.maps:
        ld = np.log(f.deriv(pts))
        diff = np.abs(ld[:, None] - ld[None, :])
        H_emp = max(H_emp, float(np.max(diff[off] / dist[off])))
    return H_emp, H_emp <= sys.H + 1e-12


def check_non_accumulation(sys: IFSSystem, x, sep_tol: float = 1e-9) -> bool:
    """phi_i(x) are pairwise >= sep_tol apart (and away from the certified tail)."""
    imgs = np.array([f(x) for f in sys.maps])
    gaps = np.abs(imgs[:, None] - imgs[None, :])
    np.fill_diagonal(gaps, np.inf)
    if gaps.min() < sep_tol:
        return False
    if sys.countable:
        if not sys.tail_certified:
            return False
        if sys.tail_region is not None:
            return all(sys.tail_region.distance_to(y) >= sep_tol for y in imgs)
    return True
