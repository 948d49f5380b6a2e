"""Weights-rate measures on ``(0, inf)``: finitely many atoms or a density.

Every rate supports integration of a function over ``(lo, hi]``, restriction
to ``(lo, inf)``, scaling, pointwise thinning and (when finite) sampling.
"""

import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.integrate import quad

from .exceptions import InfiniteMass, SpecInvalid

QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12
_QUAD_LIMIT = 400
_SAMPLER_CELLS = 8192
_TAIL_RTOL = 1e-14
_GL_NODES, _GL_WEIGHTS = leggauss(12)


def integrate_real(func, lo, hi, points=()):
    """``int_lo^hi func`` by adaptive quadrature, split at ``points`` and at 1."""
    if not lo < hi:
        return 0.0
    cuts = sorted({p for p in (*points, 1.0) if lo < p < hi and math.isfinite(p)})
    knots = [lo, *cuts, hi]
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        val, _ = quad(func, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=_QUAD_LIMIT)
        total += val
    return total


class AtomicRate:
    """``sum_k w_k delta_{x_k}`` with ``x_k > 0`` and ``w_k >= 0``."""

    kind = "atoms"

    def __init__(self, locations=(), weights=()):
        x = np.asarray(locations, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if x.shape != w.shape:
            raise SpecInvalid("rate locations and weights differ in length")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(w))):
            raise SpecInvalid("rate atoms must be finite")
        if np.any(x <= 0):
            raise SpecInvalid("rate atoms must lie in (0, inf)")
        if np.any(w < 0):
            raise SpecInvalid("rate weights must be nonnegative")
        keep = w > 0
        x, w = x[keep], w[keep]
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        if np.any(np.diff(x) == 0):
            raise SpecInvalid("rate atom locations must be distinct")
        self.locations, self.weights = x, w

    def is_finite(self):
        return True

    def is_zero(self):
        return self.weights.size == 0

    def integrable(self):
        return True

    def total_mass(self, lo=0.0, hi=math.inf):
        return self.integrate(lambda x: np.ones_like(x), lo, hi)

    def integrate(self, func, lo=0.0, hi=math.inf):
        """``int_(lo, hi] func d nu`` as an exact sum."""
        sel = (self.locations > lo) & (self.locations <= hi)
        if not np.any(sel):
            return 0.0
        return float(np.asarray(func(self.locations[sel]), dtype=float) @ self.weights[sel])

    def integrate_complex(self, func, lo=0.0, hi=math.inf):
        sel = (self.locations > lo) & (self.locations <= hi)
        if not np.any(sel):
            return 0j
        return complex(np.asarray(func(self.locations[sel]), dtype=complex) @ self.weights[sel])

    def restricted(self, lo):
        """Restriction to ``(lo, inf)``."""
        if self.weights.size == 0 or self.locations[0] > lo:
            return self
        keep = self.locations > lo
        return AtomicRate(self.locations[keep], self.weights[keep])

    def scaled(self, c):
        if c == 1.0:
            return self
        return AtomicRate(self.locations, self.weights * c)

    def thinned(self, factor, descriptor=None):
        return AtomicRate(self.locations, self.weights * np.asarray(factor(self.locations), dtype=float))

    def sample(self, rng, size):
        p = self.weights / self.weights.sum()
        return self.locations[rng.choice(p.size, size=size, p=p)]

    def to_dict(self):
        return {"kind": "atoms", "locations": [float(x) for x in self.locations],
                "weights": [float(w) for w in self.weights]}

    def __eq__(self, other):
        return (isinstance(other, AtomicRate) and np.array_equal(self.locations, other.locations)
                and np.array_equal(self.weights, other.weights))

    def __hash__(self):
        return hash((self.locations.tobytes(), self.weights.tobytes()))

    def __repr__(self):
        return f"AtomicRate(n_atoms={self.weights.size}, total={self.weights.sum():.6g})"


def _ggamma(params):
    c, sigma, beta = float(params["c"]), float(params["sigma"]), float(params["beta"])
    if c < 0 or not sigma < 1 or beta < 0:
        raise SpecInvalid("generalized gamma rate needs c >= 0, sigma < 1, beta >= 0")

    def density(x):
        x = np.asarray(x, dtype=float)
        return c * x ** (-1.0 - sigma) * np.exp(-beta * x)
    return density, ()


def _piecewise(params):
    edges = np.asarray(params["edges"], dtype=float)
    values = np.asarray(params["values"], dtype=float)
    if edges.ndim != 1 or edges.size != values.size + 1 or edges.size < 2:
        raise SpecInvalid("piecewise rate needs len(edges) == len(values) + 1")
    if not np.all(np.isfinite(edges)) or edges[0] < 0 or np.any(np.diff(edges) <= 0):
        raise SpecInvalid("piecewise rate edges must be finite, nonnegative and increasing")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise SpecInvalid("piecewise rate values must be finite and nonnegative")

    def density(x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, values.size - 1)
        inside = (x >= edges[0]) & (x < edges[-1])
        return np.where(inside, values[idx], 0.0)
    return density, tuple(edges)


_FACTOR_BUILDERS = {}


def register_factor(kind, builder):
    """Register ``builder(descriptor) -> callable`` for serialized thinning factors."""
    _FACTOR_BUILDERS[kind] = builder


class DensityRate:
    """``scale * g(x) dx`` on ``(lower, upper)`` for a named density family ``g``.

    Families: ``ggamma`` with ``g(x) = c x**(-1-sigma) exp(-beta x)`` and
    ``piecewise`` with constant values between ``edges``.  :meth:`thinned`
    multiplies by a factor and records a descriptor so the result can be
    serialized.
    """

    kind = "density"

    def __init__(self, family, params, lower=0.0, upper=math.inf, scale=1.0,
                 base=None, factor=None, factor_descriptor=None):
        lower, upper, scale = float(lower), float(upper), float(scale)
        if not (0.0 <= lower < upper) or math.isnan(upper):
            raise SpecInvalid(f"density rate needs 0 <= lower < upper, got {lower}, {upper}")
        if not (math.isfinite(scale) and scale >= 0):
            raise SpecInvalid("density rate scale must be finite and nonnegative")
        self.family = family
        self.params = dict(params)
        self.lower, self.upper, self.scale = lower, upper, scale
        self.base, self.factor, self.factor_descriptor = base, factor, factor_descriptor
        if family == "thinned":
            if base is None or factor is None:
                raise SpecInvalid("thinned rate needs a base rate and a factor")
            self._g = lambda x: base.density(x) * np.asarray(factor(x), dtype=float)
            self._points = base.breakpoints()
        elif family == "ggamma":
            self.params = {k: float(self.params[k]) for k in ("c", "sigma", "beta")}
            self._g, self._points = _ggamma(self.params)
        elif family == "piecewise":
            self._g, self._points = _piecewise(self.params)
        else:
            raise SpecInvalid(f"unknown density family {family!r}")

    @classmethod
    def ggamma(cls, c=1.0, sigma=0.0, beta=1.0, lower=0.0, upper=math.inf):
        return cls("ggamma", {"c": c, "sigma": sigma, "beta": beta}, lower, upper)

    @classmethod
    def piecewise(cls, edges, values):
        return cls("piecewise", {"edges": list(map(float, edges)),
                                 "values": list(map(float, values))}, edges[0], edges[-1])

    def _replace(self, **kw):
        args = dict(family=self.family, params=self.params, lower=self.lower, upper=self.upper,
                    scale=self.scale, base=self.base, factor=self.factor,
                    factor_descriptor=self.factor_descriptor)
        args.update(kw)
        return DensityRate(**args)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x > self.lower) & (x < self.upper)
        safe = np.where(inside, x, 1.0)
        return np.where(inside, self.scale * self._g(safe), 0.0)

    def breakpoints(self):
        return tuple(p for p in self._points if self.lower < p < self.upper)

    def _singular_at_zero(self):
        if self.family == "thinned":
            return self.base._singular_at_zero() and self.lower == 0.0
        return self.family == "ggamma" and self.lower == 0.0 and self.params["sigma"] >= 0

    def _heavy_tail(self):
        if self.family == "thinned":
            return self.base._heavy_tail() and math.isinf(self.upper)
        return (self.family == "ggamma" and math.isinf(self.upper)
                and self.params["beta"] == 0 and self.params["sigma"] <= 0)

    def is_zero(self):
        return self.scale == 0.0 or (self.family == "ggamma" and self.params["c"] == 0.0)

    def is_finite(self):
        return self.is_zero() or not (self._singular_at_zero() or self._heavy_tail())

    def integrable(self):
        """Whether ``int (1 ^ x) nu(dx)`` is finite."""
        return self.is_zero() or not self._heavy_tail()

    def total_mass(self, lo=0.0, hi=math.inf):
        lo, hi = max(lo, self.lower), min(hi, self.upper)
        if self.is_zero() or not lo < hi:
            return 0.0
        if lo == 0.0 and self._singular_at_zero() or math.isinf(hi) and self._heavy_tail():
            return math.inf
        return self.integrate(lambda x: np.ones_like(x), lo, hi)

    def integrate(self, func, lo=0.0, hi=math.inf):
        """``int_(lo, hi] func(x) nu(dx)`` by adaptive quadrature."""
        lo, hi = max(lo, self.lower), min(hi, self.upper)
        if self.is_zero() or not lo < hi:
            return 0.0

        def integrand(x):
            return float(func(np.float64(x))) * float(self.density(x))
        return integrate_real(integrand, lo, hi, self.breakpoints())

    def integrate_complex(self, func, lo=0.0, hi=math.inf):
        re = self.integrate(lambda x: np.real(func(x)), lo, hi)
        im = self.integrate(lambda x: np.imag(func(x)), lo, hi)
        return complex(re, im)

    def restricted(self, lo):
        if lo <= self.lower:
            return self
        if lo >= self.upper:
            return AtomicRate()
        return self._replace(lower=lo)

    def scaled(self, c):
        if c == 1.0:
            return self
        return self._replace(scale=self.scale * c)

    def thinned(self, factor, descriptor=None):
        return DensityRate("thinned", {}, self.lower, self.upper, 1.0,
                           base=self, factor=factor, factor_descriptor=descriptor)

    def _effective_upper(self, total):
        if math.isfinite(self.upper):
            return self.upper
        x = max(2.0 * self.lower, 1.0, *self.breakpoints())
        while self.total_mass(x) > _TAIL_RTOL * total:
            x *= 2.0
        return x

    def _sampler_table(self):
        table = getattr(self, "_table", None)
        if table is not None:
            return table
        total = self.total_mass()
        top = self._effective_upper(total)
        grid = (np.geomspace(self.lower, top, _SAMPLER_CELLS + 1) if self.lower > 0
                else np.linspace(0.0, top, _SAMPLER_CELLS + 1))
        grid = np.unique(np.concatenate([grid, self.breakpoints()]))
        a, b = grid[:-1], grid[1:]
        half = 0.5 * (b - a)
        nodes = (a + half)[:, None] + half[:, None] * _GL_NODES[None, :]
        mass = (self.density(nodes) * _GL_WEIGHTS[None, :]).sum(axis=1) * half
        table = (a, b, np.cumsum(mass))
        self._table = table
        return table

    def sample(self, rng, size):
        """Draw from ``nu / nu(R+)`` via a tabulated inverse CDF."""
        if not self.is_finite():
            raise InfiniteMass("cannot sample from an infinite weights rate; truncate first")
        a, b, cum = self._sampler_table()
        u = rng.random(size) * cum[-1]
        k = np.minimum(np.searchsorted(cum, u, side="right"), cum.size - 1)
        prev = np.where(k > 0, cum[np.maximum(k - 1, 0)], 0.0)
        cell = cum[k] - prev
        frac = np.where(cell > 0, (u - prev) / np.where(cell > 0, cell, 1.0), 0.5)
        return a[k] + (b[k] - a[k]) * np.clip(frac, 0.0, 1.0)

    def to_dict(self):
        d = {"kind": "density", "family": self.family, "lower": self.lower,
             "upper": None if math.isinf(self.upper) else self.upper, "scale": self.scale}
        if self.family == "thinned":
            d["base"] = self.base.to_dict()
            d["factor"] = self.factor_descriptor
        else:
            d["params"] = self.params
        return d

    def __eq__(self, other):
        return isinstance(other, DensityRate) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))

    def __repr__(self):
        return f"DensityRate({self.family!r}, lower={self.lower!r}, upper={self.upper!r}, scale={self.scale!r})"


def rate_from_dict(data):
    kind = data.get("kind")
    if kind == "atoms":
        return AtomicRate(data.get("locations", []), data.get("weights", []))
    if kind != "density":
        raise SpecInvalid(f"unknown rate kind {kind!r}")
    upper = math.inf if data.get("upper") is None else float(data["upper"])
    lower, scale = float(data.get("lower", 0.0)), float(data.get("scale", 1.0))
    family = data.get("family")
    if family == "thinned":
        desc = data.get("factor") or {}
        builder = _FACTOR_BUILDERS.get(desc.get("kind"))
        if builder is None:
            raise SpecInvalid(f"unknown thinning factor {desc!r}")
        base = rate_from_dict(data["base"])
        return DensityRate("thinned", {}, lower, upper, scale, base=base,
                           factor=builder(desc), factor_descriptor=desc)
    return DensityRate(family, data.get("params", {}), lower, upper, scale)
