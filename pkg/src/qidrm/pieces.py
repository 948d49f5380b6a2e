"""Finite interval unions and piecewise-constant functions on the real line."""

import numpy as np

from .exceptions import SpecInvalid


class IntervalSet:
    """Finite union of bounded closed intervals ``[a, b]``, merged and sorted."""

    __slots__ = ("bounds",)

    def __init__(self, intervals=()):
        arr = np.asarray(list(intervals), dtype=float).reshape(-1, 2)
        if not np.all(np.isfinite(arr)):
            raise SpecInvalid("interval endpoints must be finite")
        if np.any(arr[:, 0] > arr[:, 1]):
            raise SpecInvalid("interval endpoints must be ordered")
        arr = arr[np.argsort(arr[:, 0], kind="stable")]
        merged = []
        for a, b in arr:
            if merged and a <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b])
        self.bounds = np.asarray(merged, dtype=float).reshape(-1, 2)

    def contains(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.bounds[:, 0], x, side="right") - 1
        ok = idx >= 0
        hi = self.bounds[np.maximum(idx, 0), 1] if self.bounds.size else np.zeros_like(x)
        return ok & (x <= hi)

    def intersect(self, lo, hi):
        """Intersection with ``[lo, hi]`` (infinite ends allowed)."""
        b = self.bounds.copy()
        b[:, 0] = np.maximum(b[:, 0], lo)
        b[:, 1] = np.minimum(b[:, 1], hi)
        return IntervalSet(b[b[:, 0] < b[:, 1]])

    def intersect_set(self, other):
        out = [(max(a, c), min(b, d)) for a, b in self.bounds for c, d in other.bounds
               if max(a, c) < min(b, d)]
        return IntervalSet(out)

    def length(self):
        return float((self.bounds[:, 1] - self.bounds[:, 0]).sum())

    def edges(self):
        return self.bounds.ravel()

    def is_empty(self):
        return self.bounds.shape[0] == 0

    def to_list(self):
        return [[float(a), float(b)] for a, b in self.bounds]

    def __eq__(self, other):
        return isinstance(other, IntervalSet) and np.array_equal(self.bounds, other.bounds)

    def __hash__(self):
        return hash(self.bounds.tobytes())

    def __repr__(self):
        return f"IntervalSet({self.to_list()})"


class Pieces:
    """Nonnegative piecewise-constant function ``sum_i v_i 1[a_i, b_i)``.

    Used both for test functions ``f`` and for densities of finite diffuse
    measures (drift measure, location law).  Pieces must not overlap.
    """

    __slots__ = ("a", "b", "v")

    def __init__(self, pieces=()):
        arr = np.asarray(list(pieces), dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(arr)):
            raise SpecInvalid("piece endpoints and values must be finite")
        if np.any(arr[:, 0] >= arr[:, 1]):
            raise SpecInvalid("each piece needs a < b")
        if np.any(arr[:, 2] < 0):
            raise SpecInvalid("piece values must be nonnegative")
        arr = arr[arr[:, 2] > 0]
        arr = arr[np.argsort(arr[:, 0], kind="stable")]
        if np.any(arr[1:, 0] < arr[:-1, 1]):
            raise SpecInvalid("pieces overlap")
        self.a, self.b, self.v = arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy()

    @classmethod
    def constant(cls, value, intervals):
        return cls([(a, b, value) for a, b in IntervalSet(intervals).bounds if a < b])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.a.size == 0:
            return np.zeros_like(x)
        idx = np.searchsorted(self.a, x, side="right") - 1
        safe = np.maximum(idx, 0)
        return np.where((idx >= 0) & (x < self.b[safe]), self.v[safe], 0.0)

    def total(self):
        return float(((self.b - self.a) * self.v).sum())

    def mass(self, region):
        """Integral over an :class:`IntervalSet`."""
        return self.restrict(region).total()

    def restrict(self, region):
        out = []
        for a, b, v in zip(self.a, self.b, self.v):
            for c, d in region.bounds:
                lo, hi = max(a, c), min(b, d)
                if lo < hi:
                    out.append((lo, hi, v))
        return Pieces(out)

    def scaled(self, c):
        return Pieces(np.column_stack([self.a, self.b, self.v * c]))

    def support(self):
        return IntervalSet(np.column_stack([self.a, self.b]))

    def edges(self):
        return np.concatenate([self.a, self.b])

    def sup(self):
        return float(self.v.max()) if self.v.size else 0.0

    def is_zero(self):
        return self.a.size == 0

    def sample(self, rng, size):
        """Draw from the normalized density."""
        mass = (self.b - self.a) * self.v
        k = rng.choice(mass.size, size=size, p=mass / mass.sum())
        return self.a[k] + (self.b[k] - self.a[k]) * rng.random(size)

    def to_list(self):
        return [[float(a), float(b), float(v)] for a, b, v in zip(self.a, self.b, self.v)]

    def __eq__(self, other):
        return (isinstance(other, Pieces) and np.array_equal(self.a, other.a)
                and np.array_equal(self.b, other.b) and np.array_equal(self.v, other.v))

    def __hash__(self):
        return hash((self.a.tobytes(), self.b.tobytes(), self.v.tobytes()))

    def __repr__(self):
        return f"Pieces({self.to_list()})"


def joint_cells(f, density, region=None):
    """Cells on which ``f`` and ``density`` are both constant.

    Returns ``(f_values, masses)`` where ``masses`` are the integrals of
    ``density`` over each cell (intersected with ``region`` if given).
    """
    edges = [f.edges(), density.edges()]
    if region is not None:
        edges.append(region.edges())
    e = np.unique(np.concatenate(edges))
    if e.size < 2:
        return np.zeros(0), np.zeros(0)
    mid = 0.5 * (e[:-1] + e[1:])
    mass = density(mid) * np.diff(e)
    if region is not None:
        mass = mass * region.contains(mid)
    keep = mass > 0
    return f(mid)[keep], mass[keep]
