"""Levy distance between distributions on the real line with finite support."""

import numpy as np

from ._validation import check_positive, check_weights

_MASS_ATOL = 1e-12


class StepCdf:
    """Distribution function of a finitely supported law.

    Parameters
    ----------
    locations : array-like of float
        Atom locations. Duplicates are merged and the atoms sorted.
    masses : array-like of float
        Strictly positive masses summing to one within 1e-12.
    """

    __slots__ = ("locations", "masses", "_cum")

    def __init__(self, locations, masses):
        x = check_weights(locations, "locations")
        p = check_weights(masses, "masses")
        if x.shape != p.shape:
            raise ValueError("locations and masses must have the same length")
        if x.size == 0:
            raise ValueError("a distribution needs at least one atom")
        if np.any(p <= 0):
            raise ValueError("masses must be strictly positive")
        if abs(p.sum() - 1.0) > _MASS_ATOL:
            raise ValueError(f"masses must sum to 1, got {p.sum()!r}")
        x, inverse = np.unique(x, return_inverse=True)
        p = np.bincount(inverse, weights=p)
        self.locations = x
        self.masses = p
        self._cum = np.cumsum(p)

    @classmethod
    def from_measure(cls, m, atol=0.0):
        """Build from a lattice measure or pmf, dropping atoms with mass ``<= atol``."""
        w = np.asarray(m.weights, dtype=float)
        keep = w > atol
        p = w[keep]
        return cls(np.asarray(m.locations)[keep], p / p.sum())

    @classmethod
    def point_mass(cls, x):
        return cls([x], [1.0])

    def __call__(self, x):
        """``F(x) = P(X <= x)``, vectorized."""
        idx = np.searchsorted(self.locations, x, side="right")
        return np.where(idx > 0, self._cum[np.maximum(idx - 1, 0)], 0.0)

    def scaled(self, c):
        """Law of ``c * X`` for ``c > 0``."""
        check_positive(c, "c")
        return StepCdf(self.locations * c, self.masses)

    def to_dict(self):
        return {"atoms": [[float(x), float(p)] for x, p in zip(self.locations, self.masses)]}

    @classmethod
    def from_dict(cls, data):
        atoms = np.asarray(data["atoms"], dtype=float).reshape(-1, 2)
        return cls(atoms[:, 0], atoms[:, 1])

    def __repr__(self):
        return f"StepCdf(n_atoms={self.locations.size})"


def _cum_at(locations, cum, x):
    """Mass of the atoms at ``locations`` that are ``<= x``."""
    idx = np.searchsorted(locations, x, side="right")
    return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)


def _one_sided(F, G, eps):
    """``F(y) - eps <= G(y + eps)`` for every ``y``.

    ``G(y + eps)`` is counted against the shifted atoms ``b - eps`` rather
    than evaluated at ``y + eps``; the two agree in exact arithmetic, but
    only the former keeps the breakpoints consistent in floating point.
    """
    shifted = G.locations - eps
    y = np.concatenate([F.locations, shifted])
    return not np.any(F(y) - _cum_at(shifted, G._cum, y) > eps)


def levy_feasible(F, G, eps):
    """Whether ``F(x - eps) - eps <= G(x) <= F(x + eps) + eps`` for every real ``x``.

    Both inequalities compare right-continuous step functions, so it is
    enough to check them at the finitely many breakpoints: the atoms of one
    law and the atoms of the other shifted by ``eps``.
    """
    check_positive(eps, "eps", allow_zero=True)
    if eps >= 1.0:
        return True
    return _one_sided(F, G, eps) and _one_sided(G, F, eps)


def levy_distance(F, G, tol=1e-9):
    """Levy distance ``rho(F, G)`` to within ``tol``, by bisection on ``[0, 1]``.

    The returned value is feasible (an upper bound of the infimum) and lies
    within ``tol`` of it.
    """
    check_positive(tol, "tol")
    if levy_feasible(F, G, 0.0):
        return 0.0
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if levy_feasible(F, G, mid):
            hi = mid
        else:
            lo = mid
    return hi
