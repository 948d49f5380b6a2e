"""Finite signed measures on a one-dimensional lattice.

A :class:`LatticeSignedMeasure` puts weight ``weights[i]`` on the point
``origin + (min_index + i) * step``.  Values are immutable; every operation
returns a new measure.
"""

from math import ceil, lgamma, log, log2
from typing import NamedTuple

import numpy as np
from scipy.signal import fftconvolve

from ._validation import check_positive, check_weights
from .exceptions import MismatchedLattice

_LATTICE_RTOL = 1e-9
# sizes above which internal convolutions switch to FFT
_FFT_MIN_LEN = 64
_FFT_MIN_WORK = 200_000
_EPS = np.finfo(float).eps


class LatticeSignedMeasure:
    """Finite signed measure on the lattice ``{origin + k * step}``.

    Exact zeros at either end of ``weights`` are trimmed on construction
    (``min_index`` moves accordingly), so two measures with the same atoms
    compare equal.

    Parameters
    ----------
    weights : array-like of float
        Masses on consecutive lattice points.
    min_index : int, default=0
        Lattice index of ``weights[0]``.
    origin : float, default=0.0
        Location of lattice index 0.
    step : float, default=1.0
        Lattice spacing, strictly positive.
    """

    __slots__ = ("origin", "step", "min_index", "weights")

    def __init__(self, weights=(), min_index=0, origin=0.0, step=1.0):
        w = check_weights(weights)
        step = check_positive(step, "step")
        nz = np.flatnonzero(w)
        if nz.size == 0:
            w = np.zeros(0)
            min_index = 0
        else:
            min_index = int(min_index) + int(nz[0])
            w = w[nz[0]:nz[-1] + 1]
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "origin", float(origin))
        object.__setattr__(self, "step", step)
        object.__setattr__(self, "min_index", int(min_index))
        object.__setattr__(self, "weights", w)

    def __setattr__(self, name, value):
        raise AttributeError("LatticeSignedMeasure is immutable")

    # construction helpers

    @classmethod
    def from_mapping(cls, mapping, origin=0.0, step=1.0):
        """Build from ``{lattice_index: weight}``."""
        if not mapping:
            return cls((), 0, origin, step)
        lo, hi = min(mapping), max(mapping)
        w = np.zeros(hi - lo + 1)
        for k, v in mapping.items():
            w[k - lo] += v
        return cls(w, lo, origin, step)

    @classmethod
    def delta(cls, index=0, mass=1.0, origin=0.0, step=1.0):
        return cls([mass], index, origin, step)

    @classmethod
    def zero(cls, origin=0.0, step=1.0):
        return cls((), 0, origin, step)

    @classmethod
    def from_dict(cls, data):
        return cls(
            data.get("weights", []),
            data.get("min_index", 0),
            data.get("origin", 0.0),
            data.get("step", 1.0),
        )

    def to_dict(self):
        return {
            "origin": self.origin,
            "step": self.step,
            "min_index": self.min_index,
            "weights": [float(x) for x in self.weights],
        }

    # views

    @property
    def indices(self):
        return np.arange(self.min_index, self.min_index + self.weights.size)

    @property
    def locations(self):
        return self.origin + self.indices * self.step

    @property
    def max_index(self):
        return self.min_index + self.weights.size - 1

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def is_zero(self):
        return self.weights.size == 0

    def as_mapping(self):
        return {int(k): float(v) for k, v in zip(self.indices, self.weights) if v != 0}

    def weight_at(self, index):
        i = index - self.min_index
        if 0 <= i < self.weights.size:
            return float(self.weights[i])
        return 0.0

    def rebased(self, origin):
        """Same measure expressed against a compatible ``origin``."""
        k = _index_offset(origin, self.origin, self.step)
        return LatticeSignedMeasure(self.weights, self.min_index + k, origin, self.step)

    def shifted(self, k):
        """Translate by ``k`` lattice steps."""
        return LatticeSignedMeasure(self.weights, self.min_index + k, self.origin, self.step)

    # arithmetic

    def __neg__(self):
        return LatticeSignedMeasure(-self.weights, self.min_index, self.origin, self.step)

    def __mul__(self, scalar):
        return LatticeSignedMeasure(self.weights * float(scalar), self.min_index, self.origin, self.step)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __add__(self, other):
        if not isinstance(other, LatticeSignedMeasure):
            return NotImplemented
        _check_same_step(self, other)
        if other.is_zero():
            return self
        if self.is_zero():
            return other.rebased(self.origin)
        other = other.rebased(self.origin)
        lo = min(self.min_index, other.min_index)
        hi = max(self.max_index, other.max_index)
        w = np.zeros(hi - lo + 1)
        w[self.min_index - lo:self.max_index - lo + 1] += self.weights
        w[other.min_index - lo:other.max_index - lo + 1] += other.weights
        return LatticeSignedMeasure(w, lo, self.origin, self.step)

    def __sub__(self, other):
        if not isinstance(other, LatticeSignedMeasure):
            return NotImplemented
        return self + (-other)

    def __eq__(self, other):
        if not isinstance(other, LatticeSignedMeasure):
            return NotImplemented
        if self.is_zero() or other.is_zero():
            return self.is_zero() and other.is_zero()
        if self.step != other.step or self.weights.size != other.weights.size:
            return False
        try:
            other = other.rebased(self.origin)
        except MismatchedLattice:
            return False
        return self.min_index == other.min_index and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.step, tuple(self.locations.round(12)), tuple(self.weights)))

    def __repr__(self):
        return (f"LatticeSignedMeasure(origin={self.origin!r}, step={self.step!r}, "
                f"min_index={self.min_index}, weights={np.array2string(self.weights, precision=6)})")


class MeasureCheck(NamedTuple):
    """Result of :func:`is_measure`; ``index``/``weight`` locate the most negative atom."""

    ok: bool
    index: int | None
    weight: float | None

    def __bool__(self):
        return self.ok


def _index_offset(origin_a, origin_b, step):
    """Integer ``k`` with ``origin_b == origin_a + k * step``."""
    ratio = (origin_b - origin_a) / step
    k = round(ratio)
    if abs(ratio - k) > _LATTICE_RTOL * max(1.0, abs(ratio)):
        raise MismatchedLattice(
            f"origins {origin_a!r} and {origin_b!r} differ by a non-multiple of step {step!r}")
    return int(k)


def _check_same_step(a, b):
    if abs(a.step - b.step) > 1e-12 * max(a.step, b.step):
        raise MismatchedLattice(f"steps differ: {a.step!r} vs {b.step!r}")


def total_variation(m):
    """Total variation ``sum |w_i|`` of a lattice signed measure."""
    return float(np.abs(m.weights).sum())


def jordan_decompose(m):
    """Split ``m`` into its positive and negative parts, ``m = p - n``."""
    pos = LatticeSignedMeasure(np.maximum(m.weights, 0.0), m.min_index, m.origin, m.step)
    neg = LatticeSignedMeasure(np.maximum(-m.weights, 0.0), m.min_index, m.origin, m.step)
    return pos, neg


def convolve(a, b):
    """Exact discrete convolution of two measures with the same step."""
    _check_same_step(a, b)
    origin = a.origin + b.origin
    if a.is_zero() or b.is_zero():
        return LatticeSignedMeasure.zero(origin, a.step)
    w = np.convolve(a.weights, b.weights)
    return LatticeSignedMeasure(w, a.min_index + b.min_index, origin, a.step)


def is_measure(m, tol=0.0):
    """Check that every weight of ``m`` is ``>= -tol``.

    Returns a :class:`MeasureCheck`; on failure it carries the lattice index
    and weight of the most negative atom.
    """
    check_positive(tol, "tol", allow_zero=True)
    if m.is_zero():
        return MeasureCheck(True, None, None)
    i = int(np.argmin(m.weights))
    w = float(m.weights[i])
    if w >= -tol:
        return MeasureCheck(True, None, None)
    return MeasureCheck(False, m.min_index + i, w)


def _fast_convolve(x, y):
    if min(x.size, y.size) >= _FFT_MIN_LEN and x.size * y.size >= _FFT_MIN_WORK:
        return fftconvolve(x, y)
    return np.convolve(x, y)


def _trim_noise(w, floor):
    """Drop end entries not exceeding ``floor``, the rounding level of the convolution that made ``w``.

    Returns ``(trimmed, offset)`` like :func:`_trim_tails`.
    """
    big = np.flatnonzero(np.abs(w) > floor)
    if big.size == 0:
        return w[:0], 0
    return w[big[0]:big[-1] + 1], int(big[0])


def _trim_tails(w, budget):
    """Drop end entries whose absolute mass sums to at most ``budget`` per side.

    Returns ``(trimmed, offset)`` where ``offset`` counts entries removed on the left.
    """
    if w.size == 0 or budget <= 0:
        return w, 0
    a = np.abs(w)
    left = np.cumsum(a)
    lo = int(np.searchsorted(left, budget, side="right"))
    right = np.cumsum(a[::-1])
    hi = w.size - int(np.searchsorted(right, budget, side="right"))
    if lo >= hi:
        return w[:0], 0
    return w[lo:hi], lo


def series_length(tv, eps):
    """Smallest ``N`` with ``tv**(N+1) / (N+1)! * exp(tv) < eps``."""
    if tv == 0.0:
        return 0
    log_eps = log(eps)
    n = 0
    while (n + 1) * log(tv) - lgamma(n + 2) + tv >= log_eps:
        n += 1
    return n


def conv_exp(nu, eps_series=1e-12):
    """Convolution exponential ``sum_{n>=0} nu^{*n} / n!`` with ``nu^{*0} = delta_0``.

    The exponent is scaled by ``2**-s`` until its total variation is at most
    1/2, the scaled series is summed up to the factorial tail bound, and the
    result is squared ``s`` times (``exp(nu) = exp(nu / 2**s)^{*2**s}``).  The
    per-stage budget is shrunk by ``2**-s * exp(-tv)`` so the omitted total
    variation of the final result stays below ``eps_series``; for small
    exponents (``s = 0``) this is the plain truncated series.

    ``nu`` must live on a lattice containing 0 (``origin`` a multiple of ``step``).
    """
    check_positive(eps_series, "eps_series")
    step = nu.step
    if nu.is_zero():
        return LatticeSignedMeasure.delta(0, 1.0, 0.0, step)
    nu = nu.rebased(0.0)
    tv = total_variation(nu)
    squarings = max(0, ceil(log2(tv / 0.5))) if tv > 0.5 else 0
    scale = 2.0 ** -squarings
    tv_s = tv * scale
    if squarings == 0:
        budget = eps_series
    else:
        budget = max(eps_series * scale * np.exp(-tv * (1.0 - scale)), 1e-300)
    n_terms = series_length(tv_s, budget)
    trim = budget / (2.0 * (n_terms + squarings + 1))

    base = nu.weights * scale
    base_lo = nu.min_index
    total = np.ones(1)
    total_lo = 0
    term = np.ones(1)
    term_lo = 0
    base_tv = np.abs(base).sum()
    for n in range(1, n_terms + 1):
        floor = _EPS * np.abs(term).sum() * base_tv / n
        term = _fast_convolve(term, base) / n
        term_lo += base_lo
        term, off = _trim_noise(term, floor)
        term_lo += off
        term, off = _trim_tails(term, trim)
        term_lo += off
        if term.size == 0:
            break
        total, total_lo = _add_arrays(total, total_lo, term, term_lo)
    for _ in range(squarings):
        floor = _EPS * np.abs(total).sum() ** 2
        total = _fast_convolve(total, total)
        total_lo *= 2
        total, off = _trim_noise(total, floor)
        total_lo += off
        total, off = _trim_tails(total, trim)
        total_lo += off
    return LatticeSignedMeasure(total, total_lo, 0.0, step)


def _add_arrays(a, a_lo, b, b_lo):
    lo = min(a_lo, b_lo)
    hi = max(a_lo + a.size, b_lo + b.size)
    out = np.zeros(hi - lo)
    out[a_lo - lo:a_lo - lo + a.size] += a
    out[b_lo - lo:b_lo - lo + b.size] += b
    return out, lo
