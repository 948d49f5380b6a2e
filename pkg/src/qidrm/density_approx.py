"""Lattice discretization of laws on intervals and QID approximation.

A law ``mu`` on an interval is first pushed onto the finite lattice
``b_j``, ``j = 0..2n**2`` (masses of the cells ``(b_{j-1}, b_j]`` with the two
tails lumped onto the end points).  The discretized pmf is then moved to a
nearby QID law by shifting every root of its polynomial by a small real
``h``, which pulls roots off the unit circle.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import comb

from ._validation import check_int, check_positive, check_weights
from .exceptions import DegenerateInput, InvalidInterval, PerturbationFailed
from .levy_metric import StepCdf, levy_distance
from .qid_lattice import QID, FinitePmf, classify_qid, pmf_to_polynomial

_CDF_ATOL = 1e-12


class CdfEvaluator:
    """Distribution function ``x -> mu((-inf, x])`` with sanity checks.

    Parameters
    ----------
    func : callable
        Maps an array of reals to CDF values; scalar-only callables are
        vectorized automatically.
    name : str, optional
        Label used in diagnostics.
    """

    def __init__(self, func, name=None):
        if not callable(func):
            raise TypeError("cdf must be callable")
        self.func = func
        self.name = name or getattr(func, "__name__", "cdf")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        try:
            y = np.asarray(self.func(x), dtype=float)
            if y.shape != x.shape:
                raise ValueError
        except (TypeError, ValueError):
            y = np.vectorize(lambda t: float(self.func(float(t))), otypes=[float])(x)
        return y

    def evaluate_sorted(self, x):
        """Evaluate at increasing points, checking range and monotonicity."""
        y = self(x)
        if np.any(~np.isfinite(y)) or np.any(y < -_CDF_ATOL) or np.any(y > 1 + _CDF_ATOL):
            raise ValueError(f"{self.name} returned values outside [0, 1]")
        if np.any(np.diff(y) < -_CDF_ATOL):
            i = int(np.argmin(np.diff(y)))
            raise ValueError(f"{self.name} decreases between {x[i]!r} and {x[i + 1]!r}")
        return np.clip(np.maximum.accumulate(y), 0.0, 1.0)

    def __repr__(self):
        return f"CdfEvaluator({self.name!r})"


def _discrete_cdf(locations, masses):
    loc = np.asarray(locations, dtype=float)
    cum = np.cumsum(masses)

    def cdf(x):
        idx = np.searchsorted(loc, x, side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)
    return cdf


BUILTIN_CDFS = {
    "uniform01": (lambda x: np.clip(x, 0.0, 1.0), "[0,1]"),
    "exp1": (lambda x: -np.expm1(-np.maximum(x, 0.0)), "[0,inf)"),
    "discrete3": (_discrete_cdf([0.2, 0.5, 0.9], [0.3, 0.5, 0.2]), "[0,1]"),
    "halfnormal": (lambda x: stats.halfnorm.cdf(np.maximum(x, 0.0)), "[0,inf)"),
}


def builtin_cdf(name):
    """Named distribution function together with its natural interval."""
    try:
        func, interval = BUILTIN_CDFS[name]
    except KeyError:
        raise ValueError(f"unknown builtin cdf {name!r}; choose from {sorted(BUILTIN_CDFS)}") from None
    return CdfEvaluator(func, name), IntervalSpec.parse(interval)


def point_mass_cdf(x0):
    return CdfEvaluator(lambda x: (np.asarray(x) >= x0).astype(float), f"delta({x0})")


def cdf_from_atoms(locations, masses):
    """Distribution function of a finitely supported law."""
    order = np.argsort(locations)
    loc = np.asarray(locations, dtype=float)[order]
    mass = np.asarray(masses, dtype=float)[order]
    return CdfEvaluator(_discrete_cdf(loc, mass), "atoms")


@dataclass(frozen=True)
class IntervalSpec:
    """Interval with optional infinite ends and open/closed flags."""

    lower: float
    upper: float
    lower_closed: bool = True
    upper_closed: bool = True

    def __post_init__(self):
        lo, hi = float(self.lower), float(self.upper)
        if math.isnan(lo) or math.isnan(hi):
            raise InvalidInterval("interval endpoints must not be NaN")
        if not lo < hi:
            raise InvalidInterval(f"endpoints must satisfy lower < upper, got {lo!r}, {hi!r}")
        if math.isinf(lo) and math.isinf(hi):
            raise InvalidInterval("at least one endpoint must be finite")
        if (math.isinf(lo) and self.lower_closed) or (math.isinf(hi) and self.upper_closed):
            raise InvalidInterval("infinite endpoints must be open")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def closed(cls, k, c):
        return cls(k, c, True, True)

    @classmethod
    def open(cls, k, c):
        return cls(k, c, False, False)

    @classmethod
    def parse(cls, text):
        """Parse notation such as ``[0,1]``, ``(0,1)``, ``[0,inf)`` or ``(-inf,2]``."""
        s = text.strip()
        if len(s) < 5 or s[0] not in "[(" or s[-1] not in "])" or s.count(",") != 1:
            raise InvalidInterval(f"cannot parse interval {text!r}")
        lo_txt, hi_txt = s[1:-1].split(",")
        try:
            lo, hi = float(lo_txt), float(hi_txt)
        except ValueError:
            raise InvalidInterval(f"cannot parse interval {text!r}") from None
        return cls(lo, hi, s[0] == "[", s[-1] == "]")

    @property
    def kind(self):
        if math.isinf(self.upper):
            return "right-unbounded"
        if math.isinf(self.lower):
            return "left-unbounded"
        if self.lower_closed and self.upper_closed:
            return "closed"
        return "open" if not (self.lower_closed or self.upper_closed) else "half-open"

    def __str__(self):
        def fmt(v):
            return repr(v) if math.isfinite(v) else ("-inf" if v < 0 else "inf")
        return (("[" if self.lower_closed else "(") + fmt(self.lower) + "," + fmt(self.upper)
                + ("]" if self.upper_closed else ")"))


def lattice_points(interval, n):
    """The ``2n**2 + 1`` points ``b_0 < ... < b_{2n**2}`` used for ``interval``."""
    n = check_int(n, "n", minimum=1)
    m = 2 * n * n
    j = np.arange(m + 1)
    lo, hi = interval.lower, interval.upper
    if math.isinf(hi):
        start = lo if interval.lower_closed else lo + 1.0 / n
        return start + j / n
    if math.isinf(lo):
        end = hi if interval.upper_closed else hi - 1.0 / n
        return end - (m - j) / n
    shrink = (hi - lo) / m
    if not interval.lower_closed:
        lo += shrink
    if not interval.upper_closed:
        hi -= shrink
    if not hi > lo:
        raise InvalidInterval(f"{interval} shrinks to a point at n={n}; use n >= 2")
    return lo + (hi - lo) * j / m


def discretize(cdf, interval, n):
    """Push ``mu`` onto the lattice of :func:`lattice_points`.

    ``b_0`` receives ``mu((-inf, b_0])``, ``b_j`` receives ``mu((b_{j-1}, b_j])``
    and the last point receives ``mu((b_{2n**2-1}, inf))``, so the masses sum
    to one whatever the support of ``mu``.
    """
    if not isinstance(cdf, CdfEvaluator):
        cdf = CdfEvaluator(cdf)
    b = lattice_points(interval, n)
    F = cdf.evaluate_sorted(b[:-1])
    masses = np.diff(np.concatenate([[0.0], F, [1.0]]))
    step = b[1] - b[0]
    return FinitePmf(np.maximum(masses, 0.0), b[0], step, normalize=True)


def zplus_truncate(law, n):
    """Restrict a law on ``{0, 1, 2, ...}`` to ``{0, ..., 2n}`` and renormalize.

    ``law`` is either a weight sequence (index = value) or a callable ``j -> P(j)``.
    """
    n = check_int(n, "n", minimum=1)
    top = 2 * n
    if callable(law):
        w = np.array([float(law(j)) for j in range(top + 1)])
    else:
        w = check_weights(law, "law")[:top + 1]
    if np.any(w < 0):
        raise ValueError("probabilities must be nonnegative")
    if not w.sum() > 0:
        raise DegenerateInput(f"no mass on {{0, ..., {top}}}")
    return FinitePmf(w, 0.0, 1.0, normalize=True)


def taylor_shift(coeffs, h):
    """Ascending coefficients of ``p(w - h)``: every root of ``p`` moved by ``+h``."""
    a = np.asarray(coeffs, dtype=float)
    j = np.arange(a.size)
    power = np.subtract.outer(j, j)
    weights = np.where(power >= 0, comb(j[:, None], j[None, :]), 0.0)
    with np.errstate(invalid="ignore"):
        weights = weights * np.where(power >= 0, (-h) ** np.maximum(power, 0), 0.0)
    return a @ weights


@dataclass(frozen=True)
class Perturbation:
    """Outcome of :func:`perturb_to_qid`; unpacks as ``(pmf, h)``."""

    pmf: FinitePmf
    h: float
    circle_distance: float

    def __iter__(self):
        return iter((self.pmf, self.h))


def perturb_to_qid(pmf, h0=1e-2, t_max=40, eps_circle=1e-9):
    """Nearby QID pmf on the same lattice obtained by shifting roots.

    For ``h = h0 * 2**-t``, ``t = 0..t_max``, the polynomial ``p(w - h)``
    (the original roots moved right by ``h``) is tried; the first shift with
    strictly positive coefficients and no root within ``eps_circle`` of the
    unit circle is renormalized and returned.  An already QID pmf is returned
    unchanged with ``h = 0``.

    Raises
    ------
    PerturbationFailed
        If no shift in the schedule qualifies; ``distances`` lists
        ``(h, nearest circle distance or None)`` per attempt.
    """
    check_positive(h0, "h0")
    t_max = check_int(t_max, "t_max", minimum=0)
    check_positive(eps_circle, "eps_circle")
    verdict = classify_qid(pmf, eps_circle)
    if verdict.status == QID:
        return Perturbation(pmf, 0.0, verdict.distance)
    a = pmf_to_polynomial(pmf)
    tried = []
    for t in range(t_max + 1):
        h = h0 * 2.0 ** -t
        c = taylor_shift(a, h)
        if not np.all(c > 0):
            tried.append((h, None))
            continue
        cand = FinitePmf(c, pmf.origin, pmf.step, normalize=True)
        v = classify_qid(cand, eps_circle)
        tried.append((h, v.distance))
        if v.status == QID:
            return Perturbation(cand, h, v.distance)
    raise PerturbationFailed(
        f"no root shift in h0 * 2**-t, t <= {t_max}, produced a QID pmf", distances=tried)


def _mix_full_support(pmf, eta):
    """``(1 - eta) * pmf + eta * uniform`` over the pmf's own lattice window."""
    w = np.asarray(pmf.weights)
    if eta == 0.0 or np.all(w > 0):
        return pmf
    return FinitePmf((1.0 - eta) * w + eta / w.size, pmf.origin, pmf.step, normalize=True)


@dataclass(frozen=True)
class ApproximationRow:
    """One level ``n`` of :func:`approximate_sequence`.

    ``rho_n`` is the Levy distance from the QID approximant to the
    discretization ``mu_n``; ``rho_ref`` estimates the distance from ``mu_n``
    to ``mu`` through a much finer discretization.
    """

    n: int
    h: float
    eta: float
    rho_n: float
    rho_ref: float
    verdict: str
    approximant: FinitePmf = field(repr=False)
    discretized: FinitePmf = field(repr=False)

    def as_record(self):
        return {"n": self.n, "h": self.h, "eta": self.eta, "rho_n": self.rho_n,
                "rho_ref": self.rho_ref, "verdict": self.verdict}


def approximate_sequence(cdf, interval, N, h0=0.1, t_max=40, eps_circle=1e-9,
                         ref_factor=4, metric_tol=1e-9):
    """QID approximants of ``mu`` at levels ``n = 1..N``.

    Level ``n`` discretizes ``mu`` on ``d + 1 = 2n**2 + 1`` points and uses the
    scale ``s_n = max(h0 * d**-1.5, 2 * sqrt(eps_circle))``.  A pmf with
    interior zeros is first mixed with weight ``s_n`` of the uniform law on its
    window (so every lattice point is charged), then passed to
    :func:`perturb_to_qid` with initial shift ``s_n``.  Because ``s_n * d``
    vanishes, the approximants track ``mu_n`` ever more closely; the floor
    keeps roots that started on the unit circle (which move off by about
    ``s_n**2 / 2``) clear of ``eps_circle``.
    """
    N = check_int(N, "N", minimum=1)
    if not isinstance(cdf, CdfEvaluator):
        cdf = CdfEvaluator(cdf)
    ref = StepCdf.from_measure(discretize(cdf, interval, ref_factor * N))
    rows = []
    for n in range(1, N + 1):
        mu_n = discretize(cdf, interval, n)
        scale = max(h0 * (2 * n * n) ** -1.5, 2.0 * math.sqrt(eps_circle))
        sigma = _mix_full_support(mu_n, scale)
        eta = 0.0 if sigma is mu_n else scale
        pert = perturb_to_qid(sigma, scale, t_max, eps_circle)
        approx = pert.pmf
        verdict = classify_qid(approx, eps_circle).status
        F_n = StepCdf.from_measure(mu_n)
        rows.append(ApproximationRow(
            n=n, h=pert.h, eta=eta,
            rho_n=levy_distance(StepCdf.from_measure(approx), F_n, metric_tol),
            rho_ref=levy_distance(F_n, ref, metric_tol),
            verdict=verdict, approximant=approx, discretized=mu_n))
    return rows
