"""Posterior updates for CRM priors with integer-valued likelihoods.

The prior is a :class:`~qidrm.crm.CrmSpec` on ``Psi`` with product intensity
``nu(dtheta) G(dpsi)``.  Given counts ``x ~ h(x | theta)`` at every atom, the
posterior again has three parts: reweighted fixed atoms, one new fixed atom
per newly observed location, and an ordinary part with thinned rate
``nu(dtheta) h(0 | theta)**m``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ._validation import check_int, check_positive, check_random_state
from .crm import CrmSpec, FixedAtom, sample
from .exceptions import (
    DegeneratePosterior,
    SpecInvalid,
    UnnormalizableNewAtom,
    UnsupportedPrior,
)
from .qid_lattice import QID, FinitePmf, classify_qid, find_roots
from .rates import AtomicRate, DensityRate, register_factor

_LATTICE_RTOL = 1e-9
_DENSITY_GRID = 4096


class Likelihood:
    """Base class for ``h(x | theta)``, a pmf over ``x = 0, 1, 2, ...``."""

    def pmf(self, x, theta):
        raise NotImplementedError

    def sample(self, rng, theta):
        raise NotImplementedError

    def descriptor(self):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.descriptor()!r})"


class PoissonLikelihood(Likelihood):
    """``x ~ Poisson(c * theta)``; ``theta = 0`` gives ``x = 0`` surely."""

    def __init__(self, c=1.0):
        self.c = check_positive(c, "c")

    def pmf(self, x, theta):
        return stats.poisson.pmf(x, self.c * np.asarray(theta, dtype=float))

    def sample(self, rng, theta):
        return rng.poisson(self.c * np.asarray(theta, dtype=float))

    def descriptor(self):
        return f"poisson:{self.c!r}"


class BinomialLikelihood(Likelihood):
    """``x ~ Binomial(theta, p)`` with ``theta`` a nonnegative integer."""

    def __init__(self, p=0.5):
        p = check_positive(p, "p")
        if p > 1:
            raise ValueError("p must lie in (0, 1]")
        self.p = p

    @staticmethod
    def _trials(theta):
        t = np.asarray(theta, dtype=float)
        if np.any(t < 0) or np.any(t != np.round(t)):
            raise UnsupportedPrior("binomial likelihood needs integer theta >= 0")
        return t.astype(int)

    def pmf(self, x, theta):
        return stats.binom.pmf(x, self._trials(theta), self.p)

    def sample(self, rng, theta):
        return rng.binomial(self._trials(theta), self.p)

    def descriptor(self):
        return f"binomial:{self.p!r}"


class TableLikelihood(Likelihood):
    """``h(x | theta)`` listed for finitely many ``theta`` (row ``theta = 0`` required).

    Parameters
    ----------
    table : dict
        Maps ``theta`` to a probability vector over ``x = 0, 1, ...``.
    """

    def __init__(self, table):
        rows = {float(k): np.asarray(v, dtype=float) for k, v in dict(table).items()}
        if 0.0 not in rows:
            raise ValueError("table likelihood needs a row for theta = 0")
        for k, v in rows.items():
            if v.ndim != 1 or np.any(v < 0) or abs(v.sum() - 1.0) > 1e-10:
                raise ValueError(f"row theta={k!r} is not a probability vector")
        self.rows = rows

    def _row(self, theta):
        try:
            return self.rows[float(theta)]
        except KeyError:
            raise UnsupportedPrior(f"table likelihood has no row for theta={theta!r}") from None

    def pmf(self, x, theta):
        x = np.asarray(x)
        theta = np.asarray(theta, dtype=float)
        x_b, t_b = np.broadcast_arrays(x, theta)
        out = np.empty(x_b.shape)
        for idx in np.ndindex(x_b.shape):
            row = self._row(t_b[idx])
            xi = int(x_b[idx])
            out[idx] = row[xi] if 0 <= xi < row.size else 0.0
        return out if out.shape else float(out)

    def sample(self, rng, theta):
        theta = np.asarray(theta, dtype=float)
        return np.array([rng.choice(self._row(t).size, p=self._row(t)) for t in theta.ravel()],
                        dtype=int).reshape(theta.shape)

    def descriptor(self):
        return {"table": {repr(k): v.tolist() for k, v in sorted(self.rows.items())}}


def parse_likelihood(spec):
    """Build a likelihood from ``"poisson:c"``, ``"binomial:p"`` or a table dict."""
    if isinstance(spec, Likelihood):
        return spec
    if isinstance(spec, dict):
        return TableLikelihood(spec["table"] if "table" in spec else spec)
    name, _, arg = str(spec).partition(":")
    try:
        if name == "poisson":
            return PoissonLikelihood(float(arg) if arg else 1.0)
        if name == "binomial":
            return BinomialLikelihood(float(arg) if arg else 0.5)
    except ValueError as exc:
        raise ValueError(f"bad likelihood parameter in {spec!r}: {exc}") from None
    raise ValueError(f"unknown likelihood {spec!r}")


def _zero_power_factor(descriptor):
    lik = parse_likelihood(descriptor["likelihood"])
    m = int(descriptor["m"])
    return lambda theta: lik.pmf(0, theta) ** m


register_factor("zero-power", _zero_power_factor)


@dataclass(frozen=True)
class PointObservation:
    """One individual's data ``X = sum_k x_k delta_{psi_k}`` with every ``x_k >= 1``."""

    atoms: tuple = ()

    def __post_init__(self):
        atoms = tuple((float(p), int(x)) for p, x in self.atoms)
        locs = [p for p, _ in atoms]
        if len(set(locs)) != len(locs):
            raise ValueError("an observation lists each location at most once")
        if any(x < 1 for _, x in atoms):
            raise ValueError("observed counts must be >= 1")
        object.__setattr__(self, "atoms", atoms)

    def count_at(self, psi):
        for p, x in self.atoms:
            if p == psi:
                return x
        return 0

    def to_list(self):
        return [{"psi": p, "x": x} for p, x in self.atoms]

    @classmethod
    def from_list(cls, items):
        return cls(tuple((d["psi"], d["x"]) for d in items))


def _float_gcd(values):
    """Largest ``g`` with every value an integer multiple of ``g`` (up to rounding)."""
    g = float(values[0])
    tol = _LATTICE_RTOL * float(np.max(values))
    for v in values[1:]:
        a, b = max(g, float(v)), min(g, float(v))
        while b > tol:
            a, b = b, a % b
            if b > a - tol:
                b = 0.0
        g = a
    return g


def _lattice_law(theta, weights):
    """Pmf on the coarsest lattice through the support points ``theta``."""
    keep = weights > 0
    theta, weights = np.asarray(theta, dtype=float)[keep], np.asarray(weights)[keep]
    order = np.argsort(theta)
    theta, weights = theta[order], weights[order]
    if theta.size == 1:
        return FinitePmf(weights, theta[0], 1.0, normalize=True)
    step = _float_gcd(np.diff(theta))
    ratio = (theta - theta[0]) / step
    idx = np.round(ratio)
    if np.any(np.abs(ratio - idx) > _LATTICE_RTOL * np.maximum(1.0, ratio)):
        raise UnsupportedPrior("posterior support does not lie on a lattice")
    w = np.zeros(int(idx[-1]) + 1)
    w[idx.astype(int)] = weights
    return FinitePmf(w, theta[0], step, normalize=True)


def _root_rate(rate):
    while isinstance(rate, DensityRate) and rate.family == "thinned":
        rate = rate.base
    return rate


def _density_grid(rate):
    """Midpoint grid over the support of a density rate.

    The grid depends only on the support of the underlying (unthinned) rate,
    so thinned versions of one prior share it and repeated updates stay
    consistent.
    """
    root = _root_rate(rate)
    if math.isfinite(root.upper):
        top = root.upper
    else:
        top = max(1.0, 2.0 * root.lower, *root.breakpoints())
        ref = root.total_mass(max(root.lower, 0.5 * top))
        while root.total_mass(top) > 1e-14 * ref:
            top *= 2.0
    lo = rate.lower
    step = (top - lo) / _DENSITY_GRID
    mid = lo + step * (np.arange(_DENSITY_GRID) + 0.5)
    return mid, rate.density(mid) * step, lo + 0.5 * step, step


def _new_atom_law(rate, weight_fn, psi):
    if isinstance(rate, AtomicRate):
        theta = rate.locations
        w = rate.weights * weight_fn(theta)
        total = w.sum()
    else:
        theta, mass, origin, step = _density_grid(rate)
        total = rate.integrate(weight_fn)
        if not math.isfinite(total):
            raise UnnormalizableNewAtom(f"new atom at {psi!r} has an infinite normalizer")
        w = mass * weight_fn(theta)
    if not math.isfinite(total):
        raise UnnormalizableNewAtom(f"new atom at {psi!r} has an infinite normalizer")
    if not (total > 0 and w.sum() > 0):
        raise DegeneratePosterior(f"new atom at {psi!r}: likelihood annihilates the rate")
    if isinstance(rate, AtomicRate):
        return _lattice_law(theta, w)
    return FinitePmf(w, origin, step, normalize=True)


def _products(h, counts, theta):
    out = np.ones_like(np.asarray(theta, dtype=float))
    for x in counts:
        out = out * h.pmf(x, theta)
    return out


def posterior(prior, observations, likelihood):
    """Posterior characteristic set given observations ``X_1, ..., X_m``.

    Observation locations equal to a fixed-atom location (exactly) update that
    atom; every other location becomes a new fixed atom.  The result lists
    the prior fixed atoms first, then new atoms in increasing location.

    Raises
    ------
    DegeneratePosterior
        If a reweighted law has zero total mass.
    UnnormalizableNewAtom
        If a new atom's law cannot be normalized.
    """
    h = parse_likelihood(likelihood)
    obs = [o if isinstance(o, PointObservation) else PointObservation(tuple(o)) for o in observations]
    m = len(obs)
    if m == 0:
        return prior
    fixed_locs = {a.location for a in prior.fixed_atoms}
    atoms = []
    for k, atom in enumerate(prior.fixed_atoms):
        counts = [o.count_at(atom.location) for o in obs]
        law = atom.law
        w = law.weights * _products(h, counts, law.locations)
        if not w.sum() > 0:
            raise DegeneratePosterior(f"fixed atom {k} at {atom.location!r}: likelihood annihilates the prior")
        atoms.append(FixedAtom(atom.location, FinitePmf(w, law.origin, law.step, normalize=True)))
    new_locs = sorted({p for o in obs for p, _ in o.atoms if p not in fixed_locs})
    if new_locs:
        if prior.rate.is_zero():
            raise DegeneratePosterior("observation at a new location but the weights rate is zero")
        for psi in new_locs:
            counts = [o.count_at(psi) for o in obs]
            law = _new_atom_law(prior.rate, lambda t, c=counts: _products(h, c, t), psi)
            atoms.append(FixedAtom(psi, law))
    rate = thin_rate(prior.rate, h, m)
    return CrmSpec(prior.domain, prior.gamma, rate, prior.location_law, tuple(atoms))


def thin_rate(rate, likelihood, m):
    """``nu(dtheta) h(0 | theta)**m``."""
    h = parse_likelihood(likelihood)
    m = check_int(m, "m", minimum=0)
    if m == 0 or rate.is_zero():
        return rate
    desc = {"kind": "zero-power", "likelihood": h.descriptor(), "m": m}
    if isinstance(rate, DensityRate) and rate.family == "thinned" \
            and rate.factor_descriptor and rate.factor_descriptor.get("kind") == "zero-power" \
            and rate.factor_descriptor["likelihood"] == h.descriptor():
        total_m = m + int(rate.factor_descriptor["m"])
        desc["m"] = total_m
        return rate.base.thinned(_zero_power_factor(desc), desc)._replace(
            lower=rate.lower, upper=rate.upper, scale=rate.scale)
    return rate.thinned(lambda theta: h.pmf(0, theta) ** m, desc)


def simulate_dataset(prior, likelihood, m, seed):
    """Draw ``Theta`` once from ``prior`` and then ``m`` conditionally iid observations."""
    h = parse_likelihood(likelihood)
    m = check_int(m, "m", minimum=0)
    batch = sample(prior, seed, 1)
    theta_sample = batch.replicate(0)
    psi = np.array([s for s, _ in theta_sample.atoms])
    theta = np.array([w for _, w in theta_sample.atoms])
    rng = check_random_state(np.random.SeedSequence([seed, 1 << 30]))
    out = []
    for _ in range(m):
        x = h.sample(rng, theta) if theta.size else np.zeros(0, dtype=int)
        out.append(PointObservation(tuple((float(p), int(c)) for p, c in zip(psi, x) if c >= 1)))
    return out


def _integer_coefficients(theta, weights, lowest):
    """Dense coefficient vector indexed by integer ``theta`` starting at ``lowest``."""
    t = np.asarray(theta, dtype=float)
    if np.any(t != np.round(t)) or np.any(t < lowest):
        raise UnsupportedPrior("conjugacy check needs weights supported on integers")
    idx = t.astype(int)
    c = np.zeros(int(idx.max()) + 1 if idx.size else 1)
    np.add.at(c, idx, weights)
    return c


@dataclass(frozen=True)
class ConjugacyEntry:
    component: str
    k: int | None
    x: int
    status: str
    min_distance: float
    witness: complex | None

    def to_dict(self):
        return {"component": self.component, "k": self.k, "x": self.x, "status": self.status,
                "min_distance": None if not math.isfinite(self.min_distance) else self.min_distance,
                "witness": None if self.witness is None else [self.witness.real, self.witness.imag]}


@dataclass(frozen=True)
class ConjugacyReport:
    conjugate: bool
    x_range: tuple
    entries: tuple

    @property
    def violations(self):
        return [e for e in self.entries if e.status not in (QID, "unobservable")]

    def to_dict(self):
        return {"conjugate": self.conjugate, "x_min": self.x_range[0], "x_max": self.x_range[1],
                "violations": [(e.component, e.k, e.x) for e in self.violations],
                "entries": [e.to_dict() for e in self.entries]}

    def to_csv_rows(self):
        yield ["component", "k", "x", "status", "min_distance"]
        for e in self.entries:
            yield [e.component, "" if e.k is None else e.k, e.x, e.status, e.min_distance]


def _check_polynomial(coeffs, eps_circle):
    nz = np.flatnonzero(coeffs)
    if nz.size == 0:
        return "unobservable", math.inf, None
    c = coeffs[:nz[-1] + 1]
    if nz.size == 1 or c.size == 1:
        return QID, math.inf, None
    roots = find_roots(c / c.sum())
    witness, dist = roots.nearest()
    if dist > eps_circle:
        return QID, dist, None
    return ("NotQID" if dist < 1e-14 else "Indeterminate"), dist, witness


def conjugacy_check(prior, likelihood, x_max=20, eps_circle=1e-9):
    """Check that reweighted coefficient polynomials avoid the unit circle.

    For fixed atom ``k`` with law ``sum_j a_j delta_j`` and each
    ``x = 0..x_max`` (``x = 0`` covers individuals not listing the atom), and
    for the rate ``sum_j b_j delta_j`` with ``x = 1..x_max``, the polynomial
    ``sum_j h(x|j) c_j w**j`` must have no root within ``eps_circle`` of the
    unit circle.  Polynomials that vanish identically (the count ``x`` cannot
    occur) are reported as ``unobservable``.

    Raises
    ------
    UnsupportedPrior
        If a fixed-atom law or the rate is not supported on finitely many integers.
    """
    h = parse_likelihood(likelihood)
    x_max = check_int(x_max, "x_max", minimum=1)
    check_positive(eps_circle, "eps_circle")
    if not isinstance(prior.rate, AtomicRate):
        raise UnsupportedPrior("conjugacy check needs a rate with finite support (atoms form)")
    entries = []
    for k, atom in enumerate(prior.fixed_atoms):
        theta, a = atom.law.locations, atom.law.weights
        base = _integer_coefficients(theta, a, 0)
        grid = np.arange(base.size)
        for x in range(0, x_max + 1):
            status, dist, wit = _check_polynomial(h.pmf(x, grid) * base, eps_circle)
            entries.append(ConjugacyEntry("fixed", k, x, status, dist, wit))
    if not prior.rate.is_zero():
        base = _integer_coefficients(prior.rate.locations, prior.rate.weights, 1)
        grid = np.arange(base.size)
        for x in range(1, x_max + 1):
            status, dist, wit = _check_polynomial(h.pmf(x, grid) * base, eps_circle)
            entries.append(ConjugacyEntry("rate", None, x, status, dist, wit))
    ok = all(e.status in (QID, "unobservable") for e in entries)
    return ConjugacyReport(ok, (0, x_max), tuple(entries))


def posterior_truncation_consistency(prior, n, observations, likelihood, test_functions=(),
                                     grid=None):
    """Compare ``nu_post`` restricted to ``(1/n, inf)`` with the truncated prior's ``nu_post``.

    Atoms are compared exactly; densities on ``grid`` (default: 512 points
    spread over the truncated support) within 1e-12 relative.  The report
    also lists Laplace-functional gaps of the two ordinary posteriors.
    """
    from .crm import exhaustion, laplace_functional, truncate_spec

    h = parse_likelihood(likelihood)
    n = check_int(n, "n", minimum=1)
    m = len(observations)
    post = thin_rate(prior.rate, h, m)
    tspec = truncate_spec(prior, n)
    trunc = thin_rate(tspec.rate, h, m)
    G, Sn = prior.location_law, exhaustion(prior, n)
    g_mass = 1.0
    if G is not None and not G.is_zero() and not np.all(Sn.contains(G.a) & Sn.contains(G.b)):
        g_mass = G.mass(Sn)
    full = post.restricted(1.0 / n)
    if g_mass == 0.0:
        full = AtomicRate()
    elif g_mass != 1.0:
        full = full.scaled(g_mass)
    if isinstance(full, AtomicRate):
        equal = full == trunc
        max_err = 0.0 if equal else math.inf
    else:
        if grid is None:
            top = full.upper if math.isfinite(full.upper) else max(10.0, 4.0 * full.lower)
            grid = np.linspace(full.lower, top, 514)[1:-1]
        a, b = full.density(grid), trunc.density(grid)
        denom = np.maximum(np.abs(a), np.finfo(float).tiny)
        max_err = float(np.max(np.abs(a - b) / denom))
        equal = max_err <= 1e-12
    gaps = []
    for f in test_functions:
        ord_full = CrmSpec(prior.domain, rate=post, location_law=prior.location_law)
        ord_trunc = CrmSpec(tspec.domain, rate=trunc, location_law=tspec.location_law)
        gaps.append(float(laplace_functional(ord_full, f) - laplace_functional(ord_trunc, f)))
    return {"n": n, "m": m, "equal": bool(equal), "max_rel_error": max_err,
            "laplace_gaps": gaps}


def check_likelihood(likelihood, thetas, cutoff=200, atol=1e-10):
    """Verify ``sum_x h(x|theta) = 1`` up to ``cutoff`` for each ``theta``."""
    h = parse_likelihood(likelihood)
    x = np.arange(cutoff + 1)
    for t in np.atleast_1d(thetas):
        total = float(np.sum(h.pmf(x, t)))
        if abs(total - 1.0) > atol:
            raise SpecInvalid(f"h(.|{t!r}) sums to {total!r} over x <= {cutoff}")
    return True


def closure_holds(prior, likelihood, observation, eps_circle=1e-9):
    """Whether every posterior fixed-atom law after one observation is QID."""
    post = posterior(prior, [observation], likelihood)
    return all(classify_qid(a.law, eps_circle).status == QID for a in post.fixed_atoms)
