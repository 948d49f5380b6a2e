"""Completely random measures on finite unions of real intervals.

A specification is the characteristic set of the measure

    xi = gamma + sum_k x_k delta_{s_k} + sum_j beta_j delta_{s_j},

with a diffuse drift measure ``gamma``, a Poisson process of atoms with
intensity ``nu(dx) G(ds)`` and finitely many fixed atoms ``s_j`` carrying
independent lattice weights ``beta_j``.  The space ``S`` is exhausted by
``S_n = S ∩ [-n, n]``.
"""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from ._validation import check_int, check_random_state
from .exceptions import (
    DegenerateEstimate,
    DomainError,
    InfiniteMass,
    NotAMeasure,
    SpecInvalid,
)
from .pieces import IntervalSet, Pieces, joint_cells
from .qid_lattice import FinitePmf, classify_qid, triplet_from_pmf, triplet_to_pmf
from .rates import AtomicRate, DensityRate, rate_from_dict

SAMPLE_BLOCK = 1024
_LOCATION_MASS_ATOL = 1e-9
_MAX_RESAMPLE = 100


@dataclass(frozen=True)
class FixedAtom:
    """Fixed atom at ``location`` whose weight has the lattice law ``law``."""

    location: float
    law: FinitePmf

    def __post_init__(self):
        object.__setattr__(self, "location", float(self.location))
        if not isinstance(self.law, FinitePmf):
            raise SpecInvalid("fixed-atom law must be a FinitePmf")
        if self.law.origin < 0:
            raise SpecInvalid("fixed-atom weights must be nonnegative")

    @cached_property
    def triplet(self):
        return triplet_from_pmf(self.law)

    def neg_log_laplace(self, t):
        """``-log E exp(-t beta)``."""
        x, p = self.law.locations, self.law.weights
        keep = p > 0
        return -float(logsumexp(-t * x[keep], b=p[keep]))

    def to_dict(self):
        return {"location": self.location, "law": self.law.to_dict()}

    @classmethod
    def from_dict(cls, data):
        try:
            law = FinitePmf.from_dict(data["law"])
        except ValueError:
            law = FinitePmf.from_dict(data["law"], normalize=True)
        return cls(float(data["location"]), law)


@dataclass(frozen=True)
class CrmSpec:
    """Characteristic set ``(S, gamma, nu, G, fixed atoms)`` of a CRM.

    Parameters
    ----------
    domain : IntervalSet
        The space ``S``.
    gamma : Pieces
        Density of the diffuse drift measure.
    rate : AtomicRate or DensityRate
        Weights-rate measure ``nu`` on ``(0, inf)``.
    location_law : Pieces or None
        Density of the atomless location law ``G`` (a probability on ``S``);
        required when ``rate`` is nonzero.
    fixed_atoms : tuple of FixedAtom
    """

    domain: IntervalSet
    gamma: Pieces = field(default_factory=Pieces)
    rate: object = field(default_factory=AtomicRate)
    location_law: Pieces | None = None
    fixed_atoms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "fixed_atoms", tuple(self.fixed_atoms))
        locs = [a.location for a in self.fixed_atoms]
        if len(set(locs)) != len(locs):
            raise SpecInvalid("fixed-atom locations must be distinct")
        if not self.rate.is_zero() and (self.location_law is None or self.location_law.is_zero()):
            raise SpecInvalid("a nonzero weights rate needs a location law")

    @property
    def fixed_locations(self):
        return np.array([a.location for a in self.fixed_atoms], dtype=float)

    def to_dict(self):
        return {
            "domain": self.domain.to_list(),
            "gamma": self.gamma.to_list(),
            "rate": self.rate.to_dict(),
            "location_law": None if self.location_law is None else self.location_law.to_list(),
            "fixed_atoms": [a.to_dict() for a in self.fixed_atoms],
        }

    @classmethod
    def from_dict(cls, data):
        try:
            law = data.get("location_law")
            return cls(
                domain=IntervalSet(data["domain"]),
                gamma=Pieces(data.get("gamma", [])),
                rate=rate_from_dict(data.get("rate", {"kind": "atoms"})),
                location_law=None if law is None else Pieces(law),
                fixed_atoms=[FixedAtom.from_dict(a) for a in data.get("fixed_atoms", [])],
            )
        except (KeyError, TypeError) as exc:
            raise SpecInvalid(f"malformed spec: {exc}") from exc

    def __eq__(self, other):
        return isinstance(other, CrmSpec) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(repr(self.to_dict()))


def exhaustion(spec, n):
    """``S_n = S ∩ [-n, n]``."""
    return spec.domain.intersect(-float(n), float(n))


def validate_spec(spec, eps_circle=1e-9, eps_tail=1e-12):
    """Check every defining clause of a specification.

    Returns a report with the class memberships and, per fixed atom, the
    drift ``c_j`` and quasi-Levy measure ``b_j`` of its weight law.

    Raises
    ------
    SpecInvalid
        Naming the first clause that fails.
    """
    S = spec.domain
    if not spec.gamma.is_zero():
        if not np.all(S.contains(spec.gamma.a) & S.contains(spec.gamma.b)):
            raise SpecInvalid("gamma: density charges points outside the domain")
    gamma_mass = spec.gamma.total()
    if not math.isfinite(gamma_mass):
        raise SpecInvalid("gamma: total mass is not finite")
    G = spec.location_law
    if G is not None and not G.is_zero():
        if not np.all(S.contains(G.a) & S.contains(G.b)):
            raise SpecInvalid("G: location law charges points outside the domain")
        if abs(G.total() - 1.0) > _LOCATION_MASS_ATOL:
            raise SpecInvalid(f"G: location law has mass {G.total()!r}, expected 1")
    rate = spec.rate
    if not rate.integrable():
        raise SpecInvalid("nu: integral of (1 ^ x) nu(dx) is infinite")
    small = rate.integrate(lambda x: np.minimum(x, 1.0))
    atoms = []
    for j, atom in enumerate(spec.fixed_atoms):
        if not S.contains(atom.location):
            raise SpecInvalid(f"fixed atom {j}: location {atom.location!r} outside the domain")
        verdict = classify_qid(atom.law, eps_circle)
        if not verdict:
            raise SpecInvalid(
                f"fixed atom {j}: weight law is {verdict.status} (root {verdict.witness!r})")
        try:
            trip = triplet_from_pmf(atom.law, eps_circle, eps_tail)
            triplet_to_pmf(trip)
        except NotAMeasure as exc:
            raise SpecInvalid(f"fixed atom {j}: exp(b_j) is not a measure ({exc})") from exc
        except DomainError as exc:
            raise SpecInvalid(f"fixed atom {j}: {exc}") from exc
        atoms.append({"location": atom.location, "drift": trip.drift,
                      "qlm": {str(k): v for k, v in trip.qlm.as_mapping().items()}})
    finite = rate.is_finite()
    on_integers = (isinstance(rate, AtomicRate)
                   and bool(np.all(rate.locations == np.round(rate.locations))))
    lattice_ok = all(float(a.law.origin).is_integer() and float(a.law.step).is_integer()
                     for a in spec.fixed_atoms)
    return {
        "valid": True,
        "degenerate": gamma_mass == 0 and rate.is_zero() and not spec.fixed_atoms,
        "class_A": bool(finite),
        "class_A_prime": bool(finite and gamma_mass == 0 and on_integers and lattice_ok),
        "gamma_mass": gamma_mass,
        "rate_finite": bool(finite),
        "rate_total_mass": rate.total_mass() if finite else None,
        "rate_small_jump_integral": small,
        "fixed_atoms": atoms,
    }


def truncate_spec(spec, n):
    """The finite approximation with ``gamma_n = gamma|S_n`` and ``F_n = F|S_n x (1/n, inf)``.

    The location law is restricted to ``S_n`` and renormalized, its mass
    ``G(S_n)`` is moved into the rate so the product intensity is unchanged
    on ``S_n x (1/n, inf)``; fixed atoms outside ``S_n`` are dropped.
    """
    n = check_int(n, "n", minimum=1)
    Sn = exhaustion(spec, n)
    gamma = spec.gamma
    if not np.all(Sn.contains(gamma.a) & Sn.contains(gamma.b)):
        gamma = gamma.restrict(Sn)
    rate = spec.rate.restricted(1.0 / n)
    G = spec.location_law
    if G is not None and not G.is_zero():
        inside = np.all(Sn.contains(G.a) & Sn.contains(G.b))
        mass = 1.0 if inside else G.mass(Sn)
        if mass == 0.0:
            rate = AtomicRate()
        elif not inside:
            G = G.restrict(Sn).scaled(1.0 / mass)
            rate = rate.scaled(mass)
    atoms = tuple(a for a in spec.fixed_atoms if Sn.contains(a.location))
    return CrmSpec(spec.domain, gamma, rate, G, atoms)


def _check_test_function(f):
    if not isinstance(f, Pieces):
        f = Pieces(f)
    return f


def _psi(rate, v, lo=0.0, hi=math.inf):
    """``int_(lo, hi] (1 - exp(-x v)) nu(dx)``."""
    if v == 0.0:
        return 0.0
    return rate.integrate(lambda x: -np.expm1(-x * v), lo, hi)


def _ordinary_term(rate, G, f, region=None, lo=0.0, hi=math.inf):
    if rate.is_zero() or G is None:
        return 0.0
    values, masses = joint_cells(f, G, region)
    total = 0.0
    for v in np.unique(values):
        if v > 0:
            total += masses[values == v].sum() * _psi(rate, float(v), lo, hi)
    return total


def _gamma_term(gamma, f, region=None):
    values, masses = joint_cells(f, gamma, region)
    return float(values @ masses)


def _fixed_term(atoms, f):
    return sum(a.neg_log_laplace(float(f(a.location))) for a in atoms)


def laplace_functional(spec, f):
    """``-log E exp(-xi f)`` for a nonnegative piecewise-constant ``f``.

    Equals ``gamma f + int int (1 - exp(-x f(s))) nu(dx) G(ds)`` plus
    ``-log E exp(-f(s_j) beta_j)`` per fixed atom; ``f`` is constant on each
    ``[a, b)`` piece, so the integral over ``s`` is an exact finite sum.
    """
    f = _check_test_function(f)
    return (_gamma_term(spec.gamma, f) + _ordinary_term(spec.rate, spec.location_law, f)
            + _fixed_term(spec.fixed_atoms, f))


def truncation_gap(spec, n, f):
    """``laplace_functional(spec, f) - laplace_functional(truncate_spec(spec, n), f)``.

    Computed term by term: ``gamma f`` outside ``S_n``, the ordinary part
    over ``S_n x (0, 1/n]`` and over ``(S \\ S_n) x (0, inf)``, and the
    fixed atoms outside ``S_n``.
    """
    n = check_int(n, "n", minimum=1)
    f = _check_test_function(f)
    Sn = exhaustion(spec, n)
    outside = _complement(spec.domain, Sn)
    G = spec.location_law
    t_gamma = _gamma_term(spec.gamma, f, outside)
    t_small = _ordinary_term(spec.rate, G, f, Sn, 0.0, 1.0 / n)
    t_far = _ordinary_term(spec.rate, G, f, outside)
    t_atoms = _fixed_term([a for a in spec.fixed_atoms if not Sn.contains(a.location)], f)
    return t_gamma + t_small + t_far + t_atoms


def _complement(domain, inner):
    out = []
    for a, b in domain.bounds:
        cur = a
        for c, d in inner.bounds:
            if d <= cur or c >= b:
                continue
            if c > cur:
                out.append((cur, c))
            cur = max(cur, d)
        if cur < b:
            out.append((cur, b))
    return IntervalSet(out)


def char_fn_crm(spec, A, theta):
    """``E exp(i theta xi(A))`` from the characteristic set.

    ``exp(i theta [gamma(A) + sum c_j] + G(A) int (e^{i theta x} - 1) nu(dx)
    + sum_j sum_x (e^{i theta x} - 1) b_j({x}))`` over fixed atoms in ``A``.
    ``theta`` may be complex; ``theta = i t`` gives ``E exp(-t xi(A))``.
    """
    if not isinstance(A, IntervalSet):
        A = IntervalSet(A)
    theta = complex(theta)
    expo = 1j * theta * spec.gamma.mass(A)
    G = spec.location_law
    if not spec.rate.is_zero() and G is not None:
        gA = G.mass(A)
        if gA > 0:
            expo += gA * spec.rate.integrate_complex(lambda x: np.expm1(1j * theta * x))
    for atom in spec.fixed_atoms:
        if A.contains(atom.location):
            trip = atom.triplet
            expo += 1j * theta * trip.drift
            q = trip.qlm
            if not q.is_zero():
                expo += complex(np.expm1(1j * theta * q.locations) @ q.weights)
    return complex(np.exp(expo))


@dataclass(frozen=True)
class PointMeasureSample:
    """One realization: atoms ``(location, weight)`` plus the drift measure."""

    atoms: tuple
    deterministic_part: Pieces

    def integrate(self, f):
        f = _check_test_function(f)
        val = _gamma_term(self.deterministic_part, f)
        return val + sum(w * float(f(s)) for s, w in self.atoms)

    def to_dict(self):
        return {"atoms": [[float(s), float(w)] for s, w in self.atoms]}


@dataclass(frozen=True)
class SampleBatch:
    """Replicates stored as flat arrays.

    Ordinary atoms of replicate ``i`` are ``locations[offsets[i]:offsets[i+1]]``
    with matching ``weights``; ``fixed_values[i, j]`` is the weight of fixed
    atom ``j``.
    """

    seed: int
    offsets: np.ndarray
    locations: np.ndarray
    weights: np.ndarray
    fixed_locations: np.ndarray
    fixed_values: np.ndarray
    gamma: Pieces

    @property
    def count(self):
        return self.offsets.size - 1

    def __len__(self):
        return self.count

    @property
    def atom_counts(self):
        return np.diff(self.offsets)

    def _replicate_ids(self):
        return np.repeat(np.arange(self.count), self.atom_counts)

    def integrate(self, f):
        """``xi f`` for every replicate."""
        f = _check_test_function(f)
        ordinary = np.bincount(self._replicate_ids(), weights=self.weights * f(self.locations),
                               minlength=self.count)
        fixed = self.fixed_values @ f(self.fixed_locations) if self.fixed_locations.size else 0.0
        return _gamma_term(self.gamma, f) + ordinary + fixed

    def measure(self, A):
        """``xi(A)`` for every replicate, ``A`` a union of closed intervals."""
        if not isinstance(A, IntervalSet):
            A = IntervalSet(A)
        inside = A.contains(self.locations)
        ordinary = np.bincount(self._replicate_ids(), weights=self.weights * inside,
                               minlength=self.count)
        fixed = (self.fixed_values @ A.contains(self.fixed_locations).astype(float)
                 if self.fixed_locations.size else 0.0)
        return self.gamma.mass(A) + ordinary + fixed

    def replicate(self, i):
        lo, hi = self.offsets[i], self.offsets[i + 1]
        atoms = list(zip(self.locations[lo:hi].tolist(), self.weights[lo:hi].tolist()))
        atoms += [(float(s), float(v)) for s, v in zip(self.fixed_locations, self.fixed_values[i])
                  if v > 0]
        return PointMeasureSample(tuple(atoms), self.gamma)

    def __iter__(self):
        return (self.replicate(i) for i in range(self.count))


def _sample_block(spec, rng, size, total):
    counts = rng.poisson(total, size=size) if total > 0 else np.zeros(size, dtype=int)
    n_atoms = int(counts.sum())
    if n_atoms:
        weights = spec.rate.sample(rng, n_atoms)
        locs = spec.location_law.sample(rng, n_atoms)
        fixed = spec.fixed_locations
        for _ in range(_MAX_RESAMPLE):
            clash = np.isin(locs, fixed)
            if not np.any(clash):
                break
            locs[clash] = spec.location_law.sample(rng, int(clash.sum()))
        else:
            raise SpecInvalid("location law keeps hitting fixed atoms; is it atomless?")
    else:
        weights = locs = np.zeros(0)
    values = np.zeros((size, len(spec.fixed_atoms)))
    for j, atom in enumerate(spec.fixed_atoms):
        values[:, j] = rng.choice(atom.law.locations, size=size, p=atom.law.weights)
    return counts, locs, weights, values


def sample(spec, seed, count):
    """Draw ``count`` independent replicates of ``xi``.

    Replicates are generated in blocks of ``SAMPLE_BLOCK``; block ``b`` uses
    the stream ``numpy.random.default_rng([seed, b])``, so any replicate can be
    regenerated from ``(seed, index)``.

    Raises
    ------
    InfiniteMass
        If the weights rate has infinite mass.
    """
    count = check_int(count, "count", minimum=0)
    seed = check_int(seed, "seed", minimum=0)
    if not spec.rate.is_finite():
        raise InfiniteMass("weights rate has infinite mass; use truncate_spec first")
    total = 0.0 if spec.rate.is_zero() else spec.rate.total_mass()
    parts = []
    for b, start in enumerate(range(0, count, SAMPLE_BLOCK)):
        size = min(SAMPLE_BLOCK, count - start)
        parts.append(_sample_block(spec, check_random_state(np.random.SeedSequence([seed, b])),
                                   size, total))
    if parts:
        counts = np.concatenate([p[0] for p in parts])
        locs = np.concatenate([p[1] for p in parts])
        weights = np.concatenate([p[2] for p in parts])
        values = np.concatenate([p[3] for p in parts])
    else:
        counts, locs, weights = np.zeros(0, dtype=int), np.zeros(0), np.zeros(0)
        values = np.zeros((0, len(spec.fixed_atoms)))
    offsets = np.concatenate([[0], np.cumsum(counts)]).astype(int)
    return SampleBatch(seed, offsets, locs, weights, spec.fixed_locations, values, spec.gamma)


def empirical_laplace(samples, f):
    """Monte Carlo estimate of ``E exp(-xi f)`` with its standard error.

    Raises
    ------
    DegenerateEstimate
        If the estimate underflows to zero, so its logarithm is meaningless.
    """
    vals = np.exp(-np.asarray(samples.integrate(f), dtype=float))
    if vals.size == 0:
        raise ValueError("need at least one replicate")
    mean = float(vals.mean())
    if mean <= 0.0:
        raise DegenerateEstimate("exp(-xi f) underflowed in every replicate")
    stderr = float(vals.std(ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return mean, stderr


__all__ = [
    "AtomicRate", "CrmSpec", "DensityRate", "FixedAtom", "IntervalSet", "Pieces",
    "PointMeasureSample", "SampleBatch", "char_fn_crm", "empirical_laplace", "exhaustion",
    "laplace_functional", "sample", "truncate_spec", "truncation_gap", "validate_spec",
]
