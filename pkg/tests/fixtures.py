"""Random specifications and priors shared by unit and acceptance tests."""

import numpy as np

from qidrm.bayes import PointObservation
from qidrm.crm import CrmSpec, FixedAtom
from qidrm.density_approx import perturb_to_qid
from qidrm.pieces import IntervalSet, Pieces
from qidrm.qid_lattice import QID, FinitePmf, classify_qid
from qidrm.rates import AtomicRate, DensityRate


def random_qid_law(rng, max_degree=4, origin=0.0, step=1.0):
    d = int(rng.integers(0, max_degree + 1))
    w = rng.random(d + 1) + 0.05
    pmf = FinitePmf(w, origin, step, normalize=True)
    return perturb_to_qid(pmf, 1e-2).pmf


def random_pieces(rng, lo, hi, k, total=None):
    edges = np.sort(rng.uniform(lo, hi, 2 * k))
    vals = rng.uniform(0.1, 2.0, k)
    p = Pieces([(edges[2 * i], edges[2 * i + 1], vals[i]) for i in range(k)
                if edges[2 * i] < edges[2 * i + 1]])
    if total is not None:
        p = p.scaled(total / p.total())
    return p


def random_rate(rng, finite=False):
    kind = rng.integers(0, 3 if not finite else 2)
    if kind == 0:
        k = int(rng.integers(1, 5))
        return AtomicRate(np.sort(rng.uniform(0.05, 3.0, k)) + np.arange(k) * 1e-3,
                          rng.uniform(0.1, 2.0, k))
    if kind == 1:
        edges = np.sort(rng.uniform(0.02, 4.0, 4))
        return DensityRate.piecewise(edges, rng.uniform(0.1, 2.0, 3))
    return DensityRate.ggamma(c=float(rng.uniform(0.5, 2)), sigma=float(rng.uniform(-0.5, 0.6)),
                              beta=float(rng.uniform(0.5, 2)))


def random_spec(rng, finite=False, n_atoms=None):
    """Domain inside ``[-12, 12]`` so the exhaustion ``S_n`` matters for small ``n``."""
    k = int(rng.integers(1, 4))
    cuts = np.sort(rng.uniform(-12, 12, 2 * k))
    domain = IntervalSet(cuts.reshape(-1, 2))
    lo, hi = domain.bounds[0, 0], domain.bounds[-1, 1]
    gamma = random_pieces(rng, lo, hi, 2).restrict(domain) if rng.random() < 0.7 else Pieces()
    G = random_pieces(rng, lo, hi, 3).restrict(domain)
    if G.is_zero():
        G = Pieces.constant(1.0, domain.bounds)
    G = G.scaled(1.0 / G.total())
    n_atoms = int(rng.integers(0, 3)) if n_atoms is None else n_atoms
    locs = rng.choice(np.linspace(lo, hi, 97)[1:-1], size=n_atoms, replace=False)
    locs = [float(s) for s in locs if domain.contains(s)]
    atoms = [FixedAtom(s, random_qid_law(rng, origin=float(rng.integers(0, 3)),
                                         step=float(rng.choice([0.5, 1.0]))))
             for s in locs]
    return CrmSpec(domain, gamma, random_rate(rng, finite), G, atoms)


def random_test_function(rng, domain):
    lo, hi = domain.bounds[0, 0], domain.bounds[-1, 1]
    return random_pieces(rng, lo - 1, hi + 1, int(rng.integers(1, 4)))


def random_prime_prior(rng, max_support=4, n_atoms=None, rate_atoms=None):
    """An A' prior on [0,1]: integer-valued fixed atoms and a rate on {1, 2, ...}."""
    n_atoms = int(rng.integers(1, 4)) if n_atoms is None else n_atoms
    atoms = []
    locs = rng.choice(np.arange(1, 50) / 50, size=n_atoms, replace=False)
    for s in locs:
        while True:
            d = int(rng.integers(1, max_support + 1))
            w = rng.random(d + 1) + 0.05
            law = FinitePmf(w, float(rng.integers(0, 2)), 1.0, normalize=True)
            if classify_qid(law).status == QID:
                break
        atoms.append(FixedAtom(float(s), law))
    k = int(rng.integers(1, 4)) if rate_atoms is None else rate_atoms
    support = np.sort(rng.choice(np.arange(1, 6), size=k, replace=False))
    rate = AtomicRate(support.astype(float), rng.uniform(0.1, 1.5, k))
    return CrmSpec(IntervalSet([[0, 1]]), rate=rate, location_law=Pieces([[0, 1, 1]]),
                   fixed_atoms=atoms)


def random_observations(rng, prior, m, max_new=2, max_x=4):
    obs = []
    fixed = [a.location for a in prior.fixed_atoms]
    for _ in range(m):
        atoms = {}
        for s in fixed:
            if rng.random() < 0.5:
                atoms[s] = int(rng.integers(1, max_x + 1))
        for _ in range(int(rng.integers(0, max_new + 1))):
            atoms[float(rng.choice(np.arange(51, 100) / 100))] = int(rng.integers(1, max_x + 1))
        obs.append(PointObservation(tuple(atoms.items())))
    return obs
