"""Acceptance suite: one test per criterion, each reporting a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v``; the lines are collected in the
"acceptance criteria" section of the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate

from fixtures import random_observations, random_prime_prior, random_spec, random_test_function
from qidrm.bayes import (
    PointObservation,
    conjugacy_check,
    parse_likelihood,
    posterior,
    posterior_truncation_consistency,
    simulate_dataset,
    thin_rate,
)
from qidrm.crm import (
    CrmSpec,
    FixedAtom,
    empirical_laplace,
    laplace_functional,
    sample,
    truncate_spec,
    truncation_gap,
)
from qidrm.density_approx import approximate_sequence, builtin_cdf, perturb_to_qid
from qidrm.exceptions import NotAMeasure, NotQidError
from qidrm.levy_metric import StepCdf, levy_distance
from qidrm.pieces import IntervalSet, Pieces
from qidrm.qid_lattice import (
    NOT_QID,
    QID,
    FinitePmf,
    QuasiLevyTriplet,
    char_fn,
    classify_qid,
    pmf_total_variation,
    triplet_from_pmf,
    triplet_to_pmf,
)
from qidrm.rates import AtomicRate, DensityRate
from qidrm.signed_measure import LatticeSignedMeasure, conv_exp, is_measure

pytestmark = pytest.mark.acceptance

UNIT = IntervalSet([[0, 1]])
UNIFORM = Pieces([[0, 1, 1]])
MEASURE_TOL = 1e-10  # relative negativity allowed in exp(qlm), float noise only


def direct_cf(pmf, theta):
    return np.exp(1j * np.outer(theta, pmf.locations)) @ pmf.weights


def criterion1_pmfs(count=500, seed=1):
    """QID pmfs of degree <= 12 obtained by root shifting random pmfs."""
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        d = int(rng.integers(1, 13))
        w = rng.random(d + 1) + 1e-3
        step = float(rng.choice([0.5, 1.0, 2.0]))
        raw = FinitePmf(w, origin=float(rng.integers(-4, 5)) * step, step=step, normalize=True)
        out.append(perturb_to_qid(raw, 1e-2).pmf)
    return out


@pytest.fixture(scope="module")
def qid_sample():
    return criterion1_pmfs()


def test_criterion_1_triplet_round_trip(criterion):
    start = time.perf_counter()
    worst_tv = worst_cf = 0.0
    for p in criterion1_pmfs():
        t = triplet_from_pmf(p)
        worst_tv = max(worst_tv, pmf_total_variation(triplet_to_pmf(t), p))
        theta = np.linspace(-np.pi / p.step, np.pi / p.step, 64)
        worst_cf = max(worst_cf, float(np.max(np.abs(char_fn(t, theta) - direct_cf(p, theta)))))
    elapsed = time.perf_counter() - start
    ok = worst_tv <= 1e-8 and worst_cf <= 1e-8 and elapsed <= 60
    criterion(1, "triplet round trip", ok,
              f"(500 pmfs, max TV {worst_tv:.1e}, max cf error {worst_cf:.1e}, {elapsed:.1f}s)")
    assert ok


def test_criterion_2_hand_series(criterion):
    errs = []
    t = triplet_from_pmf(FinitePmf([2 / 3, 1 / 3]))
    q = t.qlm.as_mapping()
    errs += [abs(t.drift), abs(q[1] - 0.5), abs(q[2] + 0.125), abs(q[3] - 1 / 24)]
    m = triplet_from_pmf(FinitePmf([1 / 3, 2 / 3]))
    mq = m.qlm.as_mapping()
    errs += [abs(m.drift - 1), abs(mq[-1] - 0.5), abs(mq[-2] + 0.125), abs(mq[-3] - 1 / 24)]
    mirrored = all(k < 0 for k in mq) and all(abs(mq[-k] - q[k]) <= 1e-12 for k in q)
    verdict = classify_qid(FinitePmf([0.5, 0.5]))
    try:
        triplet_from_pmf(FinitePmf([0.5, 0.5]))
        rejected = False
    except NotQidError as exc:
        rejected = abs(exc.witness - (-1)) <= 1e-12
    ok = (max(errs) <= 1e-12 and mirrored and rejected and verdict.status == NOT_QID
          and abs(verdict.witness + 1) <= 1e-12)
    criterion(2, "hand-series fixtures", ok, f"(max error {max(errs):.1e})")
    assert ok


def _corrupt(t, rng):
    """Flip the sign of one qlm mass chosen among those with ``|mass| >= 1e-3``."""
    w = np.array(t.qlm.weights)
    big = np.flatnonzero(np.abs(w) >= 1e-3)
    j = int(rng.choice(big))
    w[j] = -w[j]
    qlm = LatticeSignedMeasure(w, t.qlm.min_index, t.qlm.origin, t.qlm.step)
    return QuasiLevyTriplet(t.drift, qlm, t.gaussian, t.centering), j


def test_criterion_3_cuppens(criterion, qid_sample):
    worst = 0.0
    all_measures = True
    for p in qid_sample:
        e = conv_exp(triplet_from_pmf(p).qlm)
        total = float(e.weights.sum())
        all_measures &= bool(is_measure(e, MEASURE_TOL * total))
        worst = max(worst, -min(float(e.weights.min()), 0.0) / total)
    rng = np.random.default_rng(3)
    caught = 0
    for i in range(100):
        p = qid_sample[int(rng.integers(len(qid_sample)))]
        bad, _ = _corrupt(triplet_from_pmf(p), rng)
        e = conv_exp(bad.qlm)
        if not is_measure(e, MEASURE_TOL * float(abs(e.weights).sum())):
            caught += 1
            continue
        try:
            caught += pmf_total_variation(triplet_to_pmf(bad), p) > 1e-4
        except (NotAMeasure, ValueError):
            caught += 1
    ok = all_measures and caught >= 95
    criterion(3, "Cuppens consistency", ok,
              f"(worst relative negativity {worst:.1e}, corruptions caught {caught}/100)")
    assert ok


def _random_law(rng, max_atoms=6, lo=-3.0, hi=3.0):
    k = int(rng.integers(1, max_atoms + 1))
    x = np.round(rng.uniform(lo, hi, k), int(rng.integers(1, 4)))
    p = rng.random(k) + 0.05
    return StepCdf(x, p / p.sum())


def _convolve(laws):
    x, p = np.zeros(1), np.ones(1)
    for law in laws:
        x = np.add.outer(x, law.locations).ravel()
        p = np.multiply.outer(p, law.masses).ravel()
    return StepCdf(x, p / p.sum())


def test_criterion_4_levy_lemmas(criterion):
    tol = 1e-9
    rng = np.random.default_rng(4)
    scaling_excess = -np.inf
    for _ in range(200):
        F, G = _random_law(rng), _random_law(rng)
        c = 1.0 - rng.random()
        lhs = levy_distance(F.scaled(c), G.scaled(c), tol)
        scaling_excess = max(scaling_excess, lhs - levy_distance(F, G, tol) - 2 * tol)
    conv_excess = -np.inf
    for _ in range(100):
        k = int(rng.integers(1, 5))
        Fs = [_random_law(rng, 4) for _ in range(k)]
        Gs = [_random_law(rng, 4) for _ in range(k)]
        lhs = levy_distance(_convolve(Fs), _convolve(Gs), tol)
        rhs = sum(levy_distance(F, G, tol) for F, G in zip(Fs, Gs))
        conv_excess = max(conv_excess, lhs - rhs - 2 * k * tol)
    ok = scaling_excess <= 0 and conv_excess <= 0
    criterion(4, "Levy metric lemmas", ok,
              f"(max scaling excess {scaling_excess:.1e}, max convolution excess {conv_excess:.1e})")
    assert ok


def test_criterion_5_density_procedure(criterion):
    h0 = 0.1
    details, ok = [], True
    for name in ("uniform01", "exp1", "discrete3"):
        cdf, interval = builtin_cdf(name)
        rows = approximate_sequence(cdf, interval, 8, h0=h0)
        all_qid = all(r.verdict == QID for r in rows)
        rho = [r.rho_n for r in rows]
        first = next((i for i, r in enumerate(rows) if r.h > 0 or r.eta > 0), len(rows))
        tail = rho[first:]
        monotone = all(b <= a for a, b in zip(tail, tail[1:]))
        ok &= all_qid and monotone and rho[-1] < 0.01
        details.append(f"{name}: rho_8={rho[-1]:.1e}")
    worst = 0.0
    for weights, step in (([0.5, 0.5], 1.0), ([0.5, 0.5], 0.25), ([0.4, 0.6], 1.0)):
        for h in (0.1, 0.01, 1e-3):
            raw = FinitePmf(weights, step=step)
            if classify_qid(raw).status == QID:
                raw = FinitePmf(weights[::-1], step=step)
                raw = FinitePmf([0.5, 0.5], step=step) if classify_qid(raw).status == QID else raw
            pert = perturb_to_qid(raw, h)
            rho = levy_distance(StepCdf.from_measure(pert.pmf), StepCdf.from_measure(raw))
            worst = max(worst, rho / (2 * h))
    ok &= worst <= 1
    criterion(5, "density procedure", ok,
              f"({', '.join(details)}; max rho/(2 h0) on linear fixtures {worst:.2f})")
    assert ok


def test_criterion_6_truncation_identity(criterion):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(20):
        spec = random_spec(rng)
        f = random_test_function(rng, spec.domain)
        full = laplace_functional(spec, f)
        for n in (1, 2, 5, 10):
            diff = full - laplace_functional(truncate_spec(spec, n), f)
            worst = max(worst, abs(truncation_gap(spec, n, f) - diff))
    rate = DensityRate.ggamma(c=1.0, sigma=0.0, beta=1.0)
    mass_err = 0.0
    for n in (1, 2, 5, 10):
        oracle = integrate.quad(lambda x: math.exp(-x) / x, 1.0 / n, np.inf,
                                epsabs=1e-14, epsrel=1e-13)[0]
        mass_err = max(mass_err, abs(rate.restricted(1.0 / n).total_mass() - oracle))
    ok = worst <= 1e-8 and mass_err <= 1e-8
    criterion(6, "CRM truncation identity", ok,
              f"(max gap error {worst:.1e}, max E1 mass error {mass_err:.1e})")
    assert ok


def criterion7_specs():
    compound = CrmSpec(UNIT, gamma=Pieces([[0, 0.3, 0.5]]),
                       rate=DensityRate.piecewise([0.2, 1.0, 3.0], [1.2, 0.4]),
                       location_law=UNIFORM,
                       fixed_atoms=[FixedAtom(0.7, FinitePmf([0.5, 0.3, 0.2]))])
    gamma = truncate_spec(CrmSpec(IntervalSet([[0, 2]]), rate=DensityRate.ggamma(c=2.0),
                                  location_law=Pieces([[0, 2, 0.5]])), 20)
    prime = CrmSpec(UNIT, rate=AtomicRate([1.0, 2.0, 3.0], [0.8, 0.4, 0.1]),
                    location_law=Pieces([[0, 0.5, 1.5], [0.5, 1, 0.5]]),
                    fixed_atoms=[FixedAtom(0.25, FinitePmf([2 / 3, 1 / 3])),
                                 FixedAtom(0.75, FinitePmf([0.6, 0.3, 0.1], origin=1.0))])
    return {"compound": compound, "gamma": gamma, "prime": prime}


def criterion7_functions(domain):
    lo, hi = domain.bounds[0, 0], domain.bounds[-1, 1]
    mid = 0.5 * (lo + hi)
    return [
        Pieces([[lo, hi, 1.0]]),
        Pieces([[lo, mid, 2.0]]),
        Pieces([[lo, mid, 0.3], [mid, hi, 1.5]]),
        Pieces([[lo + 0.1 * (hi - lo), lo + 0.4 * (hi - lo), 0.7],
                [lo + 0.6 * (hi - lo), hi, 0.1]]),
        Pieces([[mid, hi, 4.0]]),
    ]


@pytest.mark.slow
def test_criterion_7_monte_carlo(criterion):
    start = time.perf_counter()
    reps = 100_000
    worst_z = worst_cov_z = 0.0
    for k, (name, spec) in enumerate(sorted(criterion7_specs().items())):
        batch = sample(spec, 700 + k, reps)
        for f in criterion7_functions(spec.domain):
            mean, se = empirical_laplace(batch, f)
            worst_z = max(worst_z, abs(mean - math.exp(-laplace_functional(spec, f))) / se)
        lo, hi = spec.domain.bounds[0, 0], spec.domain.bounds[-1, 1]
        mid = 0.5 * (lo + hi)
        a = batch.measure(IntervalSet([[lo, 0.45 * (lo + hi)]]))
        b = batch.measure(IntervalSet([[mid, hi]]))
        prod = (a - a.mean()) * (b - b.mean())
        worst_cov_z = max(worst_cov_z, abs(prod.mean()) / (prod.std(ddof=1) / math.sqrt(reps)))
    elapsed = time.perf_counter() - start
    ok = worst_z <= 3 and worst_cov_z <= 3 and elapsed <= 120
    criterion(7, "Monte Carlo vs analytic", ok,
              f"(max |z| Laplace {worst_z:.2f}, max |z| covariance {worst_cov_z:.2f}, "
              f"{elapsed:.1f}s)")
    assert ok


def _rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if np.any((b == 0) & (a != 0)):
        return math.inf
    nz = b != 0
    return float(np.max(np.abs(a[nz] - b[nz]) / np.abs(b[nz]), initial=0.0))


def _same_posterior(a, b, rtol=1e-12):
    la = {s.location: s.law for s in a.fixed_atoms}
    lb = {s.location: s.law for s in b.fixed_atoms}
    if la.keys() != lb.keys():
        return False, math.inf
    err = 0.0
    for s in la:
        if (la[s].origin, la[s].step, la[s].weights.size) != (lb[s].origin, lb[s].step,
                                                              lb[s].weights.size):
            return False, math.inf
        err = max(err, _rel_err(la[s].weights, lb[s].weights))
    if not np.array_equal(a.rate.locations, b.rate.locations):
        return False, math.inf
    err = max(err, _rel_err(a.rate.weights, b.rate.weights))
    return err <= rtol, err


def test_criterion_8_posterior_fixtures(criterion):
    prior = CrmSpec(UNIT, fixed_atoms=[FixedAtom(0.5, FinitePmf([0.5, 0.5], origin=1.0))])
    w = posterior(prior, [PointObservation(((0.5, 3),))], "poisson:1.0").fixed_atoms[0].law.weights
    fixture_err = float(np.max(np.abs(w - [0.2536, 0.7464])))

    thin_err = 0.0
    x = np.geomspace(1e-3, 30, 300)
    for lik in ("poisson:1.0", "poisson:0.3"):
        h = parse_likelihood(lik)
        for m in (1, 3, 7):
            d = DensityRate.ggamma(c=1.5, sigma=0.4, beta=0.8)
            thin_err = max(thin_err, float(np.max(np.abs(
                thin_rate(d, h, m).density(x) - d.density(x) * h.pmf(0, x) ** m))))
            a = AtomicRate([1.0, 2.0, 5.0], [0.7, 0.2, 0.4])
            thin_err = max(thin_err, float(np.max(np.abs(
                thin_rate(a, h, m).weights - a.weights * h.pmf(0, a.locations) ** m))))

    rng = np.random.default_rng(8)
    coherent, seq_err = 0, 0.0
    for _ in range(50):
        p = random_prime_prior(rng)
        data = random_observations(rng, p, int(rng.integers(2, 5)))
        k = int(rng.integers(1, len(data)))
        batch = posterior(p, data, "poisson:1.0")
        seq = posterior(posterior(p, data[:k], "poisson:1.0"), data[k:], "poisson:1.0")
        same, err = _same_posterior(batch, seq)
        coherent += same
        seq_err = max(seq_err, err)

    k = np.arange(1, 16)
    atomic = CrmSpec(UNIT, rate=AtomicRate(k / 4.0, 1.0 / k), location_law=UNIFORM)
    exact = True
    for n in (1, 2, 5, 10):
        data = random_observations(rng, atomic, 3)
        rep = posterior_truncation_consistency(atomic, n, data, "poisson:1.0")
        exact &= rep["equal"] and rep["max_rel_error"] == 0.0

    ok = fixture_err <= 1e-4 and thin_err <= 1e-14 and coherent == 50 and exact
    criterion(8, "posterior fixtures", ok,
              f"(fixture error {fixture_err:.1e}, thinning error {thin_err:.1e}, "
              f"coherent {coherent}/50 max rel {seq_err:.1e}, truncation exact {exact})")
    assert ok


def test_criterion_9_conjugacy_closure(criterion):
    rng = np.random.default_rng(9)
    passing, draws, closed, posts = 0, 0, True, 0
    liks = ("poisson:1.0", "binomial:0.4")
    while passing < 50 and draws < 2000:
        draws += 1
        lik = liks[draws % 2]
        prior = random_prime_prior(rng)
        if not conjugacy_check(prior, lik, 20).conjugate:
            continue
        passing += 1
        if lik.startswith("poisson"):
            data = random_observations(rng, prior, 4, max_x=20)
        else:  # binomial counts cannot exceed the weight, so draw them from the model
            data = [simulate_dataset(prior, lik, 1, int(rng.integers(2**31)))[0] for _ in range(4)]
        for obs in data:
            post = posterior(prior, [obs], lik)
            posts += 1
            closed &= all(classify_qid(a.law).status == QID for a in post.fixed_atoms)

    a1 = 8.0 / (8.0 + math.e)
    fixed_case = CrmSpec(UNIT, fixed_atoms=[
        FixedAtom(0.2, FinitePmf([0.6, 0.4], origin=1.0)),
        FixedAtom(0.5, FinitePmf([a1, 1 - a1], origin=1.0)),
    ])
    rate_case = CrmSpec(UNIT, rate=AtomicRate([1.0, 2.0], [a1, 1 - a1]), location_law=UNIFORM)
    # binomial(p): coefficient ratio a1 * h(x|1) / (a2 * h(x|2)) placed at 1 for x = 1
    p = 0.3
    b1 = 2 * (1 - p) / (1 + 2 * (1 - p))
    binom_case = CrmSpec(UNIT, fixed_atoms=[FixedAtom(0.4, FinitePmf([b1, 1 - b1], origin=1.0))])
    found = [
        [(e.component, e.k, e.x) for e in conjugacy_check(fixed_case, "poisson:1.0", 20).violations],
        [(e.component, e.k, e.x) for e in conjugacy_check(rate_case, "poisson:1.0", 20).violations],
        [(e.component, e.k, e.x) for e in conjugacy_check(binom_case, f"binomial:{p}", 20).violations],
    ]
    expected = [[("fixed", 1, 3)], [("rate", None, 3)], [("fixed", 0, 1)]]
    ok = passing == 50 and closed and found == expected
    criterion(9, "conjugacy closure", ok,
              f"({passing} conjugate priors from {draws} draws, {posts} posteriors all QID "
              f"{closed}; engineered violations {found})")
    assert ok
