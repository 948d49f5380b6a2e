"""scikit-learn style wrappers around the lattice, approximation and posterior routines."""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import bayes, crm
from .density_approx import IntervalSpec, approximate_sequence, cdf_from_atoms, perturb_to_qid
from .levy_metric import StepCdf
from .qid_lattice import QID, FinitePmf, char_fn, classify_qid, triplet_from_pmf


def _as_1d(X):
    x = np.asarray(X, dtype=float)
    if x.ndim == 2 and x.shape[1] == 1:
        x = x[:, 0]
    if x.ndim != 1 or x.size == 0:
        raise ValueError("expected a non-empty 1-d sample or a single-column matrix")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    return x


class LatticeQIDEstimator(BaseEstimator):
    """Empirical lattice pmf of a sample and its quasi-Levy triplet.

    Observations must lie on ``origin + step * Z``.  With ``perturb=True`` a
    non-QID empirical pmf is moved to a nearby QID pmf by root shifting.

    Attributes
    ----------
    pmf_ : FinitePmf
    verdict_ : QidVerdict
    triplet_ : QuasiLevyTriplet
    drift_ : float
    """

    def __init__(self, origin=0.0, step=1.0, eps_circle=1e-9, eps_tail=1e-12,
                 perturb=False, h0=1e-2):
        self.origin = origin
        self.step = step
        self.eps_circle = eps_circle
        self.eps_tail = eps_tail
        self.perturb = perturb
        self.h0 = h0

    def fit(self, X, y=None):
        x = _as_1d(X)
        k = (x - self.origin) / self.step
        idx = np.rint(k)
        if np.max(np.abs(k - idx)) > 1e-9:
            raise ValueError("observations are not on the lattice origin + step * Z")
        idx = idx.astype(int)
        lo = int(idx.min())
        counts = np.bincount(idx - lo)
        pmf = FinitePmf(counts / counts.sum(), self.origin + lo * self.step, self.step)
        verdict = classify_qid(pmf, self.eps_circle)
        if verdict.status != QID and self.perturb:
            pmf = perturb_to_qid(pmf, self.h0, eps_circle=self.eps_circle).pmf
            verdict = classify_qid(pmf, self.eps_circle)
        self.pmf_ = pmf
        self.verdict_ = verdict
        self.triplet_ = triplet_from_pmf(pmf, self.eps_circle, self.eps_tail)
        self.drift_ = self.triplet_.drift
        return self

    def char_fn(self, theta):
        check_is_fitted(self, "triplet_")
        return char_fn(self.triplet_, theta)

    def score(self, X, y=None):
        """Mean log-probability of ``X`` under the fitted pmf (``-inf`` off support)."""
        check_is_fitted(self, "pmf_")
        x = _as_1d(X)
        k = np.rint((x - self.pmf_.origin) / self.pmf_.step).astype(int)
        ok = (k >= 0) & (k < self.pmf_.weights.size)
        p = np.where(ok, self.pmf_.weights[np.clip(k, 0, self.pmf_.weights.size - 1)], 0.0)
        with np.errstate(divide="ignore"):
            return float(np.mean(np.log(p)))


class QIDApproximator(TransformerMixin, BaseEstimator):
    """QID approximant of the empirical law of a real sample.

    ``fit`` runs the lattice approximation sequence up to level ``n`` on
    ``interval`` (default: the closed sample range); ``transform`` evaluates
    the distribution function of the level-``n`` approximant.
    """

    def __init__(self, n=8, interval=None, h0=0.1, t_max=40, eps_circle=1e-9):
        self.n = n
        self.interval = interval
        self.h0 = h0
        self.t_max = t_max
        self.eps_circle = eps_circle

    def fit(self, X, y=None):
        x = _as_1d(X)
        values, counts = np.unique(x, return_counts=True)
        cdf = cdf_from_atoms(values, counts / counts.sum())
        interval = self.interval
        if interval is None:
            lo, hi = float(values[0]), float(values[-1])
            if lo == hi:
                lo, hi = lo - 0.5, hi + 0.5
            interval = IntervalSpec.closed(lo, hi)
        elif isinstance(interval, str):
            interval = IntervalSpec.parse(interval)
        self.rows_ = approximate_sequence(cdf, interval, self.n, h0=self.h0, t_max=self.t_max,
                                          eps_circle=self.eps_circle)
        self.approximant_ = self.rows_[-1].approximant
        self.cdf_ = StepCdf.from_measure(self.approximant_)
        return self

    def transform(self, X):
        check_is_fitted(self, "cdf_")
        x = _as_1d(X)
        return self.cdf_(x).reshape(-1, 1)


class CRMPosterior(BaseEstimator):
    """Posterior of a CRM prior given point observations.

    ``fit`` takes a list of :class:`~qidrm.bayes.PointObservation` (or their
    ``[{"psi": .., "x": ..}]`` list form), one per individual.
    """

    def __init__(self, prior=None, likelihood="poisson:1.0", check_conjugacy=False,
                 x_max=None, eps_circle=1e-9):
        self.prior = prior
        self.likelihood = likelihood
        self.check_conjugacy = check_conjugacy
        self.x_max = x_max
        self.eps_circle = eps_circle

    def fit(self, X, y=None):
        if self.prior is None:
            raise ValueError("a prior CrmSpec is required")
        obs = [o if isinstance(o, bayes.PointObservation) else bayes.PointObservation.from_list(o)
               for o in X]
        self.n_individuals_ = len(obs)
        self.posterior_ = bayes.posterior(self.prior, obs, self.likelihood)
        if self.check_conjugacy:
            x_max = self.x_max
            if x_max is None:
                x_max = max((x for o in obs for _, x in o.atoms), default=0) + 5
            self.conjugacy_ = bayes.conjugacy_check(self.prior, self.likelihood, x_max,
                                                    self.eps_circle)
        return self

    def laplace_functional(self, f):
        check_is_fitted(self, "posterior_")
        return crm.laplace_functional(self.posterior_, f)
