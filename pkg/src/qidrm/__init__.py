"""Quasi-infinitely divisible lattice laws and completely random measures."""

from .bayes import (
    BinomialLikelihood,
    ConjugacyReport,
    PointObservation,
    PoissonLikelihood,
    TableLikelihood,
    conjugacy_check,
    parse_likelihood,
    posterior,
    posterior_truncation_consistency,
    simulate_dataset,
)
from .crm import (
    CrmSpec,
    FixedAtom,
    char_fn_crm,
    empirical_laplace,
    laplace_functional,
    sample,
    truncate_spec,
    truncation_gap,
    validate_spec,
)
from .density_approx import (
    IntervalSpec,
    approximate_sequence,
    builtin_cdf,
    discretize,
    perturb_to_qid,
    zplus_truncate,
)
from .estimators import CRMPosterior, LatticeQIDEstimator, QIDApproximator
from .exceptions import *  # noqa: F401,F403
from .levy_metric import StepCdf, levy_distance
from .pieces import IntervalSet, Pieces
from .qid_lattice import (
    FinitePmf,
    QuasiLevyTriplet,
    char_fn,
    classify_qid,
    find_roots,
    triplet_from_pmf,
    triplet_to_pmf,
)
from .rates import AtomicRate, DensityRate
from .signed_measure import LatticeSignedMeasure, conv_exp, is_measure

__version__ = "0.1.0"
