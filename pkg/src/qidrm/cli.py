"""Command-line entry point.

Exit codes: 0 on success, 1 for usage, I/O and parse errors, 2 for domain
errors.  Domain errors are reported on stderr as one JSON object carrying
the error class name.  Every JSON document is written canonically (sorted
keys, compact separators, shortest round-trip floats) so identical inputs
give byte-identical outputs.
"""

import argparse
import csv
import io
import json
import math
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

from . import bayes, crm, density_approx, levy_metric, qid_lattice
from .exceptions import DomainError, NotQidError
from .pieces import Pieces


class UsageError(Exception):
    """Bad command line, unreadable file or malformed document."""


@dataclass
class RunConfig:
    eps_circle: float = 1e-9
    eps_tail: float = 1e-12
    eps_series: float = 1e-12
    metric_tol: float = 1e-9
    seed: int = 0

    def __post_init__(self):
        for f in fields(self):
            if f.name != "seed" and not float(getattr(self, f.name)) > 0:
                raise UsageError(f"tolerance {f.name} must be > 0")

    @classmethod
    def from_toml(cls, path):
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
        flat = {}
        for key, value in raw.items():
            if isinstance(value, dict):
                flat.update(value)
            else:
                flat[key] = value
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(flat) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {unknown}")
        return cls(**flat)


# ---------------------------------------------------------------- JSON I/O

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isfinite(x):
            return x
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    if isinstance(obj, complex):
        return [_plain(obj.real), _plain(obj.imag)]
    return obj


def canonical_json(obj):
    return json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def _load_json(path):
    try:
        if path == "-":
            return json.load(sys.stdin)
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None


def _emit(text, out=None):
    if not text.endswith("\n"):
        text += "\n"
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _loc_key(x):
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def _csv_text(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v
                         for v in row])
    return buf.getvalue()


def _read_pmf(args):
    if args.weights is not None:
        try:
            w = [float(t) for t in args.weights.split(",")]
        except ValueError:
            raise UsageError(f"cannot parse weights {args.weights!r}") from None
        return qid_lattice.FinitePmf(w, args.origin, args.step)
    if args.pmf is None:
        raise UsageError("give --pmf FILE or --weights LIST")
    data = _load_json(args.pmf)
    if isinstance(data, list):
        data = {"weights": data}
    if "pmf" in data:
        data = data["pmf"]
    return qid_lattice.FinitePmf.from_dict(data)


def _read_cdf(path):
    """A finitely supported law as :class:`StepCdf` (pmf or atom-list JSON)."""
    data = _load_json(path)
    if isinstance(data, dict) and "atoms" in data:
        return levy_metric.StepCdf.from_dict(data)
    if isinstance(data, dict) and "pmf" in data:
        data = data["pmf"]
    return levy_metric.StepCdf.from_measure(qid_lattice.FinitePmf.from_dict(data))


def _read_spec(path, cfg=None):
    """Parse a spec; with ``cfg`` also run every validation clause."""
    spec = crm.CrmSpec.from_dict(_load_json(path))
    if cfg is not None:
        crm.validate_spec(spec, cfg.eps_circle, cfg.eps_tail)
    return spec


def _read_function(path):
    data = _load_json(path)
    if isinstance(data, dict):
        data = data.get("pieces", data.get("f"))
    return Pieces(data)


def _read_observations(path):
    data = _load_json(path)
    if not isinstance(data, list):
        raise UsageError("observations must be a list of per-individual atom lists")
    return [bayes.PointObservation.from_list(items) for items in data]


def _read_likelihood(text):
    if text.endswith(".json") or os.path.isfile(text):
        return bayes.parse_likelihood(_load_json(text))
    return bayes.parse_likelihood(text)


# ---------------------------------------------------------------- commands

def cmd_qid_analyze(args, cfg):
    pmf = _read_pmf(args)
    verdict = qid_lattice.classify_qid(pmf, cfg.eps_circle)
    if verdict.status != qid_lattice.QID:
        exc = NotQidError(f"pmf is {verdict.status}", witness=verdict.witness)
        exc.verdict = verdict.status
        raise exc
    trip = qid_lattice.triplet_from_pmf(pmf, cfg.eps_circle, cfg.eps_tail)
    q = trip.qlm
    masses = {_loc_key(x): w for x, w in zip(q.locations, q.weights) if w != 0.0}
    _emit(canonical_json({
        "verdict": verdict.status,
        "drift": trip.drift,
        "qlm": masses,
        "min_circle_distance": verdict.distance,
        "roots": verdict.roots.to_list(),
        "pmf": pmf.to_dict(),
        "triplet": trip.to_dict(),
    }), args.out)


def cmd_qid_reconstruct(args, cfg):
    data = _load_json(args.triplet)
    if "triplet" in data:
        data = data["triplet"]
    trip = qid_lattice.QuasiLevyTriplet.from_dict(data)
    pmf = qid_lattice.triplet_to_pmf(trip, cfg.eps_series)
    _emit(canonical_json(pmf.to_dict()), args.out)


def cmd_approx(args, cfg):
    if args.cdf.startswith("builtin:"):
        cdf, interval = density_approx.builtin_cdf(args.cdf.split(":", 1)[1])
    else:
        data = _load_json(args.cdf)
        if "builtin" in data:
            cdf, interval = density_approx.builtin_cdf(data["builtin"])
        else:
            atoms = np.asarray(data["atoms"], dtype=float).reshape(-1, 2)
            cdf, interval = density_approx.cdf_from_atoms(atoms[:, 0], atoms[:, 1]), None
    if args.interval is not None:
        interval = density_approx.IntervalSpec.parse(args.interval)
    if interval is None:
        raise UsageError("--interval is required for a file cdf")
    rows = density_approx.approximate_sequence(
        cdf, interval, args.n, h0=args.h0, t_max=args.t_max, eps_circle=cfg.eps_circle,
        metric_tol=cfg.metric_tol)
    header = ["n", "h", "eta", "rho_n", "rho_ref", "verdict"]
    table = _csv_text([header] + [[r.as_record()[k] for k in header] for r in rows])
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
        for r in rows:
            _emit(canonical_json(r.approximant.to_dict()),
                  os.path.join(args.out_dir, f"approximant_n{r.n:03d}.json"))
            _emit(canonical_json(r.discretized.to_dict()),
                  os.path.join(args.out_dir, f"discretized_n{r.n:03d}.json"))
        _emit(table, os.path.join(args.out_dir, "sequence.csv"))
    _emit(table)


def cmd_metrics_levy(args, cfg):
    F, G = _read_cdf(args.F), _read_cdf(args.G)
    rho = levy_metric.levy_distance(F, G, cfg.metric_tol)
    _emit(canonical_json({"rho": rho, "tol": cfg.metric_tol}), args.out)


def cmd_crm_simulate(args, cfg):
    spec = _read_spec(args.spec, cfg)
    if args.n is not None:
        spec = crm.truncate_spec(spec, args.n)
    seed = cfg.seed if args.seed is None else args.seed
    batch = crm.sample(spec, seed, args.count)
    lines = [canonical_json(s.to_dict()["atoms"]) for s in batch]
    _emit("\n".join(lines), args.out)


def cmd_crm_laplace(args, cfg):
    spec = _read_spec(args.spec, cfg)
    f = _read_function(args.f)
    value = crm.laplace_functional(spec, f)
    out = {"neg_log_laplace": value, "laplace": math.exp(-value)}
    if args.n is not None:
        out["n"] = args.n
        out["truncation_gap"] = crm.truncation_gap(spec, args.n, f)
    _emit(canonical_json(out), args.out)


def cmd_crm_truncate(args, cfg):
    spec = _read_spec(args.spec, cfg)
    _emit(canonical_json(crm.truncate_spec(spec, args.n).to_dict()), args.out)


def cmd_bayes_posterior(args, cfg):
    raw = _load_json(args.prior)
    prior = crm.CrmSpec.from_dict(raw)
    obs = _read_observations(args.obs)
    lik = _read_likelihood(args.lik)
    if not obs:
        # the empty product leaves the prior untouched
        _emit(canonical_json(raw), args.out)
        return
    _emit(canonical_json(bayes.posterior(prior, obs, lik).to_dict()), args.out)


def cmd_bayes_conjugacy(args, cfg):
    prior = _read_spec(args.prior)
    lik = _read_likelihood(args.lik)
    x_max = args.xmax
    if x_max is None:
        if args.obs is None:
            x_max = 20
        else:
            counts = [x for o in _read_observations(args.obs) for _, x in o.atoms]
            x_max = max(counts, default=0) + 5
    report = bayes.conjugacy_check(prior, lik, x_max, cfg.eps_circle)
    if args.format == "csv":
        _emit(_csv_text(report.to_csv_rows()), args.out)
    else:
        _emit(canonical_json(report.to_dict()), args.out)


def cmd_bayes_simulate(args, cfg):
    prior = _read_spec(args.prior)
    lik = _read_likelihood(args.lik)
    seed = cfg.seed if args.seed is None else args.seed
    obs = bayes.simulate_dataset(prior, lik, args.m, seed)
    _emit(canonical_json([o.to_list() for o in obs]), args.out)


# ---------------------------------------------------------------- parser

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _nonneg_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _add_common(p, *tols):
    p.add_argument("--config", help="TOML file with tolerances and seed")
    p.add_argument("--out", help="output file (default: stdout)")
    for name in tols:
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=float, default=None)


def build_parser():
    parser = _Parser(prog="qidrm", description=__doc__.splitlines()[0])
    top = parser.add_subparsers(dest="group", required=True, parser_class=_Parser)

    qid = top.add_parser("qid", help="lattice pmf triplets").add_subparsers(
        dest="command", required=True, parser_class=_Parser)
    p = qid.add_parser("analyze", help="classify a pmf and extract its triplet")
    p.add_argument("--pmf", help="pmf JSON {origin, step, weights} or a weight list")
    p.add_argument("--weights", help="comma separated weights (alternative to --pmf)")
    p.add_argument("--origin", type=float, default=0.0)
    p.add_argument("--step", type=float, default=1.0)
    _add_common(p, "eps_circle", "eps_tail")
    p.set_defaults(func=cmd_qid_analyze)
    p = qid.add_parser("reconstruct", help="pmf from a triplet")
    p.add_argument("--triplet", required=True, help="triplet JSON or the output of qid analyze")
    _add_common(p, "eps_series")
    p.set_defaults(func=cmd_qid_reconstruct)

    p = top.add_parser("approx", help="QID approximation sequence of a distribution")
    p.add_argument("--cdf", required=True, help="builtin:NAME or a JSON file with atoms")
    p.add_argument("--interval", help="support interval such as [0,1] or [0,inf)")
    p.add_argument("--n", type=_positive_int, default=8, help="levels 1..n")
    p.add_argument("--h0", type=float, default=0.1)
    p.add_argument("--t-max", dest="t_max", type=_positive_int, default=40)
    p.add_argument("--out-dir", dest="out_dir", help="write approximant pmfs and the CSV here")
    _add_common(p, "eps_circle", "metric_tol")
    p.set_defaults(func=cmd_approx)

    metrics = top.add_parser("metrics", help="distances between laws").add_subparsers(
        dest="command", required=True, parser_class=_Parser)
    p = metrics.add_parser("levy", help="Levy distance of two finitely supported laws")
    p.add_argument("--f", "--F", dest="F", required=True, help="first law (pmf or atom JSON)")
    p.add_argument("--g", "--G", dest="G", required=True, help="second law")
    p.add_argument("--tol", dest="metric_tol", type=float, default=None)
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_metrics_levy)

    crm_p = top.add_parser("crm", help="completely random measures").add_subparsers(
        dest="command", required=True, parser_class=_Parser)
    p = crm_p.add_parser("simulate", help="NDJSON replicates")
    p.add_argument("--spec", required=True)
    p.add_argument("--seed", type=_nonneg_int)
    p.add_argument("--count", type=_nonneg_int, default=1)
    p.add_argument("--n", type=_positive_int, help="truncate at level n first")
    _add_common(p)
    p.set_defaults(func=cmd_crm_simulate)
    p = crm_p.add_parser("laplace", help="Laplace functional of a piecewise-constant f")
    p.add_argument("--spec", required=True)
    p.add_argument("--f", required=True, help="JSON list of [a, b, value] pieces")
    p.add_argument("--n", type=_positive_int, help="also report the truncation gap at level n")
    _add_common(p)
    p.set_defaults(func=cmd_crm_laplace)
    p = crm_p.add_parser("truncate", help="finite truncation at level n")
    p.add_argument("--spec", required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_crm_truncate)

    bay = top.add_parser("bayes", help="posterior updates").add_subparsers(
        dest="command", required=True, parser_class=_Parser)
    p = bay.add_parser("posterior")
    p.add_argument("--prior", required=True)
    p.add_argument("--obs", required=True)
    p.add_argument("--lik", required=True, help="poisson:c, binomial:p or a table JSON file")
    _add_common(p)
    p.set_defaults(func=cmd_bayes_posterior)
    p = bay.add_parser("conjugacy")
    p.add_argument("--prior", required=True)
    p.add_argument("--lik", required=True)
    p.add_argument("--xmax", type=_positive_int)
    p.add_argument("--obs", help="observations; x_max defaults to their largest count + 5")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    _add_common(p, "eps_circle")
    p.set_defaults(func=cmd_bayes_conjugacy)
    p = bay.add_parser("simulate")
    p.add_argument("--prior", required=True)
    p.add_argument("--lik", required=True)
    p.add_argument("--m", type=_nonneg_int, required=True)
    p.add_argument("--seed", type=_nonneg_int)
    _add_common(p)
    p.set_defaults(func=cmd_bayes_simulate)
    return parser


def _config(args):
    cfg = RunConfig.from_toml(args.config) if getattr(args, "config", None) else RunConfig()
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None and f.name != "seed":
            setattr(cfg, f.name, value)
    RunConfig.__post_init__(cfg)
    return cfg


def _diagnostics(exc):
    out = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, NotQidError):
        out["verdict"] = getattr(exc, "verdict", qid_lattice.NOT_QID)
        if exc.witness is not None:
            out["witness"] = complex(exc.witness)
    distances = getattr(exc, "distances", None)
    if distances:
        out["distances"] = [list(d) for d in distances]
    return canonical_json(out)


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        cfg = _config(args)
        args.func(args, cfg)
    except DomainError as exc:
        sys.stderr.write(_diagnostics(exc) + "\n")
        return 2
    except (UsageError, OSError, ValueError, KeyError, TypeError) as exc:
        sys.stderr.write(canonical_json({"error": type(exc).__name__, "message": str(exc)}) + "\n")
        return 1
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
