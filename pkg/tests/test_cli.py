import json

import pytest

from qidrm.cli import RunConfig, UsageError, canonical_json, main
from qidrm.crm import CrmSpec

PRIOR = {
    "domain": [[0.0, 1.0]],
    "fixed_atoms": [{"law": {"origin": 1.0, "step": 1.0, "weights": [0.5, 0.5]}, "location": 0.5}],
    "gamma": [],
    "location_law": [[0.0, 1.0, 1.0]],
    "rate": {"kind": "atoms", "locations": [1.0, 2.0], "weights": [0.5, 0.3]},
}
QID_PRIOR = dict(PRIOR, fixed_atoms=[
    {"law": {"origin": 1.0, "step": 1.0, "weights": [0.75, 0.25]}, "location": 0.5}])
DENSITY_SPEC = {
    "domain": [[0.0, 1.0]],
    "fixed_atoms": [],
    "gamma": [],
    "location_law": [[0.0, 1.0, 1.0]],
    "rate": {"kind": "density", "family": "ggamma", "params": {"c": 1.0, "sigma": 0.0, "beta": 1.0}},
}


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(obj if isinstance(obj, str) else json.dumps(obj))
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_crm_rejects_non_qid_fixed_atom(tmp_path, capsys):
    code, _, err = run(capsys, "crm", "truncate", "--spec", write(tmp_path, "p.json", PRIOR),
                       "--n", "2")
    assert code == 2 and json.loads(err)["error"] == "SpecInvalid"


def test_analyze_fixture(capsys):
    code, out, _ = run(capsys, "qid", "analyze", "--weights", "0.6666666666666666,0.3333333333333333")
    assert code == 0
    doc = json.loads(out)
    assert doc["verdict"] == "QID" and doc["drift"] == 0.0
    assert doc["qlm"]["1"] == pytest.approx(0.5, abs=1e-12)
    assert doc["qlm"]["2"] == pytest.approx(-0.125, abs=1e-12)


def test_analyze_not_qid(capsys):
    code, out, err = run(capsys, "qid", "analyze", "--weights", "0.5,0.5")
    assert code == 2 and out == ""
    diag = json.loads(err)
    assert diag["error"] == "NotQidError" and diag["verdict"] == "NotQID"
    assert diag["witness"][0] == pytest.approx(-1.0) and diag["witness"][1] == pytest.approx(0.0, abs=1e-12)


def test_analyze_reconstruct_round_trip(tmp_path, capsys):
    out_file = tmp_path / "a.json"
    assert main(["qid", "analyze", "--weights", "0.2,0.3,0.5", "--origin", "-1",
                 "--out", str(out_file)]) == 0
    code, out, _ = run(capsys, "qid", "reconstruct", "--triplet", str(out_file))
    assert code == 0
    pmf = json.loads(out)
    assert pmf["origin"] == pytest.approx(-1.0)
    assert pmf["weights"] == pytest.approx([0.2, 0.3, 0.5], abs=1e-10)


def test_approx_writes_artifacts(tmp_path, capsys):
    code, out, _ = run(capsys, "approx", "--cdf", "builtin:uniform01", "--n", "3",
                       "--out-dir", str(tmp_path / "seq"))
    assert code == 0
    lines = out.strip().splitlines()
    assert lines[0] == "n,h,eta,rho_n,rho_ref,verdict" and len(lines) == 4
    assert all(line.endswith("QID") for line in lines[1:])
    files = sorted(p.name for p in (tmp_path / "seq").iterdir())
    assert "approximant_n003.json" in files and "sequence.csv" in files
    assert (tmp_path / "seq" / "sequence.csv").read_text() == out


def test_metrics_levy(tmp_path, capsys):
    f = write(tmp_path, "f.json", {"origin": 0, "step": 1, "weights": [0.5, 0.5]})
    g = write(tmp_path, "g.json", {"atoms": [[0, 1 / 3], [1, 1 / 3], [2, 1 / 3]]})
    code, out, _ = run(capsys, "metrics", "levy", "--F", f, "--G", g, "--tol", "1e-10")
    assert code == 0
    assert json.loads(out)["rho"] == pytest.approx(1 / 3, abs=2e-10)


def test_crm_commands(tmp_path, capsys):
    spec = write(tmp_path, "spec.json", DENSITY_SPEC)
    fn = write(tmp_path, "f.json", [[0.0, 1.0, 1.0]])
    code, out, _ = run(capsys, "crm", "laplace", "--spec", spec, "--f", fn, "--n", "4")
    assert code == 0
    doc = json.loads(out)
    assert doc["neg_log_laplace"] == pytest.approx(0.6931471805599453, rel=1e-8)
    assert doc["truncation_gap"] > 0
    code, out, _ = run(capsys, "crm", "truncate", "--spec", spec, "--n", "4")
    assert code == 0 and CrmSpec.from_dict(json.loads(out)).rate.total_mass() < float("inf")
    code, out, _ = run(capsys, "crm", "simulate", "--spec", spec, "--n", "3", "--seed", "7",
                       "--count", "5")
    assert code == 0 and len(out.strip().splitlines()) == 5
    assert run(capsys, "crm", "simulate", "--spec", spec, "--n", "3", "--seed", "7",
               "--count", "5")[1] == out


def test_bayes_posterior_and_empty_data(tmp_path, capsys):
    prior = write(tmp_path, "prior.json", PRIOR)
    empty = write(tmp_path, "empty.json", [])
    code, out, _ = run(capsys, "bayes", "posterior", "--prior", prior, "--obs", empty,
                       "--lik", "poisson:1.0")
    assert code == 0 and out.strip() == canonical_json(PRIOR)
    data = write(tmp_path, "obs.json", [[{"psi": 0.5, "x": 3}]])
    code, out, _ = run(capsys, "bayes", "posterior", "--prior", prior, "--obs", data,
                       "--lik", "poisson:1.0")
    assert code == 0
    w = json.loads(out)["fixed_atoms"][0]["law"]["weights"]
    assert w == pytest.approx([0.2536, 0.7464], abs=1e-4)


def test_bayes_degenerate_is_domain_error(tmp_path, capsys):
    spec = dict(PRIOR, rate={"kind": "atoms", "locations": [], "weights": []}, location_law=None)
    prior = write(tmp_path, "prior.json", spec)
    data = write(tmp_path, "obs.json", [[{"psi": 0.25, "x": 1}]])
    code, _, err = run(capsys, "bayes", "posterior", "--prior", prior, "--obs", data,
                       "--lik", "poisson:1.0")
    assert code == 2 and json.loads(err)["error"] == "DegeneratePosterior"


def test_bayes_conjugacy_formats(tmp_path, capsys):
    prior = write(tmp_path, "prior.json", PRIOR)
    code, out, _ = run(capsys, "bayes", "conjugacy", "--prior", prior, "--lik", "poisson:1.0",
                       "--xmax", "6")
    assert code == 0
    doc = json.loads(out)
    assert doc["x_max"] == 6 and isinstance(doc["conjugate"], bool)
    code, out, _ = run(capsys, "bayes", "conjugacy", "--prior", prior, "--lik", "poisson:1.0",
                       "--xmax", "6", "--format", "csv")
    assert code == 0 and out.startswith("component,k,x,status,min_distance\n")
    obs = write(tmp_path, "obs.json", [[{"psi": 0.5, "x": 4}]])
    code, out, _ = run(capsys, "bayes", "conjugacy", "--prior", prior, "--lik", "poisson:1.0",
                       "--obs", obs)
    assert json.loads(out)["x_max"] == 9


def test_bayes_simulate_deterministic(tmp_path, capsys):
    prior = write(tmp_path, "prior.json", PRIOR)
    args = ("bayes", "simulate", "--prior", prior, "--lik", "poisson:1.0", "--m", "4", "--seed", "3")
    code, first, _ = run(capsys, *args)
    assert code == 0 and len(json.loads(first)) == 4
    assert run(capsys, *args)[1] == first


def test_likelihood_table_file(tmp_path, capsys):
    prior = write(tmp_path, "prior.json", PRIOR)
    lik = write(tmp_path, "lik.json", {"table": {"0": [1.0], "1": [0.5, 0.5], "2": [0.2, 0.3, 0.5]}})
    code, out, _ = run(capsys, "bayes", "conjugacy", "--prior", prior, "--lik", lik, "--xmax", "2")
    assert code == 0


def test_emit_parse_round_trips(tmp_path, capsys):
    prior = write(tmp_path, "prior.json", QID_PRIOR)
    spec_out = tmp_path / "trunc.json"
    assert main(["crm", "truncate", "--spec", prior, "--n", "2", "--out", str(spec_out)]) == 0
    assert main(["crm", "truncate", "--spec", str(spec_out), "--n", "2",
                 "--out", str(tmp_path / "again.json")]) == 0
    assert spec_out.read_text() == (tmp_path / "again.json").read_text()
    sim = tmp_path / "sim.json"
    assert main(["bayes", "simulate", "--prior", prior, "--lik", "poisson:1.0", "--m", "3",
                 "--seed", "1", "--out", str(sim)]) == 0
    code, out, _ = run(capsys, "bayes", "posterior", "--prior", prior, "--obs", str(sim),
                       "--lik", "poisson:1.0")
    assert code == 0
    post = tmp_path / "post.json"
    post.write_text(out)
    assert canonical_json(CrmSpec.from_dict(json.loads(out)).to_dict()) == out.strip()


def test_usage_and_io_errors(tmp_path, capsys):
    assert run(capsys, "qid", "frobnicate")[0] == 1
    assert run(capsys)[0] == 1
    assert run(capsys, "crm", "truncate", "--spec", str(tmp_path / "missing.json"), "--n", "2")[0] == 1
    bad = write(tmp_path, "bad.json", "{not json")
    code, _, err = run(capsys, "crm", "truncate", "--spec", bad, "--n", "2")
    assert code == 1 and "invalid JSON" in json.loads(err)["message"]
    assert run(capsys, "crm", "truncate", "--spec", bad, "--n", "0")[0] == 1


def test_spec_invalid_is_domain_error(tmp_path, capsys):
    spec = dict(DENSITY_SPEC, location_law=[[0.0, 2.0, 0.5]])
    path = write(tmp_path, "spec.json", spec)
    fn = write(tmp_path, "f.json", [[0.0, 1.0, 1.0]])
    code, _, err = run(capsys, "crm", "laplace", "--spec", path, "--f", fn)
    assert code == 2 and json.loads(err)["error"] == "SpecInvalid"


def test_config_toml(tmp_path, capsys):
    cfg = write(tmp_path, "run.toml", "seed = 5\n[tolerances]\neps_circle = 1e-6\n")
    assert RunConfig.from_toml(cfg) == RunConfig(eps_circle=1e-6, seed=5)
    prior = write(tmp_path, "prior.json", PRIOR)
    base = ("bayes", "simulate", "--prior", prior, "--lik", "poisson:1.0", "--m", "3")
    assert run(capsys, *base, "--config", cfg)[1] == run(capsys, *base, "--seed", "5")[1]
    bad = write(tmp_path, "bad.toml", "eps_circle = -1.0\n")
    assert run(capsys, *base, "--config", bad)[0] == 1
    unknown = write(tmp_path, "unknown.toml", "colour = 'red'\n")
    with pytest.raises(UsageError):
        RunConfig.from_toml(unknown)


def test_canonical_json_is_stable():
    doc = {"b": [0.1, 1e-300, 2.0], "a": {"z": 1, "y": float("inf")}}
    text = canonical_json(doc)
    assert text == '{"a":{"y":"inf","z":1},"b":[0.1,1e-300,2.0]}'
    assert canonical_json(json.loads(text)) == text
