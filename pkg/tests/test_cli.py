"""End-to-end tests for the command-line interface."""

import json

import numpy as np
import pytest

from blockmix.cli import main
from blockmix.engine import FitConfig, fit_from_alpha, init_random
from blockmix.models import TabularBlockModel, model_to_dict
from blockmix.network import (
    binary_alphabet,
    load_edge_list,
    make_dyad_alphabet,
    save_edge_list,
    signed_alphabet,
)
from blockmix.simulator import SimSpec, sample_network


def _write_planted_network(path, seed=1, n=150):
    da = make_dyad_alphabet(binary_alphabet(), directed=False)
    b = da.baseline_index
    pi = np.zeros((2, 2, 2))
    pi[1 - b] = [[0.3, 0.01], [0.01, 0.3]]
    pi[b] = 1.0 - pi[1 - b]
    truth = TabularBlockModel(2, da, pi)
    net, z = sample_network(SimSpec(n=n, gamma=np.array([0.6, 0.4]),
                                    model=truth, seed=seed, relabel=True))
    with open(path, "w") as handle:
        save_edge_list(net, handle)
    return net, z


def _write_model_json(path, model, gamma=None):
    doc = model_to_dict(model)
    if gamma is not None:
        doc["gamma"] = list(gamma)
    with open(path, "w") as handle:
        json.dump(doc, handle)


# --------------------------------------------------------------------- fit


def test_fit_k1_memberships_all_one(tmp_path):
    net_path = tmp_path / "net.tsv"
    with open(net_path, "w") as handle:
        handle.write("#n=3\n#directed=1\n0\t1\t1\n")
    out = tmp_path / "out"
    code = main(["fit", "--input", str(net_path), "--model", "tabular",
                 "--K", "1", "--alphabet", "binary", "--out", str(out)])
    assert code == 0
    lines = (out / "memberships.csv").read_text().splitlines()
    assert lines[0] == "node_id,alpha_0,hard_assignment"
    for i, line in enumerate(lines[1:]):
        assert line == f"{i},1.0,0"


def test_fit_reports_best_restart_lb(tmp_path):
    net_path = tmp_path / "net.tsv"
    net, _ = _write_planted_network(net_path)
    out = tmp_path / "out"
    code = main(["fit", "--input", str(net_path), "--model", "tabular",
                 "--K", "2", "--alphabet", "binary", "--directed", "0",
                 "--restarts", "5", "--max-sweeps", "300", "--seed", "3",
                 "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "fit.json").read_text())
    # oracle: replay each restart separately with the engine's seed splitting
    seeds = np.random.SeedSequence(3).spawn(5)
    lbs = []
    for seq in seeds:
        alpha0 = init_random(net.n, 2, seq)
        one = fit_from_alpha(net, TabularBlockModel.uniform(2, net.alphabet),
                             alpha0, FitConfig(max_sweeps=300))
        lbs.append(one.lb)
    assert doc["lb"] == pytest.approx(max(lbs), abs=1e-9)


def test_fit_missing_k_is_usage_error(tmp_path):
    net_path = tmp_path / "net.tsv"
    net_path.write_text("#n=2\n#directed=1\n")
    with pytest.raises(SystemExit) as exc:
        main(["fit", "--input", str(net_path), "--model", "tabular",
              "--out", str(tmp_path / "out")])
    assert exc.value.code == 64


def test_fit_unreadable_input(tmp_path):
    code = main(["fit", "--input", str(tmp_path / "missing.tsv"),
                 "--model", "tabular", "--K", "1",
                 "--out", str(tmp_path / "out")])
    assert code == 66


def test_fit_exit_2_on_budget_exhaustion(tmp_path):
    net_path = tmp_path / "net.tsv"
    _write_planted_network(net_path)
    code = main(["fit", "--input", str(net_path), "--model", "tabular",
                 "--K", "2", "--alphabet", "binary", "--directed", "0",
                 "--max-sweeps", "3", "--rel-tol", "0.0",
                 "--out", str(tmp_path / "out")])
    assert code == 2


def test_fit_config_file_precedence(tmp_path):
    net_path = tmp_path / "net.tsv"
    net_path.write_text("#n=4\n#directed=1\n0\t1\t1\n")
    cfg = tmp_path / "run.cfg"
    cfg.write_text("seed=5\nmax-sweeps=7\n")
    out1 = tmp_path / "o1"
    main(["fit", "--input", str(net_path), "--model", "tabular", "--K", "1",
          "--alphabet", "binary", "--config", str(cfg), "--out", str(out1)])
    m1 = json.loads((out1 / "manifest.json").read_text())
    assert m1["config"]["seed"] == 5 and m1["config"]["max_sweeps"] == 7
    out2 = tmp_path / "o2"
    main(["fit", "--input", str(net_path), "--model", "tabular", "--K", "1",
          "--alphabet", "binary", "--config", str(cfg), "--seed", "9",
          "--out", str(out2)])
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m2["config"]["seed"] == 9  # flag beats config file


def test_fit_manifest_contents(tmp_path):
    net_path = tmp_path / "net.tsv"
    net_path.write_text("#n=3\n#directed=1\n0\t1\t1\n")
    out = tmp_path / "out"
    main(["fit", "--input", str(net_path), "--model", "tabular", "--K", "1",
          "--alphabet", "binary", "--seed", "4", "--out", str(out)])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "fit"
    assert manifest["seed"] == 4
    assert str(net_path) in manifest["input_digests"]
    assert manifest["tool_version"]


# ---------------------------------------------------------------- simulate


def test_simulate_all_baseline_writes_header_only(tmp_path):
    da = make_dyad_alphabet(binary_alphabet(), directed=False)
    pi = np.zeros((2, 1, 1))
    pi[da.baseline_index] = 1.0
    params = tmp_path / "model.json"
    _write_model_json(params, TabularBlockModel(1, da, pi))
    out = tmp_path / "out"
    code = main(["simulate", "--params", str(params), "--n", "6",
                 "--out", str(out)])
    assert code == 0
    assert (out / "network.tsv").read_text() == "#n=6\n#directed=0\n"
    truth = (out / "memberships.csv").read_text().splitlines()
    assert truth[0] == "node_id,component" and len(truth) == 7


def test_simulate_deterministic(tmp_path):
    da = make_dyad_alphabet(signed_alphabet(), directed=True)
    rng = np.random.default_rng(0)
    from helpers import random_tabular
    model = random_tabular(2, da, rng)
    params = tmp_path / "model.json"
    _write_model_json(params, model, gamma=[0.4, 0.6])
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["simulate", "--params", str(params), "--n", "40",
                     "--seed", "12", "--out", str(out)])
        assert code == 0
        outs.append((out / "network.tsv").read_bytes()
                    + (out / "memberships.csv").read_bytes())
    assert outs[0] == outs[1]


def test_simulate_row_count_near_expectation(tmp_path):
    from blockmix.simulator import expected_nonbaseline
    da = make_dyad_alphabet(binary_alphabet(), directed=False)
    b = da.baseline_index
    n = 10_000
    p = 5.0 / n  # expected degree about 5
    pi = np.zeros((2, 1, 1))
    pi[1 - b] = p
    pi[b] = 1 - p
    model = TabularBlockModel(1, da, pi)
    params = tmp_path / "model.json"
    _write_model_json(params, model)
    out = tmp_path / "out"
    assert main(["simulate", "--params", str(params), "--n", str(n),
                 "--seed", "2", "--out", str(out)]) == 0
    with open(out / "network.tsv") as handle:
        net = load_edge_list(handle, binary_alphabet(), directed=False)
    spec = SimSpec(n=n, gamma=np.array([1.0]), model=model, seed=2)
    mean = expected_nonbaseline(spec)
    assert abs(net.num_nonbaseline - mean) < 4 * np.sqrt(mean)


# ---------------------------------------------------------------- bootstrap


def _fit_json(tmp_path):
    net_path = tmp_path / "net.tsv"
    _write_planted_network(net_path)
    out = tmp_path / "fit_out"
    code = main(["fit", "--input", str(net_path), "--model", "tabular",
                 "--K", "2", "--alphabet", "binary", "--directed", "0",
                 "--restarts", "2", "--seed", "1", "--out", str(out)])
    assert code == 0
    return out / "fit.json"


def test_bootstrap_b0_empty_result(tmp_path):
    fit_path = _fit_json(tmp_path)
    out = tmp_path / "boot"
    code = main(["bootstrap", "--fit", str(fit_path), "--B", "0",
                 "--out", str(out)])
    assert code == 0
    doc = json.loads((out / "bootstrap.json").read_text())
    assert doc["num_replicates"] == 0
    assert (out / "samples.csv").read_text().count("\n") == 1  # header only


def test_bootstrap_jobs_invariant(tmp_path):
    fit_path = _fit_json(tmp_path)
    outputs = []
    for jobs, name in (("1", "j1"), ("2", "j2")):
        out = tmp_path / name
        code = main(["bootstrap", "--fit", str(fit_path), "--B", "4",
                     "--seed", "6", "--jobs", jobs,
                     "--refit-max-sweeps", "300", "--out", str(out)])
        assert code == 0
        outputs.append((out / "samples.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_bootstrap_missing_fit_flag(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["bootstrap", "--B", "2", "--out", str(tmp_path / "out")])
    assert exc.value.code == 64


def test_bootstrap_jobs_env_default(tmp_path, monkeypatch):
    fit_path = _fit_json(tmp_path)
    monkeypatch.setenv("BLOCKMIX_JOBS", "2")
    out = tmp_path / "boot_env"
    code = main(["bootstrap", "--fit", str(fit_path), "--B", "2",
                 "--seed", "6", "--refit-max-sweeps", "200",
                 "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["jobs"] == 2


# ------------------------------------------------------------------ compare


def test_compare_k1_strategies_agree(tmp_path):
    net_path = tmp_path / "net.tsv"
    net_path.write_text("#n=4\n#directed=1\n0\t1\t1\n2\t3\t-1\n")
    out = tmp_path / "cmp"
    code = main(["compare", "--input", str(net_path), "--model", "tabular",
                 "--K", "1", "--runs", "1", "--budget-sweeps", "3",
                 "--out", str(out)])
    assert code == 0
    rows = (out / "traces.csv").read_text().splitlines()
    assert rows[0] == "strategy,run,sweep,lb"
    mm = [r.split(",")[3] for r in rows[1:] if r.startswith("mm,")]
    fp = [r.split(",")[3] for r in rows[1:] if r.startswith("fp,")]
    assert mm == fp and len(mm) == 4


def test_compare_trace_structure_and_mm_monotone(tmp_path):
    net_path = tmp_path / "net.tsv"
    _write_planted_network(net_path)
    out = tmp_path / "cmp"
    code = main(["compare", "--input", str(net_path), "--model", "tabular",
                 "--K", "2", "--alphabet", "binary", "--directed", "0",
                 "--runs", "3", "--budget-sweeps", "40", "--seed", "2",
                 "--out", str(out)])
    assert code == 0
    rows = [r.split(",") for r in
            (out / "traces.csv").read_text().splitlines()[1:]]
    series = {(r[0], r[1]) for r in rows}
    assert len(series) == 6  # 2 strategies x 3 runs
    for run in ("0", "1", "2"):
        lbs = [float(r[3]) for r in rows if r[0] == "mm" and r[1] == run]
        assert np.min(np.diff(lbs)) >= -1e-9


# -------------------------------------------------------------- determinism


def test_fit_outputs_byte_identical_across_runs(tmp_path):
    net_path = tmp_path / "net.tsv"
    _write_planted_network(net_path)
    blobs = []
    for name in ("r1", "r2"):
        out = tmp_path / name
        code = main(["fit", "--input", str(net_path), "--model", "tabular",
                     "--K", "2", "--alphabet", "binary", "--directed", "0",
                     "--restarts", "2", "--seed", "8", "--out", str(out)])
        assert code == 0
        blobs.append((out / "fit.json").read_bytes()
                     + (out / "memberships.csv").read_bytes())
    assert blobs[0] == blobs[1]
