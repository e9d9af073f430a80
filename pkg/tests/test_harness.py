import json

import numpy as np
import pytest

from hyperjump.errors import ConfigError, InputError
from hyperjump.harness import EXPERIMENTS, default_config, emit_report, load_config, main, run_experiment
from hyperjump.harness import cli, config
from hyperjump.harness.io import read_manifest, verify_manifest

LINEAR_SHEET = {"name": "linear", "d": 2, "k": 2, "symmetric": True,
                "matrices": [{"re": [0, 0, 0, 1]}, {"re": [0.5, 0, 0, 2]}]}

SMALL = {
    "analyze": {"samples": 100},
    "boundedness": {"grid": {"N": [64, 64], "L": [64.0, 64.0]}, "output_times": [1, 2, 3, 8, 10, 12],
                    "early_window": [1, 3], "late_window": [8, 12], "wrap_margin": 4.0},
    "jump-growth": {"hyperplane": {"t_max": 20.0, "nt": 801, "N": [128], "L": [40.0]},
                    "fit_window": [5, 20], "grid_check": None},
    "paraxial-error": {"times": [10, 20, 40], "crossval": None},
    "corput-sweep": {"draws": 40, "hill_draws": 20},
    "sp-scaling": {"eps_range": [0.01, 1.0], "per_decade": 5, "closed_form_range": [0.01, 1.0]},
    "decay-probe": {"s_grid": [1, 2, 4, 8], "probes": [{"system": "S1", "rays": [[1, 0, 3]]}]},
}


def write_cfg(tmp_path, experiment, extra=None, name="cfg.json"):
    cfg = {"experiment": experiment, **SMALL[experiment], **(extra or {})}
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def verdicts(run_path):
    return {v["name"]: v["passed"] for v in read_manifest(run_path)["verdicts"]}


# ---------------------------------------------------------------- config

def test_defaults_validate():
    for exp in EXPERIMENTS:
        cfg = load_config(None, exp)
        assert cfg["experiment"] == exp
    assert {"boundedness_s2", "jump_growth_s2"} <= set(config.bundled_configs())
    assert load_config("boundedness_s2", "boundedness")["system"] == "S2"


@pytest.mark.parametrize("bad, msg", [
    ({"nonsense": 1}, "Additional properties"),
    ({"grid": {"N": [64], "L": [-1.0]}}, "grid/L/0"),
    ({"check": "sometimes"}, "check"),
])
def test_config_schema_errors(tmp_path, bad, msg):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "boundedness", **bad}))
    with pytest.raises(ConfigError, match=msg):
        load_config(str(p), "boundedness")


def test_config_wrong_experiment_and_missing(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"experiment": "analyze"}))
    with pytest.raises(ConfigError):
        load_config(str(p), "boundedness")
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"), "analyze")
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(str(p), "analyze")
    with pytest.raises(ConfigError):
        default_config("nope")


def test_resolve_system(tmp_path):
    assert config.resolve_system("S1").name == "S1"
    assert config.resolve_system(LINEAR_SHEET).k == 2
    assert config.resolve_system("noncharacteristic").A[0][1, 1] == 2
    (tmp_path / "sys.json").write_text(json.dumps(LINEAR_SHEET))
    assert config.resolve_system("sys.json", str(tmp_path)).name == "linear"
    with pytest.raises(ConfigError):
        config.resolve_system("no_such_system")
    with pytest.raises(ConfigError):
        config.resolve_system({"d": 2})


# ---------------------------------------------------------------- analyze

@pytest.mark.parametrize("system, code, rank", [("S1", 0, "maximal"), ("S2", 0, "flat"),
                                                ("noncharacteristic", 1, None),
                                                ("intermediate3d", 1, "intermediate(1)")])
def test_analyze_verdicts(tmp_path, system, code, rank):
    cfg = write_cfg(tmp_path, "analyze", {"system": system})
    c, path, out = run_experiment("analyze", cfg, tmp_path / "run")
    assert c == code
    data = json.loads((path / "analyze.json").read_text())
    if rank:
        assert data["sheet"]["rank_class"] == rank
    else:
        assert "not characteristic" in data["verdict"]["detail"]["reason"]


def test_analyze_experimental(tmp_path):
    cfg = write_cfg(tmp_path, "analyze", {"system": "intermediate3d"})
    c, path, out = run_experiment("analyze", cfg, tmp_path / "run", experimental=True)
    assert c == 0 and verdicts(path) == {"hypotheses": None}


# ---------------------------------------------------------------- experiments

def test_boundedness_zero_source(tmp_path):
    cfg = write_cfg(tmp_path, "boundedness", {"source": {"family": "gaussian", "params": {"vector": [0, 0]}}})
    c, path, _ = run_experiment("boundedness", cfg, tmp_path / "run")
    hist = np.loadtxt(path / "history.csv", delimiter=",", skiprows=1)
    assert c == 0 and np.all(hist[:, 1] == 0)


def test_boundedness_wrap_escalation(tmp_path):
    cfg = write_cfg(tmp_path, "boundedness", {"grid": {"N": [32, 32], "L": [16.0, 16.0]},
                                              "output_times": [1, 2, 3, 20, 30, 40],
                                              "late_window": [20, 40]})
    c, path, _ = run_experiment("boundedness", cfg, tmp_path / "run")
    m = read_manifest(path)
    assert c == 1 and m["escalated"] and m["escalated"][0] in m["warnings"]


def test_boundedness_flat_constant(tmp_path):
    cfg = write_cfg(tmp_path, "boundedness", {
        "system": "S2", "source": {"family": "solenoidal", "params": {"components": [1, 2]}},
        "grid": {"N": [256, 256], "L": [128.0, 128.0]}, "output_times": [1, 2, 3, 10, 15, 20],
        "early_window": [1, 3], "late_window": [10, 20]})
    c, path, _ = run_experiment("boundedness", cfg, tmp_path / "run")
    assert c == 0 and verdicts(path) == {"hypotheses": True, "bounded": True, "constant": True}


def test_jump_growth_small(tmp_path):
    c, path, out = run_experiment("jump-growth", write_cfg(tmp_path, "jump-growth"), tmp_path / "run")
    assert c == 0
    assert out.results["predicted"] == pytest.approx(-2.0, rel=1e-6)
    assert set(verdicts(path)) == {"hypotheses", "slope", "linear_fit", "J0_bounded"}


def test_jump_growth_window_errors(tmp_path):
    cfg = write_cfg(tmp_path, "jump-growth", {"fit_window": [5, 50]})
    assert run_experiment("jump-growth", cfg, tmp_path / "a")[0] == 2
    cfg = write_cfg(tmp_path, "jump-growth", {"hyperplane": {"t_max": 20.0, "nt": 41, "N": [128], "L": [40.0]},
                                              "fit_window": [18, 20]})
    code, path, _ = run_experiment("jump-growth", cfg, tmp_path / "b")
    assert code == 2 and "configuration error" in read_manifest(path)["error"]


def test_paraxial_exact_for_linear_sheet(tmp_path):
    cfg = write_cfg(tmp_path, "paraxial-error", {"system": LINEAR_SHEET, "tol_rerun": True})
    c, path, out = run_experiment("paraxial-error", cfg, tmp_path / "run")
    data = np.loadtxt(path / "paraxial_error.csv", delimiter=",", skiprows=1)
    assert c == 0 and out.results["paraxial_exact"] and np.isinf(out.results["mu"])
    head = open(path / "paraxial_error.csv").readline().strip().split(",")
    diff, err = data[:, head.index("abs_diff")], data[:, head.index("err_exact")] + data[:, head.index("err_paraxial")]
    assert np.all(diff <= err + 1e-8)


def test_corput_and_sp(tmp_path):
    c, path, _ = run_experiment("corput-sweep", write_cfg(tmp_path, "corput-sweep"), tmp_path / "c")
    assert c == 0 and {"corput_k1.csv", "corput_k0.5.csv", "corput_k2.csv"} <= {p.name for p in path.iterdir()}
    c, path, _ = run_experiment("sp-scaling", write_cfg(tmp_path, "sp-scaling"), tmp_path / "s")
    assert c == 0


def test_decay_probe_small(tmp_path):
    c, path, _ = run_experiment("decay-probe", write_cfg(tmp_path, "decay-probe"), tmp_path / "d")
    assert c == 0
    assert (path / "decay_S1_1_0_3.csv").is_file()


def test_decay_probe_stationary_ray_is_contract_error(tmp_path):
    cfg = write_cfg(tmp_path, "decay-probe", {"probes": [{"system": "S1", "rays": [[1, 0, 0]]}]})
    code, path, _ = run_experiment("decay-probe", cfg, tmp_path / "d")
    assert code == 3 and "StationaryRayError" in read_manifest(path)["error"]


# ---------------------------------------------------------------- persistence

def test_manifest_inventory(tmp_path):
    c, path, _ = run_experiment("corput-sweep", write_cfg(tmp_path, "corput-sweep"), tmp_path / "run")
    m = read_manifest(path)
    listed = {f["path"] for f in m["files"]}
    on_disk = {p.name for p in path.iterdir()} - {"manifest.json"}
    assert listed == on_disk
    assert m["config"]["draws"] == 40 and m["code_version"]
    assert verify_manifest(path) == []
    (path / "corput_k1.csv").write_text("tampered\n")
    assert verify_manifest(path) == ["corput_k1.csv"]


def test_determinism(tmp_path):
    cfg = write_cfg(tmp_path, "corput-sweep")
    _, a, _ = run_experiment("corput-sweep", cfg, tmp_path / "a", seed=7)
    _, b, _ = run_experiment("corput-sweep", cfg, tmp_path / "b", seed=7)
    _, c, _ = run_experiment("corput-sweep", cfg, tmp_path / "c", seed=8)
    for name in ("corput_k1.csv", "corput_k2.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "corput_k1.csv").read_bytes() != (c / "corput_k1.csv").read_bytes()


def test_boundedness_determinism_with_threads(tmp_path):
    cfg = write_cfg(tmp_path, "boundedness")
    _, a, _ = run_experiment("boundedness", cfg, tmp_path / "a", threads=1)
    _, b, _ = run_experiment("boundedness", cfg, tmp_path / "b", threads=2)
    assert (a / "history.csv").read_bytes() == (b / "history.csv").read_bytes()


# ---------------------------------------------------------------- report and CLI

def test_report_errors(tmp_path):
    with pytest.raises(InputError):
        emit_report(tmp_path)
    with pytest.raises(InputError):
        emit_report(tmp_path / "missing")
    assert main(["report", str(tmp_path)]) == 2


def test_report_single_run(tmp_path):
    _, path, _ = run_experiment("boundedness", write_cfg(tmp_path, "boundedness"), tmp_path / "run")
    s = emit_report(path)
    assert s["n_experiments"] == 1 and s["passed"]
    assert [e["experiment"] for e in s["experiments"]] == ["boundedness"]
    assert (path / "plots" / "boundedness_sup_norm.dat").is_file()
    assert (path / "summary.txt").read_text().startswith("PASS")


def test_suite(tmp_path, monkeypatch):
    real = config.default_config

    def small(exp):
        return config.merge(real(exp), SMALL[exp])

    monkeypatch.setattr(config, "default_config", small)
    code, root = cli.run_suite(tmp_path / "suite")
    s = json.loads((root / "summary.json").read_text())
    assert code == 0 and s["passed"] and s["n_experiments"] == 7
    assert sorted(e["experiment"] for e in s["experiments"]) == sorted(EXPERIMENTS)


def test_cli_main(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("HYPERJUMP_OUT", str(tmp_path / "root"))
    cfg = write_cfg(tmp_path, "analyze")
    assert main(["analyze", "--config", cfg]) == 0
    runs = list((tmp_path / "root").iterdir())
    assert len(runs) == 1 and runs[0].name.startswith("analyze-")
    assert "PASS analyze" in capsys.readouterr().out
    assert main(["analyze", "--config", str(tmp_path / "nope.json")]) == 2
    assert main(["configs"]) == 0
    assert "boundedness_s2" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        main(["not-an-experiment"])
