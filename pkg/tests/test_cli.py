import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from mixlab.cli import EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, EXIT_VIOLATION, main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _run(tmp_path, command, config, *extra):
    out = tmp_path / command
    code = main([command, "--config", config if isinstance(config, str) else json.dumps(config),
                 "--out", str(out), *extra])
    return code, out


def test_simulate_uniform_is_deterministic(tmp_path):
    code, out = _run(tmp_path, "simulate", str(CONFIGS / "simulate_uniform.json"))
    assert code == EXIT_OK
    rows = _rows(out / "trajectory.csv")
    assert len(rows) == 10 and {r["symbol"] for r in rows} <= {"0", "1"}
    assert all(r["seed"] == "7" for r in rows)
    first = (out / "trajectory.csv").read_bytes()
    main(["simulate", "--config", str(CONFIGS / "simulate_uniform.json"), "--out", str(out), "--threads", "3"])
    assert (out / "trajectory.csv").read_bytes() == first
    meta = json.loads((out / "trajectory.csv.meta.json").read_text())
    assert meta["seed"] == 7 and meta["command"] == "simulate" and len(meta["config_hash"]) == 64


def test_seed_flag_overrides_config(tmp_path):
    _, a = _run(tmp_path / "a", "simulate", str(CONFIGS / "simulate_uniform.json"), "--seed", "99")
    rows = _rows(a / "trajectory.csv")
    assert rows[0]["seed"] == "99"


def test_invalid_potential_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"potential": "missing.json", "n": 5, "seed": 1}))
    code, _ = _run(tmp_path, "simulate", str(bad))
    assert code == EXIT_CONFIG
    assert "missing.json" in capsys.readouterr().err
    code, _ = _run(tmp_path, "simulate", {"potential": {"alphabet": "01"}, "n": 5, "seed": 1})
    assert code == EXIT_CONFIG
    code, _ = _run(tmp_path, "simulate", str(tmp_path / "nowhere.json"))
    assert code == EXIT_CONFIG


def test_missing_seed_is_a_config_error(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "simulate_uniform.json").read_text())
    del cfg["seed"]
    code, _ = _run(tmp_path, "simulate", cfg)
    assert code == EXIT_CONFIG and "seed" in capsys.readouterr().err


def test_couple_equal_pasts(tmp_path):
    cfg = json.loads((CONFIGS / "couple_order2.json").read_text())
    cfg.update(x="01", y="01", runs=5, n=20)
    code, out = _run(tmp_path, "couple", cfg)
    assert code == EXIT_OK
    rows = _rows(out / "coupled_path.csv")
    assert all(r["u"] == r["v"] for r in rows)
    clock = [int(r["clock"]) for r in rows]
    assert all(b > a for a, b in zip(clock, clock[1:]))
    summary = json.loads((out / "summary.json").read_text())
    assert summary["disagreements"] == 0


def test_couple_memoryless_never_disagrees(tmp_path):
    cfg = {"potential": {"alphabet": "01", "transition": [[0.3, 0.7]]}, "x": "0", "y": "1",
           "n": 30, "runs": 200, "seed": 2}
    code, out = _run(tmp_path, "couple", cfg)
    assert code == EXIT_OK
    assert json.loads((out / "summary.json").read_text())["disagreements"] == 0


def test_couple_order2_stays_below_gamma_star(tmp_path):
    code, out = _run(tmp_path, "couple", str(CONFIGS / "couple_order2.json"))
    assert code == EXIT_OK
    for r in _rows(out / "disagreement.csv"):
        assert float(r["p_hat"]) <= float(r["gamma_star"]) + 4 * float(r["stderr"]) + 1e-12


def test_renewal_constant(tmp_path):
    code, out = _run(tmp_path, "renewal", str(CONFIGS / "renewal_constant.json"))
    assert code == EXIT_OK
    rows = _rows(out / "renewal.csv")
    assert len(rows) == 1001
    for r in rows[1:50]:
        assert float(r["gamma_star_n"]) == pytest.approx(0.2, rel=1e-13)
    rep = json.loads((out / "classification.json").read_text())
    assert rep["regime"] == "non-relaxing" and rep["radius_G"] == 1.0


def test_renewal_zero_gamma(tmp_path):
    code, out = _run(tmp_path, "renewal", {"gamma": {"kind": "constant", "params": {"gamma": 0.0}}, "n_max": 100})
    assert code == EXIT_OK
    rows = _rows(out / "renewal.csv")
    assert all(float(r["gamma_star_n"]) == 0.0 and float(r["tau_pmf_n"]) == 0.0 for r in rows[1:])
    assert json.loads((out / "classification.json").read_text())["tau_infinity"] == 1.0


def test_classify_geometric(tmp_path):
    code, out = _run(tmp_path, "classify", str(CONFIGS / "classify_geometric.json"))
    assert code == EXIT_OK
    rep = json.loads((out / "classification.json").read_text())
    assert rep["regime"] == "exponential"
    assert rep["radius_F"] == pytest.approx(2.0, rel=1e-6)
    assert (out / "classification.json.meta.json").exists()


def test_verify_exit_codes(tmp_path, capsys):
    code, out = _run(tmp_path, "verify", str(CONFIGS / "verify_markov.json"))
    assert code == EXIT_OK
    assert json.loads((out / "bounds.json").read_text())["violations"] == []
    code, out = _run(tmp_path / "s", "verify", str(CONFIGS / "verify_sabotage.json"))
    assert code == EXIT_VIOLATION
    assert "bound violation" in capsys.readouterr().err
    # the evidence is written before the exit
    assert len(json.loads((out / "bounds.json").read_text())["violations"]) > 0


def test_numeric_failure_exit(tmp_path, capsys):
    cfg = {"potential": {"alphabet": "01", "memory_order": 1,
                         "table": {"00": 0, "01": -800, "10": 0, "11": 0}}, "n": 5, "seed": 1}
    code, _ = _run(tmp_path, "simulate", cfg)
    assert code == EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_normalize_outputs(tmp_path):
    code, out = _run(tmp_path, "normalize", str(CONFIGS / "normalize_order2.json"))
    assert code == EXIT_OK
    rho = _rows(out / "rho.csv")
    assert len(rho) == 4 and sum(float(r["rho"]) for r in rho) == pytest.approx(1.0)
    psi = json.loads((out / "psi.json").read_text())
    for name in ("psi.json", "rho.csv", "summary.json"):
        assert (out / f"{name}.meta.json").exists()
    assert psi["memory_order"] == 2


def test_threads_env_fallback(tmp_path, monkeypatch):
    cfg = str(CONFIGS / "couple_order2.json")
    _, a = _run(tmp_path / "a", "couple", cfg)
    monkeypatch.setenv("MIXLAB_THREADS", "4")
    _, b = _run(tmp_path / "b", "couple", cfg)
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    monkeypatch.setenv("MIXLAB_THREADS", "many")
    code, _ = _run(tmp_path / "c", "couple", cfg)
    assert code == EXIT_CONFIG


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "mixlab.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for name in ("simulate", "couple", "renewal", "verify", "classify", "normalize"):
        assert name in res.stdout
