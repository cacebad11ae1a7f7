import csv
import json

import numpy as np
import pytest

from oracles import free_gaussian
from tdho_scatter.cli import main
from tdho_scatter.config import RunConfig, git_blob_hash
from tdho_scatter.errors import ConfigError
from tdho_scatter.spectral import load_field


def write_cfg(path, **extra):
    data = {"zeta": {"t_max": 300.0}, "grid": {"n": 512, "L": 30.0}}
    data.update(extra)
    path.write_text(json.dumps(data, indent=2))
    return path


def test_zeta_command_and_manifest(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "run.json")
    out = tmp_path / "o"
    assert main(["zeta", "--config", str(cfg), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["input_hash"] == git_blob_hash(cfg.read_bytes())
    exp = man["experiments"][0]
    assert exp["kind"] == "zeta"
    for name, rel in exp["artifacts"].items():
        assert exp["hashes"][name] == git_blob_hash((out / rel).read_bytes())
    asym = json.loads((out / "asymptotics.json").read_text())
    assert asym["lam"] == pytest.approx(0.25)


def test_outputs_are_deterministic(tmp_path):
    cfg = write_cfg(tmp_path / "run.json", experiments=[{"kind": "zeta"}, {"kind": "evolve", "times": {"t0": 0, "t1": 0.5}}])
    for o in ("a", "b"):
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / o)]) == 0
    ma = (tmp_path / "a" / "manifest.json").read_text()
    mb = (tmp_path / "b" / "manifest.json").read_text()
    assert ma == mb
    assert (tmp_path / "a" / "000_zeta" / "zeta.csv").read_bytes() == (tmp_path / "b" / "000_zeta" / "zeta.csv").read_bytes()


def test_threads_do_not_change_results(tmp_path, monkeypatch):
    cfg = write_cfg(tmp_path / "run.json", experiments=[{"kind": "zeta"}, {"kind": "zeta", "sigma": {"kind": "zero"}}])
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "one")]) == 0
    monkeypatch.setenv("TDHO_THREADS", "2")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "two")]) == 0
    assert (tmp_path / "one" / "manifest.json").read_text() == (tmp_path / "two" / "manifest.json").read_text()


def test_propagate_free_gaussian(tmp_path):
    out = tmp_path / "p"
    target = tmp_path / "u.bin"
    rc = main(["propagate", "--sigma", "zero", "--n", "512", "--L", "30", "--t0", "0", "--t1", "2",
               "--mode", "factorized", "--out", str(out), "--output", str(target)])
    assert rc == 0
    f = load_field(target)
    assert f.time == 2.0
    # default initial datum: 0.5 exp(-x^2/2)
    assert np.max(np.abs(f.values - 0.5 * free_gaussian(f.grid.axis, 2.0))) < 1e-10


def test_evolve_writes_observables(tmp_path):
    cfg = write_cfg(tmp_path / "run.json", times={"t0": 0.0, "t1": 1.0})
    out = tmp_path / "e"
    assert main(["evolve", "--config", str(cfg), "--out", str(out), "--eta", "1", "--dt", "0.01"]) == 0
    rows = list(csv.DictReader(open(out / "observables.csv")))
    assert rows[0].keys() >= {"t", "mass", "linf", "scaled_linf", "weighted_beta"}
    m = [float(r["mass"]) for r in rows]
    assert max(m) - min(m) < 1e-12 * m[0]


def test_rates_command(tmp_path):
    p = tmp_path / "curve.csv"
    with open(p, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "e_weighted"])
        for t in np.geomspace(1, 100, 10):
            w.writerow([t, 2 * t ** -0.3])
    out = tmp_path / "r"
    assert main(["rates", "--csv", str(p), "--out", str(out)]) == 0
    fit = json.loads((out / "rates.json").read_text())
    assert fit["mu"] == pytest.approx(0.3)


def test_bad_exponents_give_located_error(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{\n  "exponents": {\n    "alpha": 0.9,\n    "beta": 0.5,\n    "delta": 0.6\n  }\n}\n')
    assert main(["zeta", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "line 4" in err and "delta < beta" in err
    with pytest.raises(ConfigError) as e:
        RunConfig.load(cfg)
    assert e.value.line == 4


def test_invalid_json(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text('{"d": 1,,}')
    assert main(["zeta", "--config", str(cfg)]) == 2


def test_empty_experiment_list(tmp_path):
    cfg = write_cfg(tmp_path / "run.json", experiments=[])
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert json.loads((tmp_path / "o" / "manifest.json").read_text())["experiments"] == []


def test_numerical_failure_exit_code(tmp_path):
    # a wide datum on a small grid trips the boundary guard
    cfg = write_cfg(tmp_path / "run.json", grid={"n": 128, "L": 3.0}, initial={"kind": "gaussian", "width": 2.0})
    assert main(["propagate", "--config", str(cfg), "--out", str(tmp_path / "o"), "--t1", "2",
                 "--mode", "factorized"]) == 1
