import json
import os

import numpy as np
import pytest

from zrphydro import load_field
from zrphydro.cli import main


def test_gen_env_and_roundtrip(tmp_path, capsys):
    out = tmp_path / "env.npz"
    rc = main(["gen-env", "--law", "bernoulli", "--p", "0.7",
               "--dims", "16,16", "--seed", "9", "--out", str(out)])
    assert rc == 0
    field = load_field(out)
    assert field.dims == (16, 16)
    assert field.seed == 9
    assert "giant_fraction" in capsys.readouterr().out


def test_gen_env_invalid_p(tmp_path):
    rc = main(["gen-env", "--law", "bernoulli", "--p", "1.5",
               "--dims", "8,8", "--out", str(tmp_path / "x.npz")])
    assert rc == 2


def test_simulate_snapshot_format(tmp_path):
    env = tmp_path / "env.npz"
    main(["gen-env", "--p", "0.8", "--dims", "16,16", "--seed", "4",
          "--out", str(env)])
    out = tmp_path / "run.npz"
    rc = main(["simulate", "--env", str(env), "--g", "indicator",
               "--rho0", "0.5", "--N", "16", "--t-end", "0.01",
               "--obs-times", "0.005,0.01", "--seed", "2", "--out", str(out)])
    assert rc == 0
    with np.load(out) as data:
        assert data["N"] == 16
        assert data["seed"] == 2
        assert data["snapshots"].shape[0] == 2
        assert int(data["event_count"]) > 0
        totals = data["snapshots"].sum(axis=1)
        assert totals[0] == totals[1]
    csv = open(str(out) + ".observables.csv").read().splitlines()
    assert csv[0] == "time,total_particles"
    assert len(csv) == 3


def test_effective_d_json(tmp_path):
    out = tmp_path / "d.json"
    rc = main(["effective-d", "--p", "1.0", "--L", "16", "--seeds", "1",
               "--method", "variational", "--out", str(out)])
    assert rc == 0
    data = json.loads(open(out).read())
    assert abs(data["sigma"]["variational"]["mean"] - 1.0) < 1e-9


def test_pde_cli(tmp_path):
    out = tmp_path / "rho.csv"
    rc = main(["pde", "--rho0", "cosine", "--m", "0.95", "--sigma", "0.5",
               "--g", "indicator", "--t-end", "0.005", "--grid", "24",
               "--out", str(out)])
    assert rc == 0
    lines = open(out).read().splitlines()
    assert lines[0] == "i0,i1,rho"
    assert len(lines) == 1 + 24 * 24
    meta = json.loads(open(str(out) + ".meta.json").read())
    assert meta["grid"] == 24


def test_hydro_cli_with_config(tmp_path):
    cfg = tmp_path / "exp.ini"
    cfg.write_text("""
[environment]
p = 0.75
env_seed = 2

[experiment]
N_ladder = 8
obs_times = 0.005
n_replicas = 2
sigma = 0.5
test_functions = one
pde_grid = 24
ell_ladder = 2
base_seed = 5
""")
    rc = main(["hydro", "--config", str(cfg), "--out", str(tmp_path / "rep")])
    assert rc == 0
    report = json.loads(open(tmp_path / "rep" / "report.json").read())
    assert report["kind"] == "hydrodynamic"
    assert report["meta"]["spec"]["p"] == 0.75


def test_missing_config_exit_code(tmp_path):
    rc = main(["hydro", "--config", str(tmp_path / "missing.ini")])
    assert rc == 2


def test_missing_sigma_exit_code(tmp_path):
    cfg = tmp_path / "nosigma.ini"
    cfg.write_text("[experiment]\nN_ladder = 8\nn_replicas = 1\n"
                   "obs_times = 0.005\ntest_functions = one\n"
                   "pde_grid = 16\nell_ladder = 2\n")
    rc = main(["hydro", "--config", str(cfg)])
    assert rc == 2
