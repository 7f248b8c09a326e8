import json
import os
import shutil

import numpy as np
import pytest

from euler_align import cli
from euler_align.config import (initial_state, load_config,
                                reference_config_text, solver_config)
from euler_align.dynamics import ConfigError
from euler_align.manifest import config_hash

QUICK_INI = """\
[grid]
d = 1
N = 64

[physics]
gamma = 2.0
lambda = 0.5
epsilon = 1e-3
m = 1

[time]
t_end = 0.1

[init]
kind = cosine
rho_amplitudes = 0.05
u_amplitudes = 0.05

[output]
n_snapshots = 5
plots = false

[sweep]
epsilons = 1e-2,1e-3

[weak_strong]
fine_factor = 4
perturb_amplitude = 1e-2
perturb_mode = 3

[selftest]
lambdas = 0.5
Ns = 64
M = 8
"""


@pytest.fixture
def quick_ini(tmp_path):
    p = tmp_path / "quick.ini"
    p.write_text(QUICK_INI)
    return str(p)


def test_reference_config_parses(tmp_path):
    p = tmp_path / "ref.ini"
    p.write_text(reference_config_text())
    tree = load_config(str(p))
    cfg = solver_config(tree)
    assert cfg.N == 256
    assert cfg.gamma == 2.0
    state = initial_state(tree, cfg)
    assert state.rho.shape == (256,)


def test_unknown_keys_rejected(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[grid]\nd = 1\nN = 64\nbogus = 3\n")
    with pytest.raises(ConfigError, match="bogus"):
        load_config(str(p))
    p.write_text("[nosuch]\nx = 1\n")
    with pytest.raises(ConfigError, match="nosuch"):
        load_config(str(p))
    p.write_text("[grid]\nN = not_a_number\n")
    with pytest.raises(ConfigError):
        load_config(str(p))


def test_config_hash_covers_physics(quick_ini):
    tree = load_config(quick_ini)
    h1 = config_hash(tree)
    tree2 = json.loads(json.dumps(tree))
    tree2["physics"]["lambda"] = 0.75
    assert config_hash(tree2) != h1
    tree3 = json.loads(json.dumps(tree))
    tree3.setdefault("output", {})["plots"] = True
    assert config_hash(tree3) == h1  # output cosmetics not hashed


def test_cli_missing_config(tmp_path):
    rc = cli.main(["run", "--config", str(tmp_path / "nope.ini"),
                   "--out", str(tmp_path / "runs")])
    assert rc == cli.EXIT_CONFIG
    assert not os.path.exists(tmp_path / "runs")


def test_cli_run_and_determinism(quick_ini, tmp_path):
    out = str(tmp_path / "runs")
    assert cli.main(["run", "--config", quick_ini, "--out", out]) == cli.EXIT_OK
    assert cli.main(["run", "--config", quick_ini, "--out", out]) == cli.EXIT_OK
    dirs = sorted(os.listdir(out))
    assert len(dirs) == 2
    csv1 = open(os.path.join(out, dirs[0], "diagnostics.csv"), "rb").read()
    csv2 = open(os.path.join(out, dirs[1], "diagnostics.csv"), "rb").read()
    assert csv1 == csv2   # byte-for-byte reruns
    man = json.load(open(os.path.join(out, dirs[0], "manifest.json")))
    assert man["kind"] == "run"
    assert man["status"] == "complete"
    assert "config_hash" in man


def test_cli_density_floor_exit(tmp_path):
    ini = tmp_path / "floor.ini"
    ini.write_text(QUICK_INI.replace("[time]", "[physics-floor-placeholder]")
                   .replace("[physics-floor-placeholder]", "[time]"))
    text = QUICK_INI.replace("epsilon = 1e-3",
                             "epsilon = 1e-3\ndensity_floor = 0.999")
    ini.write_text(text)
    rc = cli.main(["run", "--config", str(ini), "--out", str(tmp_path / "r")])
    assert rc == cli.EXIT_FLOOR


def test_cli_cfl_exit(tmp_path):
    text = QUICK_INI.replace("t_end = 0.1", "t_end = 0.1\ndt_fixed = 0.5")
    ini = tmp_path / "cfl.ini"
    ini.write_text(text)
    rc = cli.main(["run", "--config", str(ini), "--out", str(tmp_path / "r")])
    assert rc == cli.EXIT_CFL


def test_cli_kernel_selftest(quick_ini, tmp_path):
    out = str(tmp_path / "runs")
    assert cli.main(["kernel-selftest", "--config", quick_ini,
                     "--out", out]) == cli.EXIT_OK
    d = os.listdir(out)[0]
    cert = open(os.path.join(out, d, "reports",
                             "kernel_certificate.csv")).read().splitlines()
    assert cert[0].startswith("lambda,M,N,tail_bound,calibration_c")
    assert len(cert) == 2


def test_cli_weak_strong_and_reference_rejection(quick_ini, tmp_path):
    out = str(tmp_path / "runs")
    assert cli.main(["weak-strong", "--config", quick_ini,
                     "--out", out]) == cli.EXIT_OK
    d = [p for p in os.listdir(out) if p.startswith("weak-strong")][0]
    man = json.load(open(os.path.join(out, d, "manifest.json")))
    assert man["headline_metrics"]["passed"] is True
    assert man["headline_metrics"]["zero_test_max_E_rel"] < 1e-10
    # under-resolved initial data: reference rejected with its own exit code
    rough = QUICK_INI.replace("rho_amplitudes = 0.05",
                              "rho_amplitudes = " + ",".join(["0.02"] * 40))
    ini = tmp_path / "rough.ini"
    ini.write_text(rough)
    rc = cli.main(["weak-strong", "--config", str(ini), "--out", out])
    assert rc == cli.EXIT_REFERENCE


def test_cli_sweep_and_measure_report(quick_ini, tmp_path):
    out = str(tmp_path / "runs")
    assert cli.main(["sweep-eps", "--config", quick_ini,
                     "--out", out]) == cli.EXIT_OK
    sweep_dir = [p for p in os.listdir(out) if p.startswith("sweep-eps")][0]
    sweep_path = os.path.join(out, sweep_dir)
    # golden layout of the ensemble store
    assert os.path.exists(os.path.join(sweep_path, "ensemble.json"))
    assert os.path.exists(os.path.join(sweep_path, "members",
                                       "eps_1.000e-02", "snap_0000.fld"))
    for rep in ("defect.csv", "compatibility.csv", "sweep.csv"):
        assert os.path.exists(os.path.join(sweep_path, "reports", rep))
    # post-process the stored samples
    rc = cli.main(["measure-report", "--ensemble", sweep_path, "--out", out])
    assert rc == cli.EXIT_OK
    mr = [p for p in os.listdir(out) if p.startswith("measure-report")][0]
    man = json.load(open(os.path.join(out, mr, "manifest.json")))
    assert man["headline_metrics"]["passed"] is True
    assert man["headline_metrics"]["c_rho"] > 0


def test_golden_diagnostics_regression(tmp_path):
    """Per-column tolerance comparison against a frozen diagnostics file."""
    golden_path = os.path.join(os.path.dirname(__file__), "golden",
                               "diagnostics_n64.csv")
    ini = tmp_path / "golden.ini"
    ini.write_text(QUICK_INI)
    out = str(tmp_path / "runs")
    assert cli.main(["run", "--config", str(ini), "--out", out]) == cli.EXIT_OK
    d = os.listdir(out)[0]
    fresh = np.genfromtxt(os.path.join(out, d, "diagnostics.csv"),
                          delimiter=",", names=True)
    golden = np.genfromtxt(golden_path, delimiter=",", names=True)
    tolerances = {
        "t": 1e-12, "dt": 1e-12, "mass": 1e-12, "momentum_x": 1e-12,
        "energy": 1e-10, "align_rate": 1e-8, "visc_rate": 1e-8,
        "acc_align": 1e-8, "acc_visc": 1e-8, "residual": 1e-8,
        "min_rho": 1e-10,
    }
    assert fresh.dtype.names == golden.dtype.names
    assert len(fresh) == len(golden)
    for col, tol in tolerances.items():
        scale = max(np.max(np.abs(golden[col])), 1e-12)
        assert np.max(np.abs(fresh[col] - golden[col])) <= tol * scale, col
