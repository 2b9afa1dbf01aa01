import os

import numpy as np
import pytest

import lcefem.cli as cli
from lcefem.cli import (
    CLIError,
    RunConfig,
    build_run_config,
    main,
    parse_config_text,
    parse_h,
    serialize_config,
)

QUICK_CONFIG = """
# gentle pull: fast and robust on the coarsest mesh
a = 0.6
b = 0.0015
M = 0.1
dt = 0.1
h = 2^-2
ladder = 2^-2, 2^-3
dump_s = 1.05, 1.1
newton_tol = 1e-10
"""


def _write_config(tmp_path, text=QUICK_CONFIG):
    path = tmp_path / "config.txt"
    path.write_text(text)
    return str(path)


def test_parse_h():
    assert parse_h("2^-4") == 2**-4
    assert parse_h("0.125") == 0.125


def test_config_round_trip():
    raw = parse_config_text(QUICK_CONFIG)
    cfg = build_run_config(raw)
    text = serialize_config(cfg)
    cfg2 = build_run_config(parse_config_text(text))
    assert cfg2.material == cfg.material
    assert cfg2.solver == cfg.solver
    assert cfg2.h == cfg.h
    assert cfg2.ladder == cfg.ladder
    assert cfg2.dump_s == cfg.dump_s
    assert cfg2.out == cfg.out


def test_unknown_key_rejected():
    with pytest.raises(CLIError):
        parse_config_text("nonsense = 1\n")


def test_invalid_material_rejected_before_compute():
    with pytest.raises(CLIError):
        build_run_config({"a": "1.5"})


def test_ladder_must_descend():
    cfg = RunConfig()
    cfg.ladder = (2**-3, 2**-2)
    with pytest.raises(CLIError):
        cfg.validate()


def test_verify_analytic_command(capsys):
    code = main(["verify-analytic", "--samples", "50"])
    out = capsys.readouterr().out
    assert code == 0
    assert "PASS" in out and "FAIL" not in out
    assert out.strip().splitlines()[-1].startswith("OK")


def test_run_command(tmp_path, capsys):
    cfg_path = _write_config(tmp_path)
    out_dir = str(tmp_path / "out")
    code = main(["run", "--config", cfg_path, "--out", out_dir])
    assert code == 0

    csv_path = os.path.join(out_dir, "stress_strain.csv")
    lines = open(csv_path).read().splitlines()
    assert lines[0] == "t,strain,elongation,nominal_stress,energy"
    assert len(lines) == 1 + 11  # t = 0.0, 0.1, ..., 1.0

    director = os.path.join(out_dir, "director_s1.10.txt")
    assert len(open(director).read().splitlines()) == 9  # P1 nodes at h=2^-2
    assert os.path.exists(os.path.join(out_dir, "energy_s1.05.txt"))
    assert os.path.exists(os.path.join(out_dir, "config_resolved.txt"))

    # a second run must refuse to overwrite without --force
    code = main(["run", "--config", cfg_path, "--out", out_dir])
    assert code == 2
    assert "--force" in capsys.readouterr().err
    code = main(["run", "--config", cfg_path, "--out", out_dir, "--force"])
    assert code == 0


def test_convergence_command_short_ladder(tmp_path):
    cfg_path = _write_config(tmp_path)
    out_dir = str(tmp_path / "conv")
    code = main(["convergence", "--config", cfg_path, "--out", out_dir])
    assert code == 0
    errors = open(os.path.join(out_dir, "errors.csv")).read().splitlines()
    rates = open(os.path.join(out_dir, "rates.csv")).read().splitlines()
    assert errors[0].startswith("h,u_l2,u_h1,n_l2,n_h1,p_l2,lam_hminus1")
    assert len(errors) == 2  # one nested pair
    assert len(rates) == 1  # header only
    # caches of the final states were written for --resume
    assert os.path.exists(os.path.join(out_dir, "state_t1_h2.npz"))


def test_convergence_resume_skips_solves(tmp_path, monkeypatch):
    cfg_path = _write_config(tmp_path)
    out_dir = str(tmp_path / "resume")
    assert main(["convergence", "--config", cfg_path, "--out", out_dir]) == 0
    first = open(os.path.join(out_dir, "errors.csv")).read()

    def boom(*args, **kwargs):
        raise AssertionError("resume must not re-run the continuation")

    monkeypatch.setattr(cli, "continuation_run", boom)
    code = main(["convergence", "--config", cfg_path, "--out", out_dir, "--resume", "--force"])
    assert code == 0
    assert open(os.path.join(out_dir, "errors.csv")).read() == first


def test_infsup_command(tmp_path):
    cfg_path = _write_config(
        tmp_path,
        QUICK_CONFIG.replace("ladder = 2^-2, 2^-3", "ladder = 2^-2"),
    )
    out_dir = str(tmp_path / "infsup")
    code = main(["infsup", "--config", cfg_path, "--out", out_dir])
    assert code == 0
    for name in ("infsup_t0.csv", "infsup_t1.csv"):
        lines = open(os.path.join(out_dir, name)).read().splitlines()
        assert lines[0] == "h,b1,b2,s_A_kerB,e_A_kerB"
        assert len(lines) == 2


def test_solver_failure_exit_code(tmp_path, capsys):
    config = QUICK_CONFIG + "newton_max_iter = 1\ndt = 1.0\nM = 0.4\n"
    cfg_path = _write_config(tmp_path, config)
    out_dir = str(tmp_path / "fail")
    code = main(["run", "--config", cfg_path, "--out", out_dir])
    assert code == 1
    err = capsys.readouterr().err
    assert "t=" in err  # names the failed continuation time


def test_convergence_failure_still_writes_partial(tmp_path):
    # an impossible solver budget: the partial CSVs are written, exit code 1
    config = QUICK_CONFIG + "newton_max_iter = 1\ndt = 1.0\nM = 0.4\n"
    cfg_path = _write_config(tmp_path, config)
    out_dir = str(tmp_path / "partial")
    code = main(["convergence", "--config", cfg_path, "--out", out_dir])
    assert code == 1
    errors = open(os.path.join(out_dir, "errors.csv")).read().splitlines()
    assert errors[0].startswith("h,")
    assert len(errors) == 1  # header only: the first mesh already failed
    assert os.path.exists(os.path.join(out_dir, "rates.csv"))


def test_problem_spaces_refined(tmp_path):
    from lcefem.mesh import MeshParams, build_uniform_mesh
    from lcefem.spaces import build_problem_spaces

    spaces = build_problem_spaces(build_uniform_mesh(MeshParams(h=2**-2, ar=1.0)))
    fine = spaces.refined()
    assert fine.mesh.params.h == 2**-3
    assert fine.u.n_dofs == 2 * 9**2


def test_atomic_outputs_not_left_partial(tmp_path):
    # nothing with a temp suffix survives a successful run
    cfg_path = _write_config(tmp_path)
    out_dir = str(tmp_path / "atomic")
    assert main(["run", "--config", cfg_path, "--out", out_dir]) == 0
    leftovers = [f for f in os.listdir(out_dir) if f.endswith(".part") or f.startswith(".tmp-")]
    assert leftovers == []
