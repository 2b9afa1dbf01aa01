"""Command-line front end for the clamped-pulling experiment.

Subcommands::

    lcefem run             one continuation run: stress-strain CSV + field dumps
    lcefem convergence     mesh-ladder runs, error norms and convergence rates
    lcefem infsup          inf-sup diagnostics at t=0 and t=1 per ladder mesh
    lcefem verify-analytic randomized verification of the closed-form energy facts

Configuration is a flat ``key = value`` text file (``#`` comments allowed)
with command-line overrides; a copy of the resolved configuration is written
into the output directory with every run.  Mesh sizes accept ``2^-k`` or
plain floats.  All CSV outputs are written atomically (temp file + rename),
and existing outputs are only overwritten under ``--force``.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace

import numpy as np

from .assembly import btw_density_at_nodes, build_saddle_matrices
from .btw_core import MaterialParams, verify_propositions
from .diagnostics import ERROR_LABELS, convergence_rates, error_table, infsup_report
from .mesh import MeshParams, build_uniform_mesh
from .solver import (
    SolverConfig,
    SolverError,
    Trajectory,
    TrajectoryStep,
    continuation_run,
    initial_state,
    write_trajectory,
)
from .spaces import FieldState, build_problem_spaces, write_field


class CLIError(Exception):
    """Configuration or output-handling failure (exit code 2)."""


def parse_h(text: str) -> float:
    """Mesh sizes as ``2^-k`` or a plain float."""
    text = text.strip()
    if "^" in text:
        base, exp = text.split("^")
        return float(base) ** float(exp)
    return float(text)


def format_h(h: float) -> str:
    k = -np.log2(h)
    if k == int(k):
        return f"2^-{int(k)}"
    return repr(h)


@dataclass
class RunConfig:
    """Resolved experiment configuration."""

    material: MaterialParams = field(default_factory=MaterialParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    h: float = 2**-4
    ladder: tuple = (2**-2, 2**-3, 2**-4, 2**-5)
    out: str = "results"
    dump_s: tuple = (1.10, 1.17, 1.22, 1.4)
    samples: int = 10_000
    a_values: tuple = (0.1, 0.3, 0.6, 0.9)
    seed: int = 0
    resume: bool = False
    force: bool = False

    def validate(self) -> None:
        for h in (self.h, *self.ladder):
            MeshParams(h=h, ar=self.material.ar).validate()
        if list(self.ladder) != sorted(self.ladder, reverse=True):
            raise CLIError("ladder entries must be sorted descending")


_CONFIG_KEYS = (
    "a", "b", "ar_n", "M", "dt", "f", "g",
    "h", "ladder", "out", "dump_s",
    "newton_tol", "newton_max_iter", "dt_min",
    "samples", "a_values", "seed",
)


def parse_config_text(text: str) -> dict:
    """Parse the flat key=value format into a raw string dict."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise CLIError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _CONFIG_KEYS:
            raise CLIError(f"line {lineno}: unknown key {key!r}")
        raw[key] = value
    return raw


def _floats(text: str) -> tuple:
    return tuple(parse_h(v) for v in text.split(",") if v.strip())


def build_run_config(raw: dict) -> RunConfig:
    cfg = RunConfig()
    mat = {}
    for key in ("a", "b", "ar_n", "M", "dt"):
        if key in raw:
            mat[key] = float(raw[key])
    for key in ("f", "g"):
        if key in raw:
            vec = _floats(raw[key])
            if len(vec) != 2:
                raise CLIError(f"{key} must be two comma-separated numbers")
            mat[key] = vec
    try:
        cfg.material = replace(cfg.material, **mat)
    except ValueError as exc:
        raise CLIError(str(exc)) from exc

    sol = {}
    if "newton_tol" in raw:
        sol["newton_abs_tol"] = float(raw["newton_tol"])
    if "newton_max_iter" in raw:
        sol["newton_max_iter"] = int(raw["newton_max_iter"])
    if "dt_min" in raw:
        sol["dt_min"] = float(raw["dt_min"])
    try:
        cfg.solver = replace(cfg.solver, **sol)
    except ValueError as exc:
        raise CLIError(str(exc)) from exc

    if "h" in raw:
        cfg.h = parse_h(raw["h"])
    if "ladder" in raw:
        cfg.ladder = _floats(raw["ladder"])
    if "out" in raw:
        cfg.out = raw["out"]
    if "dump_s" in raw:
        cfg.dump_s = _floats(raw["dump_s"])
    if "samples" in raw:
        cfg.samples = int(raw["samples"])
    if "a_values" in raw:
        cfg.a_values = _floats(raw["a_values"])
    if "seed" in raw:
        cfg.seed = int(raw["seed"])
    return cfg


def serialize_config(cfg: RunConfig) -> str:
    """Flat key=value text that parses back to an equivalent config."""
    mat, sol = cfg.material, cfg.solver
    lines = [
        f"a = {mat.a!r}",
        f"b = {mat.b!r}",
        f"ar_n = {mat.ar_n!r}",
        f"M = {mat.M!r}",
        f"dt = {mat.dt!r}",
        f"f = {mat.f[0]!r}, {mat.f[1]!r}",
        f"g = {mat.g[0]!r}, {mat.g[1]!r}",
        f"h = {format_h(cfg.h)}",
        "ladder = " + ", ".join(format_h(h) for h in cfg.ladder),
        f"out = {cfg.out}",
        "dump_s = " + ", ".join(repr(s) for s in cfg.dump_s),
        f"newton_tol = {sol.newton_abs_tol!r}",
        f"newton_max_iter = {sol.newton_max_iter}",
        f"samples = {cfg.samples}",
        "a_values = " + ", ".join(repr(a) for a in cfg.a_values),
        f"seed = {cfg.seed}",
    ]
    if sol.dt_min is not None:
        lines.append(f"dt_min = {sol.dt_min!r}")
    return "\n".join(lines) + "\n"


def load_config(path: str | None, overrides: argparse.Namespace) -> RunConfig:
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = parse_config_text(fh.read())
        except OSError as exc:
            raise CLIError(f"cannot read config {path}: {exc}") from exc
    cfg = build_run_config(raw)
    if getattr(overrides, "h", None) is not None:
        cfg.h = parse_h(overrides.h)
    if getattr(overrides, "out", None) is not None:
        cfg.out = overrides.out
    if getattr(overrides, "samples", None) is not None:
        cfg.samples = overrides.samples
    cfg.resume = bool(getattr(overrides, "resume", False))
    cfg.force = bool(getattr(overrides, "force", False))
    cfg.validate()
    return cfg


# --------------------------------------------------------------------------
# output helpers


def _atomic_write(path: str, content: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _output_path(cfg: RunConfig, name: str, allow_existing: bool = False) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    path = os.path.join(cfg.out, name)
    if os.path.exists(path) and not cfg.force and not allow_existing:
        raise CLIError(f"{path} already exists; pass --force to overwrite")
    return path


def _write_resolved_config(cfg: RunConfig) -> None:
    os.makedirs(cfg.out, exist_ok=True)
    _atomic_write(os.path.join(cfg.out, "config_resolved.txt"), serialize_config(cfg))


def _csv(header: list[str], rows: list[list]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _state_cache_path(cfg: RunConfig, h: float) -> str:
    k = int(round(-np.log2(h)))
    return os.path.join(cfg.out, f"state_t1_h{k}.npz")


def _run_to_t1(cfg: RunConfig, h: float, spaces) -> Trajectory:
    """Continuation to t=1 with optional resume from a cached final state."""
    cache = _state_cache_path(cfg, h)
    if cfg.resume and os.path.exists(cache):
        data = np.load(cache)
        state = FieldState(u=data["u"], n=data["n"], p=data["p"], lam=data["lam"], t=float(data["t"]))
        return Trajectory(steps=[TrajectoryStep(t=state.t, state=state, nominal_stress=np.nan, energy=np.nan)])
    traj = continuation_run(cfg.material, cfg.solver, spaces)
    os.makedirs(cfg.out, exist_ok=True)
    final = traj.final_state
    np.savez(cache, u=final.u, n=final.n, p=final.p, lam=final.lam, t=final.t)
    return traj


# --------------------------------------------------------------------------
# subcommands


def cmd_run(cfg: RunConfig) -> int:
    """One continuation run: trajectory CSV, director and energy dumps."""
    cfg.validate()
    csv_path = _output_path(cfg, "stress_strain.csv")
    dump_paths = {}
    for s in cfg.dump_s:
        dump_paths[s] = (
            _output_path(cfg, f"director_s{s:.2f}.txt"),
            _output_path(cfg, f"energy_s{s:.2f}.txt"),
        )
    _write_resolved_config(cfg)

    mesh = build_uniform_mesh(MeshParams(h=cfg.h, ar=cfg.material.ar))
    spaces = build_problem_spaces(mesh)
    try:
        traj = continuation_run(cfg.material, cfg.solver, spaces)
    except SolverError as exc:
        print(f"error: continuation failed: {exc}", file=sys.stderr)
        return 1

    tmp = csv_path + ".part"
    write_trajectory(traj, cfg.material, tmp)
    os.replace(tmp, csv_path)

    for s, (director_path, energy_path) in dump_paths.items():
        t_target = (s - 1.0) / cfg.material.M if cfg.material.M > 0 else 0.0
        step = traj.nearest_step(min(max(t_target, 0.0), 1.0))
        write_field(spaces.n, step.state.n, director_path)
        density = btw_density_at_nodes(step.state, cfg.material, spaces)
        write_field(spaces.p, density, energy_path)
    print(f"run complete: {len(traj.steps)} steps, outputs in {cfg.out}")
    return 0


def cmd_convergence(cfg: RunConfig) -> int:
    """Mesh-ladder runs, then error norms and rates between nested pairs."""
    cfg.validate()
    if len(cfg.ladder) < 2:
        raise CLIError("convergence needs a ladder of at least two mesh sizes")
    errors_path = _output_path(cfg, "errors.csv", allow_existing=cfg.resume)
    rates_path = _output_path(cfg, "rates.csv", allow_existing=cfg.resume)
    _write_resolved_config(cfg)

    spaces_by_h = {}
    trajectories = {}
    failed = None
    for h in cfg.ladder:
        mesh = build_uniform_mesh(MeshParams(h=h, ar=cfg.material.ar))
        spaces_by_h[h] = build_problem_spaces(mesh)
        try:
            trajectories[h] = _run_to_t1(cfg, h, spaces_by_h[h])
        except SolverError as exc:
            failed = f"h={format_h(h)}: {exc}"
            print(f"error: {failed}", file=sys.stderr)
            break

    rows = []
    done = [h for h in cfg.ladder if h in trajectories]
    for coarse, fine in zip(done[:-1], done[1:]):
        rows.append(
            error_table(trajectories[coarse], spaces_by_h[coarse], trajectories[fine], spaces_by_h[fine])
        )
    header = ["h", *ERROR_LABELS]
    _atomic_write(errors_path, _csv(header, [[format_h(r.h), *r.values()] for r in rows]))
    rates = convergence_rates(rows)
    _atomic_write(
        rates_path,
        _csv(header, [[format_h(r["h"]), *(r[label] for label in ERROR_LABELS)] for r in rates]),
    )
    print(f"convergence: {len(rows)} error rows, {len(rates)} rate rows in {cfg.out}")
    return 0 if failed is None else 1


def cmd_infsup(cfg: RunConfig) -> int:
    """Inf-sup diagnostics at t=0 and at the end of the pulling, per mesh."""
    cfg.validate()
    t0_path = _output_path(cfg, "infsup_t0.csv", allow_existing=cfg.resume)
    t1_path = _output_path(cfg, "infsup_t1.csv", allow_existing=cfg.resume)
    _write_resolved_config(cfg)

    header = ["h", "b1", "b2", "s_A_kerB", "e_A_kerB"]
    rows_t0, rows_t1 = [], []
    status = 0
    for h in cfg.ladder:
        mesh = build_uniform_mesh(MeshParams(h=h, ar=cfg.material.ar))
        spaces = build_problem_spaces(mesh)
        state0 = initial_state(spaces, cfg.material)
        rep0 = infsup_report(state0, cfg.material, spaces)
        rows_t0.append([format_h(h), rep0.beta_b1, rep0.beta_b2, rep0.s_A_kerB, rep0.e_A_kerB])
        try:
            traj = _run_to_t1(cfg, h, spaces)
        except SolverError as exc:
            print(f"error: h={format_h(h)}: {exc}", file=sys.stderr)
            status = 1
            continue
        rep1 = infsup_report(traj.final_state, cfg.material, spaces)
        rows_t1.append([format_h(h), rep1.beta_b1, rep1.beta_b2, rep1.s_A_kerB, rep1.e_A_kerB])
    _atomic_write(t0_path, _csv(header, rows_t0))
    _atomic_write(t1_path, _csv(header, rows_t1))
    print(f"infsup: {len(rows_t0)} rows at t=0, {len(rows_t1)} at t=1 in {cfg.out}")
    return status


def cmd_verify_analytic(cfg: RunConfig) -> int:
    """Run the randomized analytic suites; nonzero exit on any failure."""
    results = verify_propositions(a_values=cfg.a_values, n_samples=cfg.samples, seed=cfg.seed)
    failures = 0
    for res in results:
        tag = "PASS" if res.passed else "FAIL"
        print(f"{tag} {res.name}: checked={res.checked} failed={res.failed} worst={res.worst:.3e}")
        failures += res.failed
    total = sum(r.checked for r in results)
    print(f"{'OK' if failures == 0 else 'FAILED'}: {total} checks, {failures} failures")
    return 0 if failures == 0 else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="lcefem",
        description="Mixed finite element solver for the clamped pulling of nematic elastomers",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("run", cmd_run),
        ("convergence", cmd_convergence),
        ("infsup", cmd_infsup),
        ("verify-analytic", cmd_verify_analytic),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="key=value configuration file")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--h", default=None, help="mesh size, e.g. 2^-4")
        p.add_argument("--resume", action="store_true", help="reuse cached final states")
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if name == "verify-analytic":
            p.add_argument("--samples", type=int, default=None, help="samples per suite")
        p.set_defaults(fn=fn)

    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, args)
        return args.fn(cfg)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
