"""Batch front door: run property suites and convergence studies from a
config file or flags, emit CSV tables with gnuplot-ready mirrors, and
exit nonzero when an executed threshold fails.

Exit codes: 0 all executed thresholds pass, 1 threshold failure,
2 usage/config error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys as _sys
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

from . import fem, meshing, properties, reporting, solver, studies
from .manufactured import manufactured
from .nfunc import PStructure

__all__ = ["StudyConfig", "main", "parse_config_file"]

EXIT_OK = 0
EXIT_THRESHOLD = 1
EXIT_USAGE = 2
EXIT_SOLVER = 3


@dataclass(frozen=True)
class StudyConfig:
    p: float = 2.0
    delta: float = 0.0
    mesh_levels: tuple = (4, 8, 16, 32)
    dt_couple: float = 0.125       # dt = dt_couple * h^min(1, 2/p)
    dt_steps: tuple = ()           # fixed step counts for temporal studies
    ref_steps: int = 256
    t_end: float = 0.25
    solution: str = "stream1"
    tol: float = 1e-10
    out_dir: str = "out"
    jobs: int = 1
    seed: int = properties.CALIBRATION_SEED

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError("p must exceed 1")
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must lie in [0, 1]")
        levels = tuple(self.mesh_levels)
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("mesh levels must increase strictly")
        if any(n & (n - 1) for n in levels):
            raise ValueError("mesh levels must be powers of two")
        for n in levels:
            dt = studies.coupled_dt(self.p, n, self.dt_couple)
            if dt >= 0.5:
                raise ValueError(f"coupled dt {dt:.3g} at level {n} reaches 0.5")
        for m in self.dt_steps:
            if self.t_end / m >= 0.5:
                raise ValueError(f"dt {self.t_end / m:.3g} reaches 0.5")

    def serialize(self) -> str:
        lines = [
            f"p = {self.p:.17g}",
            f"delta = {self.delta:.17g}",
            "levels = " + ",".join(str(n) for n in self.mesh_levels),
            f"dt_couple = {self.dt_couple:.17g}",
            "dt_steps = " + ",".join(str(m) for m in self.dt_steps),
            f"ref_steps = {self.ref_steps}",
            f"T = {self.t_end:.17g}",
            f"solution = {self.solution}",
            f"tol = {self.tol:.17g}",
            f"out = {self.out_dir}",
            f"jobs = {self.jobs}",
            f"seed = {self.seed}",
        ]
        return "\n".join(lines) + "\n"


def parse_config_file(text: str) -> dict:
    """Flat `key = value` lines; '#' starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key] = value
    return out


def config_from_mapping(kv: dict) -> StudyConfig:
    def ints(s):
        return tuple(int(v) for v in s.split(",") if v.strip())

    kwargs = {}
    converters = {
        "p": ("p", float),
        "delta": ("delta", float),
        "levels": ("mesh_levels", ints),
        "dt_couple": ("dt_couple", float),
        "dt_steps": ("dt_steps", ints),
        "ref_steps": ("ref_steps", int),
        "T": ("t_end", float),
        "solution": ("solution", str),
        "tol": ("tol", float),
        "out": ("out_dir", str),
        "jobs": ("jobs", int),
        "seed": ("seed", int),
    }
    for key, value in kv.items():
        if key not in converters:
            raise ValueError(f"unknown config key {key!r}")
        name, conv = converters[key]
        kwargs[name] = conv(value)
    return StudyConfig(**kwargs)


def eoc_f_threshold(p: float) -> float:
    """Minimal acceptable terminal EOC of the F-error per exponent."""
    if p == 2.0:
        return 0.90
    if p < 2.0:
        return 0.85
    return 0.825 * (2.0 / p)


def _write(out_dir: Path, name: str, csv_text: str, dat_text: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.csv").write_text(csv_text)
    (out_dir / f"{name}.dat").write_text(dat_text)


class _Report:
    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.lines: List[str] = []
        self.failed = False

    def add(self, name: str, passed: bool, detail: str = ""):
        self.lines.append(f"{'PASS' if passed else 'FAIL'} {name} {detail}".rstrip())
        if not passed:
            self.failed = True

    def write(self):
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.out_dir / "report.txt").write_text("\n".join(self.lines) + "\n")
        for line in self.lines:
            print(line)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_properties(cfg: StudyConfig, report: _Report) -> None:
    results = properties.all_checks()
    for r in results:
        report.add(r.name, r.passed, r.detail)
    lines = [r.line() for r in results]
    (report.out_dir / "properties.csv").parent.mkdir(parents=True, exist_ok=True)
    (report.out_dir / "properties.csv").write_text(
        "name,passed\n" + "\n".join(f"{r.name},{int(r.passed)}" for r in results) + "\n"
    )
    (report.out_dir / "properties.dat").write_text("\n".join(lines) + "\n")
    for p in (1.5, 2.0, 3.0):
        bands = properties.calibrate_nfunc_bands(p)
        properties.write_bands(report.out_dir / properties.band_filename(p), bands)


def cmd_convergence(cfg: StudyConfig, report: _Report, mode: str = "spatial") -> None:
    ps = PStructure(cfg.p, cfg.delta)
    if mode == "temporal":
        steps = cfg.dt_steps or (4, 8, 16, 32)
        study = studies.temporal_study(
            ps, cfg.mesh_levels[-1], steps, cfg.ref_steps, t_end=cfg.t_end,
            sol_id=cfg.solution, tol=cfg.tol, jobs=cfg.jobs,
        )
        _write(Path(cfg.out_dir), "temporal", study.to_csv(), study.to_dat())
        last = study.eocs[-1]
        report.add(f"temporal_eoc_p{cfg.p:g}", last >= 0.90,
                   f"eoc {last:.3f} >= 0.90")
        return
    # combined mode halves dt with h regardless of the spatial rate
    exponent = 1.0 if mode == "combined" else None
    table = studies.spatial_study(
        ps, cfg.mesh_levels, t_end=cfg.t_end, dt_couple=cfg.dt_couple,
        sol_id=cfg.solution, tol=cfg.tol, jobs=cfg.jobs, dt_exponent=exponent,
    )
    _write(Path(cfg.out_dir), mode, table.to_csv(), table.to_dat())
    eoc_u, eoc_F = table.eoc_columns()
    thr = eoc_f_threshold(cfg.p)
    report.add(f"{mode}_eoc_F_p{cfg.p:g}", eoc_F[-1] >= thr,
               f"eoc {eoc_F[-1]:.3f} >= {thr:.3f}")
    if cfg.p == 2.0:
        report.add(f"{mode}_eoc_u_p{cfg.p:g}", eoc_u[-1] >= 0.90,
                   f"eoc {eoc_u[-1]:.3f} >= 0.90")


def cmd_interp_study(cfg: StudyConfig, report: _Report) -> None:
    ps = PStructure(cfg.p, cfg.delta)
    study = studies.interp_study(ps, cfg.mesh_levels, sol_id=cfg.solution)
    _write(Path(cfg.out_dir), "interp", study.to_csv(), study.to_dat())
    report.add(f"interp_l2_eoc_p{cfg.p:g}", study.eocs["l2"][-1] >= 1.8,
               f"eoc {study.eocs['l2'][-1]:.3f} >= 1.8")
    report.add(f"interp_fmap_eoc_p{cfg.p:g}", study.eocs["fmap"][-1] >= 0.9,
               f"eoc {study.eocs['fmap'][-1]:.3f} >= 0.9")


def cmd_initval_study(cfg: StudyConfig, report: _Report) -> None:
    ps = PStructure(cfg.p, cfg.delta)
    study = studies.initval_study(ps, cfg.mesh_levels, sol_id=cfg.solution,
                                  tol=cfg.tol)
    _write(Path(cfg.out_dir), "initval", study.to_csv(), study.to_dat())
    thr = 0.85 * min(1.0, 2.0 / cfg.p)
    last = study.eocs["u0"][-1]
    report.add(f"initval_eoc_p{cfg.p:g}", last >= thr,
               f"eoc {last:.3f} >= {thr:.3f}")


def cmd_infsup(cfg: StudyConfig, report: _Report) -> None:
    levels, betas = studies.infsup_study(cfg.mesh_levels)
    lines_csv = ["n,beta"] + [f"{n},{b:.10e}" for n, b in zip(levels, betas)]
    lines_dat = ["# n beta"] + [f"{n} {b:.10e}" for n, b in zip(levels, betas)]
    _write(Path(cfg.out_dir), "infsup", "\n".join(lines_csv) + "\n",
           "\n".join(lines_dat) + "\n")
    report.add("infsup_lower", min(betas) >= 0.1, f"min beta {min(betas):.4f}")
    drift = abs(betas[-1] / betas[-2] - 1.0)
    report.add("infsup_stable", drift <= 0.25, f"drift {drift:.4f} <= 0.25")


def cmd_run(cfg: StudyConfig, report: _Report) -> None:
    ps = PStructure(cfg.p, cfg.delta)
    sol = manufactured(cfg.solution, ps)
    n = cfg.mesh_levels[-1]
    sys_ = fem.FeSystem(meshing.build_structured(n))
    dt = studies.coupled_dt(cfg.p, n, cfg.dt_couple)
    grid = solver.TimeGrid(cfg.t_end, studies._steps_for(dt, cfg.t_end))
    traj = solver.run(sys_, ps, grid, sol.initial_velocity(), sol.forcing,
                      solver.SolverOptions(tol=cfg.tol))
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trajectory.csv").write_text(traj.checkpoint_csv())
    row = reporting.error_report(traj, sol, sys_, ps)
    report.add(f"run_n{n}_p{cfg.p:g}", True,
               f"err_u {row.err_u:.3e} err_F {row.err_F:.3e}")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pdstokes",
        description="shear-dependent Stokes flow laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("properties", "interp-study", "infsup", "initval-study",
                 "convergence", "run"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=str, default=None)
        sp.add_argument("--p", type=float, default=None)
        sp.add_argument("--delta", type=float, default=None)
        sp.add_argument("--levels", type=str, default=None,
                        help="comma list, e.g. 4,8,16,32")
        sp.add_argument("--dt-couple", type=float, default=None)
        sp.add_argument("--dt-steps", type=str, default=None,
                        help="comma list of step counts (temporal mode)")
        sp.add_argument("--ref-steps", type=int, default=None)
        sp.add_argument("--T", type=float, default=None)
        sp.add_argument("--tol", type=float, default=None)
        sp.add_argument("--out", type=str, default=None)
        sp.add_argument("--jobs", type=int, default=None)
        sp.add_argument("--seed", type=int, default=None)
        if name == "convergence":
            sp.add_argument("--mode", choices=("spatial", "temporal", "combined"),
                            default="spatial")
    return parser


def _merge_config(args) -> StudyConfig:
    kv = {}
    if args.config:
        kv.update(parse_config_file(Path(args.config).read_text()))
    overrides = {
        "p": args.p, "delta": args.delta, "levels": args.levels,
        "dt_couple": args.dt_couple, "dt_steps": args.dt_steps,
        "ref_steps": args.ref_steps, "T": args.T, "tol": args.tol,
        "out": args.out, "jobs": args.jobs, "seed": args.seed,
    }
    for key, value in overrides.items():
        if value is not None:
            kv[key] = str(value)
    return config_from_mapping(kv)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        cfg = _merge_config(args)
    except (ValueError, OSError) as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_USAGE

    report = _Report(Path(cfg.out_dir))
    try:
        if args.command == "properties":
            cmd_properties(cfg, report)
        elif args.command == "interp-study":
            cmd_interp_study(cfg, report)
        elif args.command == "infsup":
            cmd_infsup(cfg, report)
        elif args.command == "initval-study":
            cmd_initval_study(cfg, report)
        elif args.command == "convergence":
            cmd_convergence(cfg, report, mode=args.mode)
        elif args.command == "run":
            cmd_run(cfg, report)
    except solver.SolverError as exc:
        report.add(f"{args.command}_solver", False, str(exc))
        report.write()
        print(f"solver failure: {exc}", file=_sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_USAGE
    report.write()
    return EXIT_THRESHOLD if report.failed else EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
