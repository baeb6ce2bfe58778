"""Command-line front end: domain listing, single solves, convergence studies.

Exit codes: 0 success, 2 usage or configuration problem, 3 solver failure.
Failures additionally emit one machine-readable JSON line on stderr of the
form {"error": {"category": ..., "message": ...}}.
"""

from __future__ import annotations

import json
import math
import os
import sys
from pathlib import Path

# honor the thread cap before any numerical library spins up its pools
_threads = os.environ.get("DIRFEM_THREADS")
if _threads:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(_var, _threads)

import argparse

import numpy as np

from .control import ControlProblem, solve_control
from .functions import BUILTIN_FUNCTION_NAMES
from .geometry import BUILTIN_DOMAIN_NAMES, builtin_domain
from .meshing import bisect_refine, initial_mesh, save_mesh
from .sparselin import SolverFailure
from .study import (
    BVP_METRICS,
    CONTROL_METRICS,
    StudyConfig,
    run_bvp_study,
    run_control_study,
)

_PRESET_DIR = Path(__file__).parent / "presets"
PRESET_NAMES = ("table1", "table2", "table3")

_OMEGA135_NOTE = (
    "omega135 is the intersection of the square (-1,1)^2 with the sector "
    "0 < phi < 3*pi/4; its vertex list (0,0), (1,0), (1,1), (-1,1), "
    "(-sqrt(2)/2, sqrt(2)/2) includes the last point so that the sector "
    "cut lands on a polygon vertex, but the interior angle there is pi, "
    "so it is not a corner and does not enter omega_max."
)


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _emit_error(category: str, message: str) -> None:
    line = json.dumps({"error": {"category": category, "message": message}})
    print(line, file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse hook; keep exit code 2
        _emit_error("usage", message)
        self.print_usage(sys.stderr)
        raise SystemExit(2)


# ---------------------------------------------------------------------------
# configuration handling
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "domain",
    "levels",
    "reference_offset",
    "nu",
    "f",
    "u_d",
    "y_exact",
    "solver",
    "study",
}
_SOLVER_KEYS = {"gmres_tol", "restart", "cg_tol"}
_STUDY_KEYS = {"metrics"}


def _load_config(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path!r}: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def _load_preset(name: str) -> dict:
    if name not in PRESET_NAMES:
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        )
    return json.loads((_PRESET_DIR / f"{name}.json").read_text())


def _check_keys(cfg: dict) -> None:
    for key in cfg:
        if key not in _TOP_KEYS:
            raise ConfigError(
                f"unknown config field {key!r}; allowed: "
                f"{', '.join(sorted(_TOP_KEYS))}"
            )
    solver = cfg.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("config field 'solver' must be an object")
    for key in solver:
        if key not in _SOLVER_KEYS:
            raise ConfigError(
                f"unknown solver field {key!r}; allowed: "
                f"{', '.join(sorted(_SOLVER_KEYS))}"
            )
    study = cfg.get("study", {})
    if not isinstance(study, dict):
        raise ConfigError("config field 'study' must be an object")
    for key in study:
        if key not in _STUDY_KEYS:
            raise ConfigError(f"unknown study field {key!r}; allowed: metrics")


def _require(cfg: dict, field: str):
    if field not in cfg or cfg[field] is None:
        raise ConfigError(f"config field {field!r} is required")
    return cfg[field]


def _as_positive_float(cfg_value, field: str) -> float:
    try:
        value = float(cfg_value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config field {field!r} must be a number") from exc
    if not value > 0.0 or not math.isfinite(value):
        raise ConfigError(f"config field {field!r} must be positive and finite")
    return value


def _domain_of(cfg: dict):
    name = _require(cfg, "domain")
    if name not in BUILTIN_DOMAIN_NAMES:
        raise ConfigError(
            f"unknown domain {name!r}; available: {', '.join(BUILTIN_DOMAIN_NAMES)}"
        )
    return name


def _rows_of(cfg: dict) -> tuple[int, int]:
    levels = _require(cfg, "levels")
    if isinstance(levels, int):
        levels = [levels, levels]
    if (
        not isinstance(levels, list)
        or len(levels) != 2
        or not all(isinstance(v, int) for v in levels)
    ):
        raise ConfigError(
            "config field 'levels' must be an integer or a pair [coarsest, finest]"
        )
    lo, hi = levels
    if lo < 0 or hi < lo:
        raise ConfigError(f"config field 'levels' is not a valid range: {levels}")
    return lo, hi


def _single_level_of(cfg: dict) -> int:
    lo, hi = _rows_of(cfg)
    if lo != hi:
        raise ConfigError(
            "solve-control expects a single level; give 'levels' as one integer"
        )
    return hi


def _solver_of(cfg: dict) -> dict:
    solver = cfg.get("solver", {})
    out = {
        "gmres_tol": 1e-10,
        "restart": 50,
        "cg_tol": 1e-13,
    }
    if "gmres_tol" in solver:
        out["gmres_tol"] = _as_positive_float(solver["gmres_tol"], "solver.gmres_tol")
    if "cg_tol" in solver:
        out["cg_tol"] = _as_positive_float(solver["cg_tol"], "solver.cg_tol")
    if "restart" in solver:
        if not isinstance(solver["restart"], int) or solver["restart"] < 1:
            raise ConfigError("config field 'solver.restart' must be a positive integer")
        out["restart"] = solver["restart"]
    return out


def _function_spec(cfg: dict, field: str):
    """Validate a function entry without building it (the library parses)."""
    spec = cfg.get(field)
    if spec is None:
        return None
    if isinstance(spec, (int, float, str)):
        return spec
    raise ConfigError(
        f"config field {field!r} must be a number, a polynomial in x and y, "
        f"or one of the builtins: {', '.join(BUILTIN_FUNCTION_NAMES)}"
    )


def _mesh_at_row(domain_name: str, row: int):
    mesh = initial_mesh(builtin_domain(domain_name))
    for _ in range(2 * row + 2):
        mesh = bisect_refine(mesh)
    return mesh


def _write_effective_config(out_dir: Path, effective: dict) -> None:
    text = json.dumps(effective, indent=2, sort_keys=True) + "\n"
    (out_dir / "effective_config.json").write_text(text)
    print(f"effective config: {json.dumps(effective, sort_keys=True)}")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def _cmd_domains(args) -> int:
    for name in BUILTIN_DOMAIN_NAMES:
        dom = builtin_domain(name)
        degrees = np.degrees(dom.corner_angles)
        corner_bits = []
        for (vx, vy), deg, genuine in zip(
            dom.vertices, degrees, dom.is_genuine_corner
        ):
            tag = "" if genuine else " (collinear, not a corner)"
            corner_bits.append(f"    ({vx:+.6f}, {vy:+.6f})  angle {deg:7.2f} deg{tag}")
        print(
            f"{name}: omega_max = {math.degrees(dom.omega_max):.2f} deg, "
            f"lambda_bar = {dom.lambda_bar:.6f}"
        )
        print("\n".join(corner_bits))
    print()
    print(_OMEGA135_NOTE)
    return 0


def _cmd_solve_control(args) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg)
    domain_name = _domain_of(cfg)
    level = _single_level_of(cfg)
    nu = _as_positive_float(_require(cfg, "nu"), "nu")
    f_spec = _function_spec(cfg, "f")
    u_d_spec = _function_spec(cfg, "u_d")
    if "y_exact" in cfg and cfg["y_exact"] is not None:
        raise ConfigError("config field 'y_exact' belongs to studies, not solves")
    solver = _solver_of(cfg)

    try:
        problem = ControlProblem(builtin_domain(domain_name), nu, f_spec, u_d_spec)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    mesh = _mesh_at_row(domain_name, level)
    solution = solve_control(problem, mesh, **solver)

    out = _out_dir(args)
    save_mesh(mesh, out / "mesh.txt")
    np.savetxt(out / "state.txt", solution.u_h.values, fmt="%.17g")
    np.savetxt(out / "adjoint.txt", solution.p_h.values, fmt="%.17g")
    np.savetxt(out / "control.txt", solution.z_h.values, fmt="%.17g")
    summary = {
        "domain": domain_name,
        "level": level,
        "n_nodes": mesh.n_nodes,
        "n_interior": mesh.n_interior,
        "n_boundary": mesh.n_boundary,
        "nu": nu,
        "objective": solution.objective,
        "gmres_iterations": solution.gmres_iterations,
        "optimality_residual": solution.optimality_residual,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    effective = {
        "domain": domain_name,
        "levels": level,
        "nu": nu,
        "f": f_spec,
        "u_d": u_d_spec,
        "solver": solver,
    }
    _write_effective_config(out, effective)
    if not args.no_figures:
        from .figures import save_control_solution_figure

        save_control_solution_figure(
            mesh,
            solution,
            out / "solution.png",
            title=f"{domain_name}, level {level}, nu={nu:g}",
        )
    print(
        f"objective {solution.objective:.12e}, "
        f"gmres iterations {solution.gmres_iterations}, "
        f"optimality residual {solution.optimality_residual:.3e}"
    )
    print(f"outputs in {out}")
    return 0


def _cmd_study(args) -> int:
    if args.preset and args.config:
        raise ConfigError("give either --preset or --config, not both")
    if args.preset:
        cfg = _load_preset(args.preset)
    elif args.config:
        cfg = _load_config(args.config)
    else:
        raise ConfigError("study needs --preset or --config")
    _check_keys(cfg)

    domain_name = _domain_of(cfg)
    rows = _rows_of(cfg)
    offset = cfg.get("reference_offset", 2)
    if not isinstance(offset, int):
        raise ConfigError("config field 'reference_offset' must be an integer")
    solver = _solver_of(cfg)
    metrics = cfg.get("study", {}).get("metrics")
    if metrics is not None:
        if not isinstance(metrics, list) or not all(
            isinstance(m, str) for m in metrics
        ):
            raise ConfigError("config field 'study.metrics' must be a list of names")
        metrics = tuple(metrics)

    y_spec = _function_spec(cfg, "y_exact")
    f_spec = _function_spec(cfg, "f")
    u_d_spec = _function_spec(cfg, "u_d")
    kind = "bvp" if y_spec is not None else "control"
    if kind == "control":
        nu = _as_positive_float(_require(cfg, "nu"), "nu")
    else:
        nu = float(cfg.get("nu", 1.0))

    try:
        study_cfg = StudyConfig(
            domain=domain_name,
            rows=rows,
            reference_offset=offset,
            nu=nu,
            f=f_spec,
            u_d=u_d_spec,
            y_exact=y_spec,
            metrics=metrics,
            gmres_tol=solver["gmres_tol"],
            restart=solver["restart"],
            cg_tol=solver["cg_tol"],
        )
        table = run_bvp_study(study_cfg) if kind == "bvp" else run_control_study(
            study_cfg
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    out = _out_dir(args)
    (out / "study.csv").write_text(table.to_csv())
    (out / "study.md").write_text(table.to_markdown())
    effective = {
        "domain": domain_name,
        "levels": list(rows),
        "reference_offset": offset,
        "nu": nu,
        "f": f_spec,
        "u_d": u_d_spec,
        "solver": solver,
        "study": {"metrics": list(metrics) if metrics else None},
    }
    if kind == "bvp":
        effective["y_exact"] = y_spec
    _write_effective_config(out, effective)
    if not args.no_figures:
        from .figures import save_convergence_figure

        save_convergence_figure(
            table, out / "convergence.png", title=f"{domain_name} ({kind} study)"
        )
    print(table.to_markdown(), end="")
    print(f"outputs in {out}")
    return 0


# ---------------------------------------------------------------------------
# parser assembly
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(
        prog="dirfem",
        description=(
            "P1 finite elements for Dirichlet boundary control of the "
            "Poisson equation with energy regularization: single solves "
            "and convergence studies on builtin polygonal domains."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_dom = sub.add_parser(
        "domains",
        help="list builtin domains with corner angles and exponents",
        description="List builtin domains. " + _OMEGA135_NOTE,
    )
    p_dom.set_defaults(func=_cmd_domains)

    p_solve = sub.add_parser(
        "solve-control",
        help="solve one regularized control problem and write the solution",
    )
    p_solve.add_argument("--config", required=True, help="JSON config file")
    p_solve.add_argument("--out", required=True, help="output directory")
    p_solve.add_argument(
        "--no-figures", action="store_true", help="skip PNG rendering"
    )
    p_solve.set_defaults(func=_cmd_solve_control)

    p_study = sub.add_parser(
        "study",
        help="run a convergence study and write CSV/Markdown tables",
    )
    p_study.add_argument(
        "--preset", help=f"builtin study preset ({', '.join(PRESET_NAMES)})"
    )
    p_study.add_argument("--config", help="JSON config file")
    p_study.add_argument("--out", required=True, help="output directory")
    p_study.add_argument(
        "--no-figures", action="store_true", help="skip PNG rendering"
    )
    p_study.set_defaults(func=_cmd_study)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        _emit_error("config", str(exc))
        return 2
    except SolverFailure as exc:
        _emit_error("solver", str(exc))
        return 3


if __name__ == "__main__":
    sys.exit(main())
