"""Command-line front end: calibrate, synth and bench.

Exit codes: 0 for a certified calibration or a finished command, 2 for an
uncertified calibration (the result is still written), 1 for any error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import yaml

from . import bench
from .calib import (
    METHODS,
    ROBOTWORLD_METHODS,
    CalibrationConfig,
    CalibrationTask,
    calibrate,
    relaxation_for,
)
from .errors import HerwcError, ParseError
from .geom import AbsolutePosePair, MotionPair, Pose, nearest_rotation, quat_to_rotmat, rotmat_to_quat
from .sdp import SolverConfig, export_sdpa

log = logging.getLogger(__name__)

EXIT_OK, EXIT_ERROR, EXIT_UNCERTIFIED = 0, 1, 2
UNITS = {"mm": 1.0, "cm": 10.0, "m": 1000.0}  # to millimetres
POSE_TOL = 1e-4
REORTHO_WARN = 1e-6


class UsageError(HerwcError):
    """Invalid command-line usage."""


# ---------------------------------------------------------------------------
# pose files
# ---------------------------------------------------------------------------

def _line_of(node, path: Sequence) -> Optional[int]:
    """1-based line of the YAML node at ``path``, or of its deepest existing ancestor."""
    line = None
    for key in path:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            node = next((v for k, v in node.value if k.value == key), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            node = None
    if node is not None:
        line = node.start_mark.line + 1
    return line


def _path_str(path: Sequence) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


class _Reader:
    def __init__(self, text: str):
        try:
            self.root = yaml.compose(text, Loader=yaml.SafeLoader)
            self.data = yaml.safe_load(text)
        except yaml.MarkedYAMLError as exc:
            line = exc.problem_mark.line + 1 if exc.problem_mark else None
            raise ParseError(f"malformed document: {exc.problem}", line) from None

    def fail(self, path, msg):
        raise ParseError(f"{_path_str(path)}: {msg}" if path else msg, _line_of(self.root, path))

    def get(self, path):
        cur = self.data
        for key in path:
            try:
                cur = cur[key]
            except (KeyError, IndexError, TypeError):
                self.fail(path, "missing field")
        return cur

    def numbers(self, path, shape):
        try:
            arr = np.array(self.get(path), dtype=float)
        except (TypeError, ValueError):
            self.fail(path, "expected numbers")
        if arr.shape != shape or not np.all(np.isfinite(arr)):
            self.fail(path, f"expected finite numbers of shape {shape}, got shape {arr.shape}")
        return arr


def _checked_rotation(reader: _Reader, path, R) -> np.ndarray:
    dev = float(np.abs(R.T @ R - np.eye(3)).max())
    if dev > POSE_TOL or np.linalg.det(R) <= 0:
        reader.fail(path, f"not a rotation (orthonormality error {dev:.2e})")
    if dev > REORTHO_WARN:
        warnings.warn(f"{_path_str(path)}: re-orthonormalized rotation (error {dev:.2e})", RuntimeWarning)
    return nearest_rotation(R)


def _read_pose(reader: _Reader, path, scale: float) -> Pose:
    entry = reader.get(path)
    if not isinstance(entry, dict):
        reader.fail(path, "pose must be a mapping with 'matrix' or 'quaternion' and 'translation'")
    if "matrix" in entry:
        T = reader.numbers(path + ["matrix"], (4, 4))
        if np.abs(T[3] - [0, 0, 0, 1]).max() > POSE_TOL:
            reader.fail(path + ["matrix"], "last row must be 0 0 0 1")
        R = _checked_rotation(reader, path + ["matrix"], T[:3, :3])
        t = T[:3, 3]
    elif "quaternion" in entry:
        q = reader.numbers(path + ["quaternion"], (4,))
        dev = abs(np.linalg.norm(q) - 1.0)
        if dev > POSE_TOL:
            reader.fail(path + ["quaternion"], f"quaternion norm differs from 1 by {dev:.2e}")
        if dev > REORTHO_WARN:
            warnings.warn(f"{_path_str(path)}: renormalized quaternion (error {dev:.2e})", RuntimeWarning)
        R = quat_to_rotmat(q / np.linalg.norm(q))
        t = reader.numbers(path + ["translation"], (3,))
    else:
        reader.fail(path, "pose needs 'matrix' or 'quaternion' and 'translation'")
    return Pose(R, t * scale, tol=1e-9)


def load_pose_file(path) -> CalibrationTask:
    """Read a pose file (YAML or JSON) into a task with translations in millimetres."""
    text = Path(path).read_text()
    reader = _Reader(text)
    if not isinstance(reader.data, dict):
        raise ParseError("document must be a mapping with 'unit', 'kind' and 'pairs'", 1)
    unit = reader.get(["unit"])
    if unit not in UNITS:
        reader.fail(["unit"], f"unknown unit {unit!r}; use one of {', '.join(UNITS)}")
    kind = reader.get(["kind"])
    if kind not in ("absolute", "relative"):
        reader.fail(["kind"], "kind must be 'absolute' or 'relative'")
    pairs = reader.get(["pairs"])
    if not isinstance(pairs, list) or not pairs:
        reader.fail(["pairs"], "expected a nonempty list of pose pairs")
    scale = UNITS[unit]
    items = [(_read_pose(reader, ["pairs", i, "a"], scale), _read_pose(reader, ["pairs", i, "b"], scale))
             for i in range(len(pairs))]
    if kind == "absolute":
        return CalibrationTask(absolute_poses=tuple(AbsolutePosePair(a, b) for a, b in items))
    return CalibrationTask(motions=tuple(MotionPair(a, b) for a, b in items))


def pose_entry(P: Pose, scale: float = 1.0) -> dict:
    """Serializable pose with both representations; translations divided by ``scale``."""
    t = P.t / scale
    T = P.matrix.copy()
    T[:3, 3] = t
    return {
        "matrix": [[float(v) for v in row] for row in T],
        "quaternion": [float(v) for v in rotmat_to_quat(P.R)],
        "translation": [float(v) for v in t],
    }


def pose_file_doc(pairs, kind: str, unit: str = "mm") -> dict:
    s = UNITS[unit]
    return {
        "unit": unit,
        "kind": kind,
        "pairs": [{"a": pose_entry(p.a, s), "b": pose_entry(p.b, s)} for p in pairs],
    }


def _dump(doc, path: Path):
    if path.suffix == ".json":
        path.write_text(json.dumps(doc, indent=2) + "\n")
    else:
        path.write_text(yaml.safe_dump(doc, sort_keys=False, default_flow_style=None))


def _plain(v):
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return float(v)
    return v if v is None or isinstance(v, str) else str(v)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_calibrate(args) -> int:
    task = load_pose_file(args.input)
    method = args.method
    if method in ROBOTWORLD_METHODS and task.absolute_poses is None:
        raise UsageError(f"{method} needs a file of absolute pose pairs, the input holds relative motions")
    unit = yaml.safe_load(Path(args.input).read_text())["unit"]
    cfg = CalibrationConfig(order=args.order, solver=SolverConfig(duality_gap_tol=args.gap_tol), seed=args.seed)
    if args.export_sdpa:
        _, sdp, _ = relaxation_for(method, task, cfg)
        Path(args.export_sdpa).write_text(export_sdpa(sdp))
        print(f"wrote {args.export_sdpa} ({sdp.num_moments} moments)")
        if args.export_only:
            return EXIT_OK
    res = calibrate(task, method, cfg)
    s = UNITS[unit]
    doc = {
        "method": method,
        "unit": unit,
        "certified": bool(res.certified),
        "objective": float(res.objective),
        "lower_bound": float(res.lower_bound),
        "alpha": float(res.scale / s),
        "X": pose_entry(res.X, s),
    }
    if res.Z is not None:
        doc["Z"] = pose_entry(res.Z, s)
    if res.sign_assignment is not None:
        doc["sign_assignment"] = list(res.sign_assignment)
    doc["diagnostics"] = _plain(res.diagnostics)
    out = Path(args.output) if args.output else Path(args.input).with_name(f"{Path(args.input).stem}.{method}.result.yaml")
    _dump(doc, out)
    state = "certified" if res.certified else "NOT certified"
    print(f"{method}: {state}, objective {res.objective:.6e}, bound {res.lower_bound:.6e}; wrote {out}")
    return EXIT_OK if res.certified else EXIT_UNCERTIFIED


def _spec_from_args(args) -> bench.ScenarioSpec:
    spec = bench.ScenarioSpec()
    if args.scenario:
        spec = bench.ScenarioSpec.from_dict(yaml.safe_load(Path(args.scenario).read_text()) or {})
    kw = spec.to_dict()
    if args.poses is not None:
        kw["num_camera_poses"] = args.poses
    if args.paper_shell:
        kw["camera_shell_radius"] = bench.PAPER_SHELL_RADIUS
    elif args.shell_radius is not None:
        kw["camera_shell_radius"] = args.shell_radius
    if getattr(args, "workspace_points", None) is not None:
        kw["workspace_points"] = args.workspace_points
    return bench.ScenarioSpec.from_dict(kw)


def cmd_synth(args) -> int:
    spec = _spec_from_args(args)
    gt, task = bench.generate_task(spec, args.seed, kinematic=args.kinematic)
    if args.sigma > 0:
        task = bench.noisy_task(gt, args.sigma, args.seed + 1, spec)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    _dump(spec.to_dict(), out / "scenario.yaml")
    truth = {
        "unit": "mm",
        "seed": int(args.seed),
        "X": pose_entry(gt.X),
        "Z": pose_entry(gt.Z),
        "camera_poses": [pose_entry(p) for p in gt.camera_poses],
        "arm_poses": [pose_entry(p) for p in gt.arm_poses],
    }
    if gt.joints is not None:
        truth["joints_deg"] = [[float(v) for v in q] for q in gt.joints]
    _dump(truth, out / "ground_truth.yaml")
    _dump(pose_file_doc(task.absolute_poses, "absolute"), out / "poses_absolute.yaml")
    motions = task.relative_motions()
    _dump(pose_file_doc(motions, "relative"), out / "motions_relative.yaml")
    print(f"wrote {len(task.absolute_poses)} absolute pose pairs and {len(motions)} motion pairs to {out}")
    return EXIT_OK


def _float_list(text: str) -> List[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"cannot parse number list {text!r}") from None
    return vals


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise UsageError("--methods needs at least one method")
    for m in methods:
        if m not in METHODS and m not in bench.BASELINES:
            raise UsageError(f"unknown method {m!r}; choose from {', '.join(METHODS + bench.BASELINES)}")
    if args.full_scale:
        sigmas, ntasks = list(bench.FULL_NOISE_GRID), bench.FULL_TASKS
    else:
        sigmas, ntasks = _float_list(args.noise_grid), args.tasks
    if args.tasks_override is not None:
        ntasks = args.tasks_override
    if not sigmas or any(s < 0 for s in sigmas):
        raise UsageError("noise grid must be a nonempty list of nonnegative values")
    if ntasks < 1:
        raise UsageError("--tasks must be positive")
    spec = _spec_from_args(args)
    seeds = bench.task_seeds(args.seed, ntasks)
    cfg = bench.bench_config(duality_gap_tol=args.gap_tol)
    rows = bench.run_benchmark(spec, methods, sigmas, seeds, cfg, workers=args.workers,
                               record_timing=not args.no_timing)
    text = bench.rows_to_csv(rows)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    print(_summary_table(rows), file=sys.stderr if not args.output else sys.stdout)
    return EXIT_OK


def _summary_table(rows) -> str:
    summ = bench.summarize(rows)
    methods = sorted({k[0] for k in summ})
    sigmas = sorted({k[1] for k in summ})
    lines = ["mean error (mm) per method and noise level", "sigma  " + "".join(f"{m:>12}" for m in methods)]
    for s in sigmas:
        lines.append(f"{s:5.2f}  " + "".join(f"{summ.get((m, s), float('nan')):12.4g}" for m in methods))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _scenario_flags(p):
    p.add_argument("--scenario", help="scenario file (YAML) overriding the defaults")
    p.add_argument("--poses", type=int, help="camera poses per task")
    p.add_argument("--shell-radius", type=float, help="camera half-sphere radius in mm")
    p.add_argument("--paper-shell", action="store_true", help=f"use the literal {bench.PAPER_SHELL_RADIUS:g} mm radius")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="herwc", description="Globally optimal hand-eye and robot-world calibration.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("calibrate", help="calibrate from a pose file")
    c.add_argument("input", help="pose file (YAML or JSON)")
    c.add_argument("--method", required=True, choices=METHODS)
    c.add_argument("--order", type=int, default=2, help="relaxation order")
    c.add_argument("--gap-tol", type=float, default=SolverConfig.duality_gap_tol)
    c.add_argument("--export-sdpa", metavar="PATH", help="also write the relaxation in SDPA sparse format")
    c.add_argument("--export-only", action="store_true", help="stop after --export-sdpa")
    c.add_argument("--seed", type=int, default=0, help="seed of the reframing retry")
    c.add_argument("--output", help="result file (.yaml or .json)")
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("synth", help="generate a synthetic scenario")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sigma", type=float, default=0.0, help="pixel noise of the camera poses")
    s.add_argument("--kinematic", action="store_true", help="draw joint vectors and use forward kinematics")
    s.add_argument("--output", required=True, help="output directory")
    _scenario_flags(s)
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("bench", help="run a noise sweep")
    b.add_argument("--methods", required=True, help="comma-separated methods and baselines")
    b.add_argument("--noise-grid", default=",".join(f"{v:g}" for v in bench.DESK_NOISE_GRID))
    b.add_argument("--tasks", type=int, default=bench.DESK_TASKS)
    b.add_argument("--full-scale", action="store_true", help="100 tasks and 13 noise levels")
    b.add_argument("--seed", type=int, default=0, help="master seed")
    b.add_argument("--gap-tol", type=float, default=SolverConfig.duality_gap_tol)
    b.add_argument("--workers", type=int, help="worker processes (capped by HERWC_THREADS)")
    b.add_argument("--workspace-points", type=int)
    b.add_argument("--no-timing", action="store_true", help="write 0 wall times for byte-stable output")
    b.add_argument("--output", help="CSV path (default stdout)")
    _scenario_flags(b)
    b.set_defaults(func=cmd_bench, tasks_override=None)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ParseError as exc:
        src = f"{args.input}: " if hasattr(args, "input") else ""
        print(f"error: {src}{exc}", file=sys.stderr)
        return EXIT_ERROR
    except (HerwcError, ValueError, OSError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
