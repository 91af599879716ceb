"""Command-line interface: apply/fit/simulate/estimate/check over EQF files.

Exit codes: 0 success, 1 property-check failure, 2 input/format error,
3 shape/rule mismatch, 4 numerical guard (instability, blow-up,
unidentifiable parameters).  All numbers print at 17 significant digits.
"""

from __future__ import annotations

import argparse
import contextlib
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft

from .checks import all_passed, run_checks
from .convolve import DIRECT, FOURIER
from .fields import FieldError, RuleError, TensorField
from .formats import (FormatError, fmt_float, format_keyvalues, read_eqf,
                      write_eqf, write_keyvalues)
from .grid import BOUNDARIES, Grid, GridError
from .kernels import KernelError, named_profile
from .learn import (apply_neural, default_param_radial, fit_least_squares,
                    load_model, loss, make_neural_op, save_model)
from .operators import REGISTRY, make_operator
from .sim import (DiffusionAdvectionModel, EstimationError, SimulationError,
                  StabilityError, estimate_parameters, load_trajectory,
                  max_stable_dt, save_trajectory, simulate)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_FORMAT = 2
EXIT_RULE = 3
EXIT_NUMERIC = 4


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return fmt_float(float(v))
    if isinstance(v, (list, tuple, np.ndarray)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


@dataclass
class RunReport:
    command: str
    inputs: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)

    def keyvalues(self) -> dict:
        kv = {"command": self.command}
        for k, v in self.inputs.items():
            kv[f"input.{k}"] = _fmt(v)
        for k, v in self.parameters.items():
            kv[f"param.{k}"] = _fmt(v)
        for k, v in self.metrics.items():
            kv[f"metric.{k}"] = _fmt(v)
        for i, p in enumerate(self.outputs):
            kv[f"output.{i}"] = str(p)
        return kv

    def text(self) -> str:
        lines = [f"command: {self.command}"]
        for k, v in self.inputs.items():
            lines.append(f"  input     {k} = {_fmt(v)}")
        for k, v in self.parameters.items():
            lines.append(f"  parameter {k} = {_fmt(v)}")
        for k, v in self.metrics.items():
            lines.append(f"  metric    {k} = {_fmt(v)}")
        for p in self.outputs:
            lines.append(f"  output    {p}")
        return "\n".join(lines)


def _emit(report: RunReport, report_path: str | None) -> None:
    print(report.text())
    print(format_keyvalues(report.keyvalues()), end="")
    if report_path:
        write_keyvalues(report_path, report.keyvalues())


def _norm_stats(u: TensorField) -> tuple:
    norms = np.sqrt(np.sum(u.components ** 2, axis=0))
    idx = np.unravel_index(int(np.argmax(norms)), norms.shape)
    return float(norms[idx]), list(int(i) for i in idx)


def cmd_apply(args) -> int:
    u, _ = read_eqf(args.input)
    if args.boundary:
        u = TensorField(u.grid.with_boundary(args.boundary), u.l, u.components)
    t0 = time.perf_counter()
    if args.operator in REGISTRY:
        params = {}
        if args.operator == "diffusion":
            if args.D is None or args.t is None:
                print("apply diffusion requires --D and --t", file=sys.stderr)
                return EXIT_FORMAT
            params = {"D": args.D, "t": args.t}
        op = make_operator(args.operator, u.grid, **params)
        if args.path:
            op.path = args.path
        v = op.apply(u)
        op_label = args.operator
    elif os.path.exists(args.operator):
        nop = load_model(args.operator)
        if args.path:
            nop.path = args.path
        v = apply_neural(nop, u)
        op_label = f"model:{args.operator}"
    else:
        print(f"unknown operator {args.operator!r}; available: "
              f"{', '.join(sorted(REGISTRY))} (or a model manifest path)",
              file=sys.stderr)
        return EXIT_FORMAT
    elapsed = time.perf_counter() - t0
    write_eqf(args.output, v)
    in_max, _ = _norm_stats(u)
    out_max, out_idx = _norm_stats(v)
    report = RunReport(
        "apply",
        inputs={"field": args.input, "l": u.l, "shape": list(u.grid.shape)},
        parameters={"operator": op_label, "path": args.path or "auto",
                    "boundary": u.grid.boundary},
        metrics={"input_max_norm": in_max, "output_max_norm": out_max,
                 "output_max_norm_voxel": out_idx, "wall_seconds": elapsed},
        outputs=[args.output])
    _emit(report, args.report)
    return EXIT_OK


def _read_pair_manifest(path) -> list:
    base = os.path.dirname(os.path.abspath(path))
    pairs = []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise FormatError(f"{path}: expected 'input.eqf output.eqf', got {line!r}")
            paths = [p if os.path.isabs(p) else os.path.join(base, p) for p in parts]
            pairs.append((read_eqf(paths[0])[0], read_eqf(paths[1])[0]))
    if not pairs:
        raise FormatError(f"{path}: manifest has no field pairs")
    return pairs


def _write_radial_csv(path, param, grid, reference: str | None) -> None:
    h = min(grid.spacing)
    r_max = min(n * s for n, s in zip(grid.shape, grid.spacing)) / 2.0
    radii = np.arange(0.5 * h, r_max, 0.25 * h)
    fitted = param.evaluate(radii)
    columns = ["r", "R_fitted"]
    rows = [radii, fitted]
    if reference:
        columns.append("R_reference")
        rows.append(named_profile(reference)(radii))
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for k in range(len(radii)):
            fh.write(",".join(fmt_float(float(row[k])) for row in rows) + "\n")


def cmd_fit(args) -> int:
    dataset = _read_pair_manifest(args.manifest)
    grid = dataset[0][0].grid
    l_u = dataset[0][0].l
    t0 = time.perf_counter()
    param = default_param_radial(grid, args.l_h, n_gaussians=args.gaussians)
    op = make_neural_op(grid, kind=args.kind, l_u=l_u, l_h=args.l_h, param=param)
    result = fit_least_squares(op, dataset, ridge=args.ridge)
    fitted = op.with_params(result.amplitudes)
    elapsed = time.perf_counter() - t0
    metrics = {"train_relative_mse": result.residual,
               "condition": result.condition,
               "flagged": int(result.flagged),
               "wall_seconds": elapsed}
    if args.test:
        test_pairs = _read_pair_manifest(args.test)
        metrics["test_relative_mse"] = loss(fitted, test_pairs)
    save_model(args.model, fitted)
    outputs = [args.model]
    if args.csv:
        _write_radial_csv(args.csv, fitted.param, grid, args.reference)
        outputs.append(args.csv)
    report = RunReport(
        "fit",
        inputs={"manifest": args.manifest, "pairs": len(dataset),
                "shape": list(grid.shape), "l_u": l_u},
        parameters={"kind": args.kind, "l_h": args.l_h,
                    "gaussians": args.gaussians, "ridge": args.ridge},
        metrics=metrics,
        outputs=outputs)
    _emit(report, args.report)
    return EXIT_OK


def cmd_simulate(args) -> int:
    u0, _ = read_eqf(args.u0)
    grid = u0.grid.with_boundary(args.boundary) if args.boundary else u0.grid
    u0 = TensorField(grid, u0.l, u0.components)
    source = None
    if args.source != "none":
        source, _ = read_eqf(args.source)
        source = TensorField(grid, source.l, source.components)
    w = [args.wx, args.wy]
    if grid.dim == 3:
        if args.wz is None:
            raise ValueError("3d simulation needs --wz")
        w.append(args.wz)
    elif args.wz is not None:
        raise ValueError("--wz given for a 2d grid")
    try:
        model = DiffusionAdvectionModel(grid, args.D, w, args.dt, source)
    except StabilityError as exc:
        limit = max_stable_dt(grid, args.D, w)
        print(f"{exc}; largest stable dt = {fmt_float(limit)}", file=sys.stderr)
        return EXIT_NUMERIC
    t0 = time.perf_counter()
    traj = simulate(model, u0, args.steps)
    elapsed = time.perf_counter() - t0
    save_trajectory(args.outdir, traj, model)
    vol = grid.voxel_volume
    mass0 = float(np.sum(traj[0].components)) * vol
    mass1 = float(np.sum(traj[-1].components)) * vol
    injected = float(np.sum(model.source.components)) * vol * model.dt * args.steps
    drift = abs(mass1 - mass0 - injected) / max(abs(mass0), abs(mass1), 1e-300)
    report = RunReport(
        "simulate",
        inputs={"u0": args.u0, "source": args.source, "shape": list(grid.shape)},
        parameters={"D": args.D, "w": w, "dt": args.dt, "steps": args.steps,
                    "boundary": grid.boundary},
        metrics={"initial_mass": mass0, "final_mass": mass1,
                 "injected_mass": injected, "mass_drift_relative": drift,
                 "wall_seconds": elapsed},
        outputs=[args.outdir])
    _emit(report, args.report)
    return EXIT_OK


def cmd_estimate(args) -> int:
    frames, model = load_trajectory(args.trajdir)
    t0 = time.perf_counter()
    result = estimate_parameters(frames, model.dt, model.source,
                                 smooth_sigma=args.smooth)
    elapsed = time.perf_counter() - t0
    metrics = {"D_hat": result.D, "w_hat": list(result.w),
               "residual_relative_mse": result.residual,
               "condition": result.condition, "wall_seconds": elapsed}
    metrics["D_true"] = model.D
    metrics["w_true"] = list(model.w)
    if model.D != 0:
        metrics["D_relative_error"] = abs(result.D - model.D) / abs(model.D)
    wnorm = float(np.linalg.norm(model.w))
    if wnorm > 0:
        metrics["w_relative_error"] = float(np.linalg.norm(result.w - model.w)) / wnorm
    report = RunReport(
        "estimate",
        inputs={"trajectory": args.trajdir, "frames": len(frames), "dt": model.dt},
        parameters={"smooth": args.smooth},
        metrics=metrics,
        outputs=[])
    _emit(report, args.report)
    return EXIT_OK


def cmd_check(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.input:
        u, _ = read_eqf(args.input)
        source = args.input
    elif args.random:
        shape = tuple(int(x) for x in args.random.split(","))
        grid = Grid.centered(shape, 1.0, boundary=args.boundary or "zero")
        u = TensorField.random(grid, args.l, rng)
        source = f"random shape={args.random} l={args.l} seed={args.seed}"
    else:
        print("check needs an input file or --random SHAPE", file=sys.stderr)
        return EXIT_FORMAT
    results = run_checks(u, rng, corrupt=args.corrupt)
    for r in results:
        print(r.line())
    metrics = {}
    for r in results:
        key = r.name.replace(" ", "_").replace("(", "").replace(")", "")
        metrics[key] = r.deviation
    metrics["checks_passed"] = sum(r.passed for r in results)
    metrics["checks_total"] = len(results)
    report = RunReport(
        "check",
        inputs={"field": source, "l": u.l, "shape": list(u.grid.shape)},
        parameters={"corrupt": int(args.corrupt)},
        metrics=metrics,
        outputs=[])
    _emit(report, args.report)
    return EXIT_OK if all_passed(results) else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="eqfield",
        description="Rotation-equivariant tensor-field operators on regular grids.")
    p.add_argument("--seed", type=int, default=0, help="seed for generated fields")
    p.add_argument("--threads", type=int, default=None,
                   help="FFT worker threads (default: library default)")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("apply", help="apply a named operator or fitted model")
    a.add_argument("operator", help="registry name or model manifest path")
    a.add_argument("input", help="input EQF field")
    a.add_argument("output", help="output EQF field")
    a.add_argument("--path", choices=(DIRECT, FOURIER))
    a.add_argument("--boundary", choices=tuple(BOUNDARIES))
    a.add_argument("--D", type=float, help="diffusivity (diffusion operator)")
    a.add_argument("--t", type=float, help="time (diffusion operator)")
    a.add_argument("--report", help="write the key=value report here")
    a.set_defaults(func=cmd_apply)

    f = sub.add_parser("fit", help="fit a neural operator to field pairs")
    f.add_argument("manifest", help="text file: one 'input.eqf target.eqf' per line")
    f.add_argument("--model", required=True, help="output model manifest")
    f.add_argument("--kind", default="scalar",
                   choices=("scalar", "dot", "cross", "matvec"))
    f.add_argument("--l-h", dest="l_h", type=int, default=0, help="kernel order")
    f.add_argument("--gaussians", type=int, default=8, help="Gaussian basis size")
    f.add_argument("--ridge", type=float, default=1e-10)
    f.add_argument("--test", help="held-out pair manifest for test error")
    f.add_argument("--csv", help="write fitted R(r) samples here")
    f.add_argument("--reference", choices=("inverse_r", "inverse_r2", "log_r"),
                   help="analytic reference column for the CSV")
    f.add_argument("--report")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="explicit-Euler diffusion-advection run")
    s.add_argument("source", help="source EQF field, or 'none'")
    s.add_argument("u0", help="initial state EQF field")
    s.add_argument("outdir", help="trajectory output directory")
    s.add_argument("--D", type=float, required=True)
    s.add_argument("--wx", type=float, required=True)
    s.add_argument("--wy", type=float, required=True)
    s.add_argument("--wz", type=float, default=None)
    s.add_argument("--dt", type=float, required=True)
    s.add_argument("--steps", type=int, required=True)
    s.add_argument("--boundary", choices=tuple(BOUNDARIES))
    s.add_argument("--report")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="recover D and w from a trajectory")
    e.add_argument("trajdir", help="directory written by simulate")
    e.add_argument("--smooth", type=float, default=0.0,
                   help="Gaussian prefilter width for noisy frames (length units)")
    e.add_argument("--report")
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("check", help="equivariance/linearity/calculus property suite")
    c.add_argument("input", nargs="?", help="EQF field to check")
    c.add_argument("--random", help="generate a field: comma-separated shape, e.g. 9,9,9")
    c.add_argument("--l", type=int, default=0, help="order of the generated field")
    c.add_argument("--boundary", choices=tuple(BOUNDARIES))
    c.add_argument("--corrupt", action="store_true",
                   help="negative control: breaks kernel symmetry on purpose")
    c.add_argument("--report")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    ctx = sfft.set_workers(args.threads) if args.threads else contextlib.nullcontext()
    try:
        with ctx:
            return args.func(args)
    except (FileNotFoundError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (StabilityError, SimulationError, EstimationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (RuleError, FieldError, GridError, KernelError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RULE


if __name__ == "__main__":
    sys.exit(main())
