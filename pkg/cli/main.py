#!/usr/bin/env python3
"""dirmeanshift: batch command line for directional mean shift experiments.

Usage:
    dirmeanshift simulate --n 1000 --seed 0 -o out/           Draw a dataset from a vMF mixture
    dirmeanshift modes -i out/dataset.csv -o out/            Find the modes of the KDE
    dirmeanshift basins -i out/dataset.csv --grid-deg 2      Label a lon/lat grid by basin
    dirmeanshift emfit -i out/dataset.csv --components 3     Fit a vMF mixture by EM
    dirmeanshift diagnose -i out/dataset.csv                 Trajectory and Jacobian at its mode
    dirmeanshift bandwidth -i out/dataset.csv                Print the rule-of-thumb bandwidth

Exit codes: 0 success, 1 runtime/domain error, 2 usage error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from algorithms.mean_shift.src import diagnostics, dms
from algorithms.vmf_mixture.src.vmf_mixture import (
    VmfMixture,
    em_fit,
    match_components,
    permuted,
    rule_of_thumb_bandwidth,
    sample,
)
from framework import __version__
from framework.core.config_loader import RunConfig, load_mixture_spec, load_run_config
from framework.core.errors import DirectionalStatsError, UnsupportedDimensionError
from framework.core.kde import KdeModel
from framework.core.sphere_core import geodesic_distances, lonlat_grid, lonlat_to_unit, unit_to_lonlat

from .io import Dataset, ingest, write_csv, write_json, write_points_csv

logger = logging.getLogger("dirmeanshift")

DEFAULT_SCENARIO = Path(__file__).resolve().parent.parent / "algorithms" / "vmf_mixture" / "scenarios" / "three_component.yaml"


class OutputDir:
    """Output directory that remembers what it wrote, so a failed run can clean up."""

    def __init__(self, path: str):
        self.root = Path(path)
        self.written: List[Path] = []

    def file(self, name: str) -> Path:
        self.root.mkdir(parents=True, exist_ok=True)
        target = self.root / name
        self.written.append(target)
        return target

    def cleanup(self) -> None:
        for target in self.written:
            if target.exists():
                target.unlink()
                logger.info("Removed partial output %s", target)


def _build_model(data: Dataset, config: RunConfig) -> KdeModel:
    h = rule_of_thumb_bandwidth(data.points) if config.uses_rule_of_thumb else float(config.bandwidth)
    return KdeModel.build(
        data.points,
        h=h,
        kernel=config.kernel,
        weights=config.weights,
        concentrations=config.concentrations,
        method=config.normalization,
    )


def _mode_record(model: KdeModel, modes: dms.ModeSet, k: int, eps: float) -> dict:
    m = modes.modes[k]
    record = {
        "index": k,
        "coords": m.tolist(),
        "density": float(modes.densities[k]),
        "count": int(modes.counts[k]),
        "rate_bound": None,
    }
    if model.q == 2:
        record["lonlat"] = list(unit_to_lonlat(m))
    if model.kernel.twice_differentiable:
        record["rate_bound"] = diagnostics.rate_bound(model, m, eps)
    return record


def _modes_payload(model: KdeModel, modes: dms.ModeSet, config: RunConfig) -> dict:
    return {
        "kernel": model.kernel.spec,
        "bandwidth": model.h,
        "n": model.n,
        "q": model.q,
        "eps": config.eps,
        "merge_tol": config.merge_tol,
        "modes": [_mode_record(model, modes, k, config.eps) for k in range(len(modes))],
        "rejected_endpoints": modes.rejected.tolist(),
    }


def cmd_simulate(args, config: RunConfig, out: OutputDir) -> None:
    """Draw a dataset from a mixture spec."""
    spec = load_mixture_spec(args.mixture_spec or DEFAULT_SCENARIO)
    n = args.n or spec.n
    if n is None:
        raise ValueError("Sample size missing: pass --n or set n in the mixture spec")
    points = sample(VmfMixture.from_spec(spec), n, config.seed)
    path = write_points_csv(out.file("dataset.csv"), points)
    print(path)


def cmd_modes(args, config: RunConfig, out: OutputDir) -> None:
    data = ingest(args.input, args.format)
    model = _build_model(data, config)
    modes = dms.find_modes(
        model, eps=config.eps, max_iter=config.max_iter, merge_tol=config.merge_tol,
        joint_stop=config.joint_stop,
    )
    path = write_json(out.file("modes.json"), _modes_payload(model, modes, config))
    print(path)


def cmd_basins(args, config: RunConfig, out: OutputDir) -> None:
    data = ingest(args.input, args.format)
    if data.dim_q != 2:
        raise UnsupportedDimensionError(f"Basin grids are drawn on the 2-sphere, data have q = {data.dim_q}")
    model = _build_model(data, config)
    lonlat, grid = lonlat_grid(config.grid_deg)
    basins = dms.basin_grid(
        model, grid, eps=config.eps, max_iter=config.max_iter, merge_tol=config.merge_tol,
        joint_stop=config.joint_stop,
    )
    rows = (
        (float(lon), float(lat), int(label), int(it))
        for (lon, lat), label, it in zip(lonlat, basins.labels, basins.iterations)
    )
    grid_path = write_csv(out.file("basins.csv"), ["lon", "lat", "label", "iterations"], rows)
    payload = _modes_payload(model, basins.modes, config)
    payload["grid_deg"] = config.grid_deg
    payload["labelled_fraction"] = basins.labelled_fraction
    modes_path = write_json(out.file("modes.json"), payload)
    print(grid_path)
    print(modes_path)


def cmd_emfit(args, config: RunConfig, out: OutputDir) -> None:
    data = ingest(args.input, args.format)
    report = em_fit(
        data.points, config.components, config.seed, tol=config.em_tol,
        max_iter=config.em_max_iter, refine_kappa=config.refine_kappa,
    )
    fitted = report.fitted
    payload = {
        "components": config.components,
        "iterations": report.iterations,
        "converged": report.converged,
        "loglik": report.loglik_trace[-1],
        "kappa_capped": report.kappa_capped,
    }
    if args.mixture_spec:
        truth = VmfMixture.from_spec(load_mixture_spec(args.mixture_spec))
        if truth.M == fitted.M:
            fitted = permuted(fitted, match_components(fitted.means, truth.means))
            payload["mean_errors_rad"] = np.diag(geodesic_distances(fitted.means, truth.means)).tolist()
            payload["kappa_rel_errors"] = (np.abs(fitted.kappas - truth.kappas) / truth.kappas).tolist()
            payload["weight_errors"] = np.abs(fitted.weights - truth.weights).tolist()
        else:
            logger.warning("Truth has %d components, fit has %d; skipping comparison", truth.M, fitted.M)
    payload["mixture"] = fitted.to_dict()
    fit_path = write_json(out.file("fitted.json"), payload)
    trace_path = write_csv(out.file("loglik.csv"), ["iteration", "loglik"], enumerate(report.loglik_trace))
    print(fit_path)
    print(trace_path)


def _parse_start(args, data: Dataset) -> np.ndarray:
    if args.start_lonlat:
        lon, lat = (float(v) for v in args.start_lonlat.split(","))
        return lonlat_to_unit(lon, lat).coords
    if args.start:
        return np.array([float(v) for v in args.start.split(",")])
    return data.points[0]


def cmd_diagnose(args, config: RunConfig, out: OutputDir) -> None:
    data = ingest(args.input, args.format)
    model = _build_model(data, config)
    traj = dms.run(model, _parse_start(args, data), eps=config.eps, max_iter=config.max_iter)
    steps = np.concatenate([[np.nan], traj.step_norms])
    header = ["t"] + [f"x{j}" for j in range(model.dim)] + ["density", "step_norm"]
    rows = (
        [t] + list(map(float, x)) + [float(f), float(s)]
        for t, (x, f, s) in enumerate(zip(traj.points, traj.densities, steps))
    )
    traj_path = write_csv(out.file("trajectory.csv"), header, rows)

    payload = {"status": traj.status.value, "iterations": traj.iterations, "endpoint": traj.endpoint.tolist()}
    tangent, normal = diagnostics.gradient_split(model, traj.endpoint)
    payload["gradient_split"] = {"tangent": tangent, "normal": normal}
    if traj.converged and model.kernel.twice_differentiable:
        mode = diagnostics.polish_mode(model, traj.endpoint)
        payload["jacobian"] = diagnostics.jacobian_F(model, mode, config.eps).to_dict()
        payload["rate_bound"] = payload["jacobian"]["max_abs_eig"]
        payload["taylor_exponent"] = diagnostics.taylor_exponent(model, mode, seed=config.seed)
        try:
            payload["empirical_rates"] = diagnostics.empirical_rate(traj, mode, config.eps).tolist()
        except DirectionalStatsError as e:
            payload["empirical_rates"] = None
            logger.info("No empirical rate: %s", e)
    jac_path = write_json(out.file("jacobian.json"), payload)
    print(traj_path)
    print(jac_path)


def cmd_bandwidth(args, config: RunConfig, out: OutputDir) -> None:
    data = ingest(args.input, args.format)
    print(format(rule_of_thumb_bandwidth(data.points), ".17g"))


COMMANDS = {
    "simulate": cmd_simulate,
    "modes": cmd_modes,
    "basins": cmd_basins,
    "emfit": cmd_emfit,
    "diagnose": cmd_diagnose,
    "bandwidth": cmd_bandwidth,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run config (overrides the shipped defaults)")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--kernel", help="von_mises | truncated:p=<int>")
    common.add_argument("--bandwidth", help="positive number or 'rot'")
    common.add_argument("--eps", type=float, help="stopping displacement (default 1e-7)")
    common.add_argument("--max-iter", type=int)
    common.add_argument("--merge-tol", type=float, help="mode merge distance in radians")
    common.add_argument("--seed", type=int)
    common.add_argument("--joint-stop", action="store_true", default=None,
                        help="stop all trajectories together on the largest displacement")
    common.add_argument("-o", "--output-dir", default=".")

    data_args = argparse.ArgumentParser(add_help=False)
    data_args.add_argument("-i", "--input", required=True, help="dataset CSV")
    data_args.add_argument("--format", default="unit_csv", choices=["unit_csv", "lonlat_csv"])

    parser = argparse.ArgumentParser(prog="dirmeanshift", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="draw a dataset from a vMF mixture")
    p.add_argument("--mixture-spec", help="YAML/JSON file or inline JSON (default: three-component scenario)")
    p.add_argument("--n", type=int)

    sub.add_parser("modes", parents=[common, data_args], help="find KDE modes")

    p = sub.add_parser("basins", parents=[common, data_args], help="basins of attraction on a lon/lat grid")
    p.add_argument("--grid-deg", type=float)

    p = sub.add_parser("emfit", parents=[common, data_args], help="fit a vMF mixture by EM")
    p.add_argument("--components", type=int)
    p.add_argument("--refine-kappa", action="store_true", default=None)
    p.add_argument("--mixture-spec", help="true mixture to compare against")

    p = sub.add_parser("diagnose", parents=[common, data_args], help="trajectory and Jacobian diagnostics")
    p.add_argument("--start", help="comma-separated start vector (default: first data point)")
    p.add_argument("--start-lonlat", help="start as 'lon,lat' in degrees")

    sub.add_parser("bandwidth", parents=[common, data_args], help="rule-of-thumb bandwidth")
    return parser


def _config_from_args(args) -> RunConfig:
    return load_run_config(
        args.config,
        kernel=args.kernel,
        bandwidth=args.bandwidth,
        eps=args.eps,
        max_iter=args.max_iter,
        merge_tol=args.merge_tol,
        seed=args.seed,
        joint_stop=args.joint_stop,
        grid_deg=getattr(args, "grid_deg", None),
        components=getattr(args, "components", None),
        refine_kappa=getattr(args, "refine_kappa", None),
    )


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    out = OutputDir(args.output_dir)
    try:
        config = _config_from_args(args)
        COMMANDS[args.command](args, config, out)
    except (DirectionalStatsError, FileNotFoundError, ValueError, ArithmeticError, RuntimeError) as e:
        out.cleanup()
        error = {"error": type(e).__name__, "message": str(e), "command": args.command}
        if getattr(e, "line", None) is not None:
            error["line"] = e.line
        print(json.dumps(error), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
