"""FastMCP server exposing directional mean shift, vMF mixture fitting and bandwidth selection."""

import json
from typing import List, Optional

import numpy as np
from fastmcp import FastMCP

from algorithms.mean_shift.src import dms
from algorithms.mean_shift.src.diagnostics import rate_bound
from algorithms.vmf_mixture.src.vmf_mixture import em_fit, rule_of_thumb_bandwidth
from framework import __version__
from framework.core.kde import KdeModel
from framework.core.sphere_core import lonlat_array_to_unit, normalize_rows, unit_to_lonlat

server = FastMCP("directional-mean-shift")


def _points(points: List[List[float]], lonlat: bool) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2:
        raise ValueError("points must be a list of coordinate lists")
    return lonlat_array_to_unit(arr) if lonlat else normalize_rows(arr)


def _model(points, lonlat, bandwidth, kernel) -> KdeModel:
    data = _points(points, lonlat)
    h = rule_of_thumb_bandwidth(data) if bandwidth is None else bandwidth
    return KdeModel.build(data, h=h, kernel=kernel)


def find_modes_impl(
    points: List[List[float]],
    bandwidth: Optional[float] = None,
    kernel: str = "von_mises",
    lonlat: bool = False,
    eps: float = 1e-7,
    merge_tol: float = 0.05,
) -> str:
    """Find the local modes of the directional KDE of `points`.

    Points are unit vectors, or [lon, lat] degrees when lonlat is true. Omit the
    bandwidth to use the rule-of-thumb selector.
    """
    try:
        model = _model(points, lonlat, bandwidth, kernel)
        modes = dms.find_modes(model, eps=eps, merge_tol=merge_tol)
        result = []
        for k in range(len(modes)):
            entry = {
                "coords": modes.modes[k].tolist(),
                "density": float(modes.densities[k]),
                "count": int(modes.counts[k]),
            }
            if model.q == 2:
                entry["lonlat"] = list(unit_to_lonlat(modes.modes[k]))
            if model.kernel.twice_differentiable:
                entry["rate_bound"] = rate_bound(model, modes.modes[k], eps)
            result.append(entry)
        return json.dumps({"bandwidth": model.h, "kernel": model.kernel.spec, "modes": result}, indent=2)

    except Exception as e:
        return f"Error: {str(e)}"


def fit_vmf_mixture_impl(
    points: List[List[float]],
    components: int = 3,
    seed: int = 0,
    lonlat: bool = False,
    refine_kappa: bool = False,
) -> str:
    """Fit a mixture of von Mises-Fisher distributions by EM."""
    try:
        report = em_fit(_points(points, lonlat), components, seed, refine_kappa=refine_kappa)
        return json.dumps(
            {
                "mixture": report.fitted.to_dict(),
                "iterations": report.iterations,
                "converged": report.converged,
                "loglik": report.loglik_trace[-1],
                "kappa_capped": report.kappa_capped,
            },
            indent=2,
        )

    except Exception as e:
        return f"Error: {str(e)}"


def rule_of_thumb_bandwidth_impl(points: List[List[float]], lonlat: bool = False) -> str:
    """Rule-of-thumb KDE bandwidth from a single fitted vMF."""
    try:
        return json.dumps({"bandwidth": rule_of_thumb_bandwidth(_points(points, lonlat))})

    except Exception as e:
        return f"Error: {str(e)}"


def kde_density_impl(
    points: List[List[float]],
    query: List[List[float]],
    bandwidth: Optional[float] = None,
    kernel: str = "von_mises",
    lonlat: bool = False,
) -> str:
    """Evaluate the directional KDE (and its log) at query points."""
    try:
        model = _model(points, lonlat, bandwidth, kernel)
        where = _points(query, lonlat)
        return json.dumps(
            {
                "bandwidth": model.h,
                "density": model.densities(where).tolist(),
                "log_density": model.log_densities(where).tolist(),
            },
            indent=2,
        )

    except Exception as e:
        return f"Error: {str(e)}"


def get_server_info() -> str:
    """Get information about the directional-mean-shift MCP server."""
    info = {
        "server": "directional-mean-shift",
        "version": __version__,
        "description": "Directional KDE modes by mean shift, vMF mixture EM and bandwidth selection",
        "kernels": ["von_mises", "truncated:p=<int>"],
    }
    return json.dumps(info, indent=2)


for _tool in (find_modes_impl, fit_vmf_mixture_impl, rule_of_thumb_bandwidth_impl, kde_density_impl, get_server_info):
    server.tool()(_tool)


def main() -> None:
    server.run()


if __name__ == "__main__":
    main()
