"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the hot operations of the reconstruction loop (trilinear gather over
a full camera volume and the scatter backward pass) on both backends and
verifies they produce identical results.
"""

from __future__ import annotations

import time

import numpy as np

from . import _kernels_py
from .geometry import build_rig, default_rig, rig_sampling_grids
from .projector import backend_name
from .volume import synth_shape

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None


def _best_of(fn, repeats: int) -> float:
    fn()  # warmup
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run_benchmark(
    vol_dim: int = 32,
    image_size: int = 32,
    num_views: int = 24,
    repeats: int = 3,
    num_threads: int = 1,
) -> dict:
    """Time gather/scatter per view on each backend.

    Returns a dict with per-backend, per-op best seconds, the verified
    match between backends, and the workload description.
    """
    volume = synth_shape("sphere", vol_dim).data
    views = build_rig(default_rig(num_views), image_size, image_size)
    grid = rig_sampling_grids(views, volume.shape)[0]
    pts = grid.points.reshape(-1, 3)
    values = np.cos(np.arange(pts.shape[0]) * 0.01)  # deterministic payload

    backends: dict[str, object] = {"fallback": _kernels_py}
    if _compiled is not None:
        backends["compiled"] = _compiled

    results: dict[str, dict[str, float]] = {}
    outputs = {}
    for name, kernels in backends.items():
        gathered = None

        def gather():
            nonlocal gathered
            if name == "compiled":
                gathered = kernels.trilinear_gather(volume, pts, num_threads)
            else:
                gathered = kernels.trilinear_gather(volume, pts)

        def scatter():
            buf = np.zeros(volume.shape)
            kernels.trilinear_scatter_add(buf, pts, values)
            return buf

        results[name] = {
            "gather_s": _best_of(gather, repeats),
            "scatter_s": _best_of(scatter, repeats),
        }
        outputs[name] = (gathered, scatter())

    match = True
    if len(outputs) == 2:
        match = bool(
            (outputs["compiled"][0] == outputs["fallback"][0]).all()
            and (outputs["compiled"][1] == outputs["fallback"][1]).all()
        )

    return {
        "workload": {
            "vol_dim": vol_dim,
            "image_size": image_size,
            "num_views": num_views,
            "points_per_view": int(pts.shape[0]),
            "num_threads": num_threads,
        },
        "active_backend": backend_name(),
        "results": results,
        "backends_match": match,
    }


def format_report(report: dict) -> str:
    wl = report["workload"]
    lines = [
        f"workload: {wl['vol_dim']}^3 volume, {wl['points_per_view']} sample points "
        f"per view ({wl['image_size']}x{wl['image_size']} image), "
        f"{wl['num_threads']} thread(s)",
        f"active backend: {report['active_backend']}",
        f"{'backend':<10} {'gather ms':>12} {'scatter ms':>12}",
    ]
    for name, row in report["results"].items():
        lines.append(
            f"{name:<10} {1e3 * row['gather_s']:>12.3f} {1e3 * row['scatter_s']:>12.3f}"
        )
    if len(report["results"]) == 2:
        speedup = (
            report["results"]["fallback"]["gather_s"]
            / report["results"]["compiled"]["gather_s"]
        )
        lines.append(f"compiled gather speedup: {speedup:.1f}x")
        lines.append(f"backends match: {report['backends_match']}")
    else:
        lines.append("compiled backend unavailable; fallback only")
    return "\n".join(lines)
