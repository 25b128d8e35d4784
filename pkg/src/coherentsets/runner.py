"""Configuration-driven experiment pipelines behind the CLI subcommands.

Each run writes a versioned metadata JSON plus delimited grids, PGM
heatmaps and PNG figures into the output directory.  All randomness is
seeded through the config, so everything except the recorded timings is
reproducible file-for-file.
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .coherence import (
    SdeRun,
    coherence_ratio,
    kmeans_partition,
    line_search_threshold,
    sde_kappa,
    threshold_pair,
)
from .flows import (
    ConstantFlow,
    OctupleGyre,
    QuadrupleGyre,
    load_gridded_flow,
    save_gridded_flow,
)
from .fokker_planck import FpConfig
from .reporting import (
    save_enstrophy_png,
    save_heatmap_png,
    save_mask_png,
    save_sigma_png,
    write_csv_grid,
    write_field_pgms,
    write_pgm,
)
from .spectral import FourierGrid, RealField
from .transfer import (
    TransferMatrix,
    assemble_transfer,
    left_vector_field,
    save_transfer_matrix,
    singular_triples,
    stochasticity_defects,
    vector_to_field,
)
from .ulam import BoxPartition, save_transition_matrix, ulam_matrix, ulam_svd
from .vorticity import ns_evolve, random_ic, solver_grid, three_vortex_ic

METADATA_SCHEMA_VERSION = 1


def _metadata(kind: str, config: ExperimentConfig, results: dict, timings: dict,
              outputs: list) -> dict:
    return {
        "schema_version": METADATA_SCHEMA_VERSION,
        "kind": kind,
        "package_version": __version__,
        "config": config.raw,
        "results": results,
        "timings_s": {k: round(v, 4) for k, v in timings.items()},
        "outputs": sorted(Path(p).name for p in outputs),
    }


def _write_metadata(out_dir: Path, meta: dict) -> Path:
    path = out_dir / "metadata.json"
    path.write_text(json.dumps(meta, indent=1, sort_keys=True))
    return path


def build_flow(config: ExperimentConfig, out_dir: Path | None = None):
    """Instantiate the configured velocity field.

    Vorticity-generated flows run the solver here; the snapshots are also
    written to the output directory when one is given.  Returns
    (flow, extras dict).
    """
    fc = config.flow
    p = fc.params
    extras: dict = {}
    if fc.kind == "quadruple_gyre":
        flow = QuadrupleGyre(delta=p.get("delta", 0.25), omega=p.get("omega", 2 * np.pi))
    elif fc.kind == "octuple_gyre":
        flow = OctupleGyre(delta=p.get("delta", 0.25), omega=p.get("omega", 2 * np.pi))
    elif fc.kind == "constant":
        flow = ConstantFlow(tuple(p["velocity"]), tuple(p["lengths"]))
    elif fc.kind == "gridded":
        path = Path(p["path"])
        if not path.is_absolute():
            path = config.base_dir / path
        if not path.exists():
            raise ConfigError(f"flow file not found: {path}")
        flow = load_gridded_flow(path)
        if "time_interp" in p:
            flow.time_interp = p["time_interp"]
    elif fc.kind == "vorticity":
        flow, extras = _run_vorticity(config, out_dir)
    else:  # pragma: no cover - parse() already rejects this
        raise ConfigError(f"unknown flow kind {fc.kind}")
    return flow, extras


def _run_vorticity(config: ExperimentConfig, out_dir: Path | None):
    p = config.flow.params
    resolution = int(p.get("resolution", 64))
    grid = solver_grid(resolution, p.get("length", 2 * np.pi))
    ic = p["ic"]
    if ic["kind"] == "three_vortex":
        w0 = three_vortex_ic(grid)
    elif ic["kind"] == "zero":
        w0 = RealField(grid, np.zeros(grid.node_shape()))
    else:
        w0 = random_ic(grid, int(ic["seed"]))
    nu = float(p.get("nu", 1e-3))
    flow, ens = ns_evolve(
        w0,
        nu,
        float(p["t_start"]),
        float(p["t_end"]),
        int(p["steps"]),
        int(p.get("snapshot_every", 1)),
        record_enstrophy=True,
    )
    extras = {"enstrophy": ens, "nu": nu, "resolution": resolution}
    if out_dir is not None:
        extras["flow_file"] = save_gridded_flow(flow, out_dir / "flow.json")
    return flow, extras


def _grid_from_config(config: ExperimentConfig) -> FourierGrid:
    g = config.grid
    return FourierGrid(g.d, g.N, g.M, g.lengths)


def _fp_from_config(config: ExperimentConfig) -> FpConfig:
    f = config.fp
    return FpConfig(
        epsilon=f.epsilon,
        t0=f.t0,
        t1=f.t1,
        steps=f.steps,
        scheme=f.scheme,
        contour_points=f.contour_points,
        contour_radius=f.contour_radius,
        project_divergence=f.project_divergence,
    )


def assemble_from_config(config: ExperimentConfig, out_dir: Path | None = None,
                         threads: int = 1):
    config.require("grid", "fp")
    grid = _grid_from_config(config)
    flow, extras = build_flow(config, out_dir)
    tm = assemble_transfer(grid, flow, _fp_from_config(config), threads=threads)
    return tm, flow, extras


def run_fp(config: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    """Assemble the spectral transfer matrix, compute triples, write artifacts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: dict = {}
    t = time.perf_counter()
    tm, flow, extras = assemble_from_config(config, out_dir, threads)
    timings["assemble"] = time.perf_counter() - t

    t = time.perf_counter()
    n = min(config.num_singular, tm.grid.n_modes)
    triples = singular_triples(tm, n)
    timings["svd"] = time.perf_counter() - t

    outputs = [save_transfer_matrix(tm, out_dir / "transfer_matrix.json")]
    outputs.append(out_dir / "transfer_matrix.bin")
    plot_M = max(config.plot_resolution, tm.grid.N)
    for i in range(1, n):
        right = vector_to_field(tm, triples.right[:, i], plot_M)
        left = left_vector_field(tm, triples, i, plot_M)
        stem_r = out_dir / f"right_vector_{i + 1}"
        stem_l = out_dir / f"left_vector_{i + 1}"
        outputs.append(write_csv_grid(stem_r.with_suffix(".csv"), right.values,
                                      tm.grid.lengths, tm.grid.N))
        outputs.append(write_csv_grid(stem_l.with_suffix(".csv"), left.values,
                                      tm.grid.lengths, tm.grid.N))
        outputs.extend(write_field_pgms(stem_r, right.values))
        outputs.extend(write_field_pgms(stem_l, left.values))
        outputs.append(save_heatmap_png(stem_r.with_suffix(".png"), right.values,
                                        tm.grid.lengths, f"right vector {i + 1}"))
        outputs.append(save_heatmap_png(stem_l.with_suffix(".png"), left.values,
                                        tm.grid.lengths, f"left vector {i + 1}"))
    outputs.append(save_sigma_png(out_dir / "singular_values.png", triples.sigma))

    results = {
        "singular_values": [float(s) for s in triples.sigma],
        "stochasticity": stochasticity_defects(tm),
        "grid": {"d": tm.grid.d, "N": tm.grid.N, "M": tm.grid.M,
                 "lengths": list(tm.grid.lengths)},
        "flow": flow.describe(),
    }
    if "enstrophy" in extras:
        results["enstrophy_monotone"] = bool(np.all(np.diff(extras["enstrophy"]) <= 1e-8))
    meta = _metadata("fp", config, results, timings, outputs)
    _write_metadata(out_dir, meta)
    return meta


def run_ulam(config: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    """Box-transition baseline: integrate samples, SVD, write artifacts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config.require("ulam")
    u = config.ulam
    t0, t1 = config.time_window()
    flow, _ = build_flow(config, out_dir)
    part = BoxPartition(u.boxes_per_axis, flow.lengths)

    timings: dict = {}
    t = time.perf_counter()
    tmat = ulam_matrix(flow, part, u.samples_per_box, t0, t1,
                       traj_step=u.traj_step, seed=u.seed, sampling=u.sampling)
    timings["transition_matrix"] = time.perf_counter() - t
    t = time.perf_counter()
    n = min(config.num_singular, part.n_boxes)
    triples = ulam_svd(tmat, n)
    timings["svd"] = time.perf_counter() - t

    outputs = [save_transition_matrix(tmat, out_dir / "transition_matrix.txt")]
    for i in range(1, n):
        right = part.center_grid(triples.right[:, i])
        left = part.center_grid(triples.left[:, i])
        stem_r = out_dir / f"right_vector_{i + 1}"
        stem_l = out_dir / f"left_vector_{i + 1}"
        outputs.append(write_csv_grid(stem_r.with_suffix(".csv"), right, part.lengths))
        outputs.append(write_csv_grid(stem_l.with_suffix(".csv"), left, part.lengths))
        outputs.extend(write_field_pgms(stem_r, right))
        outputs.extend(write_field_pgms(stem_l, left))
        outputs.append(save_heatmap_png(stem_r.with_suffix(".png"), right,
                                        part.lengths, f"right vector {i + 1} (boxes)"))
        outputs.append(save_heatmap_png(stem_l.with_suffix(".png"), left,
                                        part.lengths, f"left vector {i + 1} (boxes)"))
    outputs.append(save_sigma_png(out_dir / "singular_values.png", triples.sigma,
                                  "singular values (box method)"))
    results = {
        "singular_values": [float(s) for s in triples.sigma],
        "column_sum_max_dev": float(np.abs(tmat.column_sums() - 1.0).max()),
        "boxes_per_axis": u.boxes_per_axis,
        "samples_per_box": u.samples_per_box,
        "flow": flow.describe(),
    }
    meta = _metadata("ulam", config, results, timings, outputs)
    _write_metadata(out_dir, meta)
    return meta


def run_ns(config: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    """Vorticity solve only; writes the snapshot flow file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if config.flow.kind != "vorticity":
        raise ConfigError("run-ns needs a flow of kind 'vorticity'")
    timings: dict = {}
    t = time.perf_counter()
    flow, extras = build_flow(config, out_dir)
    timings["solve"] = time.perf_counter() - t
    ens = extras["enstrophy"]
    outputs = [extras["flow_file"], Path(extras["flow_file"]).with_suffix(".bin")]
    outputs.append(save_enstrophy_png(out_dir / "enstrophy.png", flow.times, ens))
    results = {
        "flow_file": Path(extras["flow_file"]).name,
        "snapshots": len(flow.times),
        "t_range": [float(flow.times[0]), float(flow.times[-1])],
        "nu": extras["nu"],
        "resolution": extras["resolution"],
        "enstrophy_first": float(ens[0]),
        "enstrophy_last": float(ens[-1]),
        "enstrophy_monotone": bool(np.all(np.diff(ens) <= 1e-8 * ens[0])),
    }
    meta = _metadata("ns", config, results, timings, outputs)
    _write_metadata(out_dir, meta)
    return meta


def _extract_pair(config: ExperimentConfig, tm: TransferMatrix):
    """Threshold or line-search pair from the second singular triple."""
    ex = config.extraction
    triples = singular_triples(tm, max(2, min(config.num_singular, tm.grid.n_modes)))
    v2 = vector_to_field(tm, triples.right[:, 1], tm.grid.M)
    u2 = left_vector_field(tm, triples, 1)
    if ex.mode == "threshold":
        pair = threshold_pair(v2, u2, ex.theta)
        pair.rho = coherence_ratio(tm, pair)
    elif ex.mode == "line_search":
        pair = line_search_threshold(v2, u2, tm, n_quantiles=ex.n_quantiles)
    else:
        raise ConfigError("pair extraction needs mode threshold or line_search")
    return pair, triples


def run_extract(config: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    """Assemble, then extract a coherent pair (or a k-means partition)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config.require("extraction")
    ex = config.extraction
    timings: dict = {}
    t = time.perf_counter()
    tm, flow, _ = assemble_from_config(config, out_dir, threads)
    timings["assemble"] = time.perf_counter() - t

    outputs: list = []
    t = time.perf_counter()
    if ex.mode == "kmeans":
        n_vec = min(ex.n_vectors, tm.grid.n_modes - 1)
        triples = singular_triples(tm, n_vec + 1)
        plot_M = max(config.plot_resolution, tm.grid.N)
        fields = [vector_to_field(tm, triples.right[:, i + 1], plot_M)
                  for i in range(n_vec)]
        labels = kmeans_partition(fields, ex.k, ex.seed, ex.restarts)
        timings["extract"] = time.perf_counter() - t
        outputs.append(write_csv_grid(out_dir / "labels.csv", labels.astype(float),
                                      tm.grid.lengths, tm.grid.N))
        outputs.append(save_heatmap_png(out_dir / "labels.png",
                                        labels.astype(float), tm.grid.lengths,
                                        f"k-means labels (k={ex.k})"))
        results = {
            "mode": "kmeans",
            "k": ex.k,
            "cluster_sizes": np.bincount(labels.ravel(), minlength=ex.k).tolist(),
            "singular_values": [float(s) for s in triples.sigma],
        }
    else:
        pair, triples = _extract_pair(config, tm)
        timings["extract"] = time.perf_counter() - t
        for name, mask in (("a0", pair.a0_mask), ("a1", pair.a1_mask)):
            stem = out_dir / f"mask_{name}"
            if mask.ndim == 2:
                outputs.append(write_pgm(stem.with_suffix(".pgm"),
                                         mask.astype(float), symmetric=False))
            outputs.append(save_mask_png(stem.with_suffix(".png"), mask,
                                         tm.grid.lengths, name.upper()))
            outputs.append(write_csv_grid(stem.with_suffix(".csv"),
                                          mask.astype(float), tm.grid.lengths,
                                          tm.grid.N))
        results = {
            "mode": ex.mode,
            "theta": pair.theta,
            "rho": pair.rho,
            "sigma2": float(triples.sigma[1]),
            "relaxation_gap": float(triples.sigma[1] + 1.0 - pair.rho),
            "volume_a0": pair.volume_a0,
            "volume_a1": pair.volume_a1,
            "singular_values": [float(s) for s in triples.sigma],
        }
    meta = _metadata("extract", config, results, timings, outputs)
    _write_metadata(out_dir, meta)
    return meta


def run_validate_sde(config: ExperimentConfig, out_dir, threads: int = 1) -> dict:
    """Extract a pair, then score it with the Euler-Maruyama oracle."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    config.require("fp", "sde", "extraction")
    timings: dict = {}
    t = time.perf_counter()
    tm, flow, _ = assemble_from_config(config, out_dir, threads)
    pair, triples = _extract_pair(config, tm)
    timings["assemble_extract"] = time.perf_counter() - t

    s = config.sde
    run = SdeRun(particles=s.particles, dt=s.dt, seed=s.seed)
    t = time.perf_counter()
    est = sde_kappa(flow, config.fp.epsilon, pair, run, config.fp.t0, config.fp.t1)
    timings["monte_carlo"] = time.perf_counter() - t
    results = {
        "kappa": est.kappa,
        "kappa_stderr": est.stderr,
        "particles": est.particles,
        "rho": pair.rho,
        "sigma2": float(triples.sigma[1]),
        "theta": pair.theta,
        "volume_a0": pair.volume_a0,
        "volume_a1": pair.volume_a1,
    }
    meta = _metadata("validate-sde", config, results, timings, [])
    _write_metadata(out_dir, meta)
    return meta
