"""Experiment configuration: strict JSON parsing shared by all CLI commands.

Configs are versioned JSON documents; unknown keys anywhere in the document
are rejected so typos fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

CONFIG_VERSION = 1


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _require_keys(section: dict, allowed: set, required: set, where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


@dataclass(frozen=True)
class GridSection:
    d: int
    N: int
    M: int
    lengths: tuple[float, ...]

    @staticmethod
    def parse(raw: dict) -> "GridSection":
        _require_keys(raw, {"d", "N", "M", "lengths"}, {"d", "N", "M", "lengths"}, "grid")
        return GridSection(int(raw["d"]), int(raw["N"]), int(raw["M"]),
                           tuple(float(x) for x in raw["lengths"]))


@dataclass(frozen=True)
class FpSection:
    epsilon: float
    t0: float
    t1: float
    steps: int
    scheme: str = "etdrk4"
    contour_points: int = 32
    contour_radius: float = 1.0
    project_divergence: bool = True

    @staticmethod
    def parse(raw: dict) -> "FpSection":
        allowed = {"epsilon", "t0", "t1", "steps", "scheme", "contour_points",
                   "contour_radius", "project_divergence"}
        _require_keys(raw, allowed, {"epsilon", "t0", "t1", "steps"}, "fp")
        return FpSection(
            epsilon=float(raw["epsilon"]),
            t0=float(raw["t0"]),
            t1=float(raw["t1"]),
            steps=int(raw["steps"]),
            scheme=str(raw.get("scheme", "etdrk4")),
            contour_points=int(raw.get("contour_points", 32)),
            contour_radius=float(raw.get("contour_radius", 1.0)),
            project_divergence=bool(raw.get("project_divergence", True)),
        )


@dataclass(frozen=True)
class UlamSection:
    boxes_per_axis: int
    samples_per_box: int
    traj_step: float = 0.01
    seed: int = 0
    sampling: str = "random"
    t0: float | None = None
    t1: float | None = None

    @staticmethod
    def parse(raw: dict) -> "UlamSection":
        allowed = {"boxes_per_axis", "samples_per_box", "traj_step", "seed",
                   "sampling", "t0", "t1"}
        _require_keys(raw, allowed, {"boxes_per_axis", "samples_per_box"}, "ulam")
        return UlamSection(
            boxes_per_axis=int(raw["boxes_per_axis"]),
            samples_per_box=int(raw["samples_per_box"]),
            traj_step=float(raw.get("traj_step", 0.01)),
            seed=int(raw.get("seed", 0)),
            sampling=str(raw.get("sampling", "random")),
            t0=None if "t0" not in raw else float(raw["t0"]),
            t1=None if "t1" not in raw else float(raw["t1"]),
        )


@dataclass(frozen=True)
class ExtractionSection:
    mode: str = "threshold"
    theta: float = 0.0
    n_quantiles: int = 64
    k: int = 4
    n_vectors: int = 4
    seed: int = 0
    restarts: int = 8

    @staticmethod
    def parse(raw: dict) -> "ExtractionSection":
        allowed = {"mode", "theta", "n_quantiles", "k", "n_vectors", "seed", "restarts"}
        _require_keys(raw, allowed, {"mode"}, "extraction")
        mode = str(raw["mode"])
        if mode not in ("threshold", "line_search", "kmeans"):
            raise ConfigError(f"unknown extraction mode '{mode}'")
        return ExtractionSection(
            mode=mode,
            theta=float(raw.get("theta", 0.0)),
            n_quantiles=int(raw.get("n_quantiles", 64)),
            k=int(raw.get("k", 4)),
            n_vectors=int(raw.get("n_vectors", 4)),
            seed=int(raw.get("seed", 0)),
            restarts=int(raw.get("restarts", 8)),
        )


@dataclass(frozen=True)
class SdeSection:
    particles: int = 100_000
    dt: float = 0.05
    seed: int = 0

    @staticmethod
    def parse(raw: dict) -> "SdeSection":
        _require_keys(raw, {"particles", "dt", "seed"}, set(), "sde")
        return SdeSection(
            particles=int(raw.get("particles", 100_000)),
            dt=float(raw.get("dt", 0.05)),
            seed=int(raw.get("seed", 0)),
        )


_FLOW_KEYS = {
    "quadruple_gyre": ({"kind", "delta", "omega"}, set()),
    "octuple_gyre": ({"kind", "delta", "omega"}, set()),
    "constant": ({"kind", "velocity", "lengths"}, {"velocity", "lengths"}),
    "gridded": ({"kind", "path", "time_interp"}, {"path"}),
    "vorticity": (
        {"kind", "ic", "nu", "resolution", "t_start", "t_end", "steps",
         "snapshot_every", "length"},
        {"ic", "t_start", "t_end", "steps"},
    ),
}


@dataclass(frozen=True)
class FlowSection:
    kind: str
    params: dict

    @staticmethod
    def parse(raw: dict) -> "FlowSection":
        if "kind" not in raw:
            raise ConfigError("flow section needs a 'kind'")
        kind = str(raw["kind"])
        if kind not in _FLOW_KEYS:
            raise ConfigError(f"unknown flow kind '{kind}'")
        allowed, required = _FLOW_KEYS[kind]
        _require_keys(raw, allowed, required | {"kind"}, f"flow[{kind}]")
        params = {k: v for k, v in raw.items() if k != "kind"}
        if kind == "vorticity":
            ic = params["ic"]
            if not isinstance(ic, dict) or ic.get("kind") not in ("three_vortex", "random", "zero"):
                raise ConfigError("vorticity ic must be three_vortex, random or zero")
            if ic["kind"] == "random":
                _require_keys(ic, {"kind", "seed"}, {"kind", "seed"}, "flow.ic")
            else:
                _require_keys(ic, {"kind"}, {"kind"}, "flow.ic")
        return FlowSection(kind, params)


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed, validated experiment description.

    `base_dir` anchors relative file references (gridded-flow paths).
    """

    flow: FlowSection
    grid: GridSection | None
    fp: FpSection | None
    ulam: UlamSection | None
    extraction: ExtractionSection | None
    sde: SdeSection | None
    num_singular: int
    plot_resolution: int
    base_dir: Path
    raw: dict = field(repr=False, default_factory=dict)

    @staticmethod
    def parse(raw: dict, base_dir: Path | str = ".") -> "ExperimentConfig":
        allowed = {"version", "flow", "grid", "fp", "ulam", "extraction", "sde",
                   "num_singular", "plot_resolution"}
        _require_keys(raw, allowed, {"version", "flow"}, "config")
        if int(raw["version"]) != CONFIG_VERSION:
            raise ConfigError(f"unsupported config version {raw['version']}")
        return ExperimentConfig(
            flow=FlowSection.parse(raw["flow"]),
            grid=GridSection.parse(raw["grid"]) if "grid" in raw else None,
            fp=FpSection.parse(raw["fp"]) if "fp" in raw else None,
            ulam=UlamSection.parse(raw["ulam"]) if "ulam" in raw else None,
            extraction=ExtractionSection.parse(raw["extraction"]) if "extraction" in raw else None,
            sde=SdeSection.parse(raw["sde"]) if "sde" in raw else None,
            num_singular=int(raw.get("num_singular", 6)),
            plot_resolution=int(raw.get("plot_resolution", 64)),
            base_dir=Path(base_dir),
            raw=raw,
        )

    @staticmethod
    def load(path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return ExperimentConfig.parse(raw, path.parent)

    def require(self, *sections: str) -> None:
        for name in sections:
            if getattr(self, name) is None:
                raise ConfigError(f"this command needs a '{name}' section in the config")

    def time_window(self) -> tuple[float, float]:
        """Evolution window: fp section if present, else the ulam override."""
        if self.fp is not None:
            return self.fp.t0, self.fp.t1
        if self.ulam is not None and self.ulam.t0 is not None and self.ulam.t1 is not None:
            return self.ulam.t0, self.ulam.t1
        raise ConfigError("no time window: provide an fp section or ulam t0/t1")
