"""Velocity fields b(t, x): analytic benchmark gyres and gridded snapshot data.

Every flow is periodic on its hyperrectangle and divergence-free; both are
required for the density evolution to stay doubly stochastic.  Flows are
immutable after construction and safe to evaluate concurrently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .spectral import FourierGrid, spectral_divergence_max


def wrap_points(points: np.ndarray, lengths) -> np.ndarray:
    """Map coordinates into the fundamental domain prod [0, L_i)."""
    pts = np.asarray(points, dtype=float)
    return np.mod(pts, np.asarray(lengths, dtype=float))


class VelocityField:
    """Interface shared by all flows.

    Subclasses provide `velocity_at(t, points)` for arbitrary (wrapped)
    points and may override `velocity_on_grid` when a faster grid path
    exists.
    """

    lengths: tuple[float, ...]

    @property
    def dim(self) -> int:
        return len(self.lengths)

    def velocity_at(self, t: float, points: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def velocity_on_grid(self, t: float, grid: FourierGrid) -> np.ndarray:
        """Velocity at all collocation nodes, shape (d,) + (M,)*d."""
        mesh = grid.node_mesh()
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        vals = self.velocity_at(t, pts)
        return vals.T.reshape((grid.d,) + grid.node_shape())

    def describe(self) -> dict:
        """JSON-friendly descriptor for run metadata."""
        return {"kind": type(self).__name__, "lengths": list(self.lengths)}


@dataclass(frozen=True)
class ConstantFlow(VelocityField):
    """Spatially and temporally constant velocity; b = 0 gives the identity flow."""

    velocity: tuple[float, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))
        if len(self.velocity) != len(self.lengths):
            raise ValueError("velocity and lengths dimensions differ")

    def velocity_at(self, t, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.broadcast_to(np.asarray(self.velocity), pts.shape).copy()

    def describe(self):
        return {"kind": "constant", "velocity": list(self.velocity), "lengths": list(self.lengths)}


def _gyre_profile(t: float, x: np.ndarray, delta: float, omega: float):
    """f(t,x) and its spatial derivative for the gyre family."""
    s = delta * np.sin(omega * t)
    f = s * x**2 + (1.0 - 2.0 * s) * x
    fx = 2.0 * s * x + (1.0 - 2.0 * s)
    return f, fx


def _gyre_g(t: float, a: np.ndarray, b: np.ndarray, delta: float, omega: float) -> np.ndarray:
    """delta*pi*sin(pi f(a))*cos(pi f(b))*f'(b), the gyre stream building block.

    delta multiplies the streamfunction, so it sets the velocity amplitude
    as well as the distortion strength of the profile f.
    """
    fa, _ = _gyre_profile(t, a, delta, omega)
    fb, fxb = _gyre_profile(t, b, delta, omega)
    return delta * np.pi * np.sin(np.pi * fa) * np.cos(np.pi * fb) * fxb


@dataclass(frozen=True)
class QuadrupleGyre(VelocityField):
    """Four time-dependent gyres on the 2-torus [0,2)^2.

    The streamfunction is delta*sin(pi f(t,x))*sin(pi f(t,y)); the
    oscillation moves the gyre separatrices' intersection along the
    diagonal.  delta sets the velocity amplitude, omega the frequency.
    """

    delta: float = 0.25
    omega: float = 2.0 * np.pi
    lengths: tuple[float, float] = (2.0, 2.0)

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))
        check = divergence_defect(self, t=0.0, resolution=16)
        if check > 1e-8:
            raise ValueError(f"flow is not divergence-free at t=0 (defect {check:.2e})")

    def velocity_at(self, t, points):
        pts = wrap_points(np.atleast_2d(points), self.lengths)
        x, y = pts[:, 0], pts[:, 1]
        out = np.empty_like(pts)
        out[:, 0] = -_gyre_g(t, x, y, self.delta, self.omega)
        out[:, 1] = _gyre_g(t, y, x, self.delta, self.omega)
        return out

    def describe(self):
        return {
            "kind": "quadruple_gyre",
            "delta": self.delta,
            "omega": self.omega,
            "lengths": list(self.lengths),
        }


@dataclass(frozen=True)
class OctupleGyre(VelocityField):
    """Eight gyres on the 3-torus [0,2)^3, one per octant.

    Built from the same profile as the quadruple gyre, combined cyclically
    across the three coordinate pairs so the field stays divergence-free;
    cross-sections at fixed first coordinate resemble the planar gyres.
    """

    delta: float = 0.25
    omega: float = 2.0 * np.pi
    lengths: tuple[float, float, float] = (2.0, 2.0, 2.0)

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))
        check = divergence_defect(self, t=0.0, resolution=8)
        if check > 1e-8:
            raise ValueError(f"flow is not divergence-free at t=0 (defect {check:.2e})")

    def velocity_at(self, t, points):
        pts = wrap_points(np.atleast_2d(points), self.lengths)
        x, y, z = pts[:, 0], pts[:, 1], pts[:, 2]
        d, w = self.delta, self.omega
        out = np.empty_like(pts)
        out[:, 0] = _gyre_g(t, x, y, d, w) - _gyre_g(t, x, z, d, w)
        out[:, 1] = _gyre_g(t, y, z, d, w) - _gyre_g(t, y, x, d, w)
        out[:, 2] = _gyre_g(t, z, x, d, w) - _gyre_g(t, z, y, d, w)
        return out

    def describe(self):
        return {
            "kind": "octuple_gyre",
            "delta": self.delta,
            "omega": self.omega,
            "lengths": list(self.lengths),
        }


class GriddedFlow(VelocityField):
    """Velocity snapshots on a fixed equispaced grid, interpolated in time.

    Spatial evaluation between nodes uses the trigonometric interpolant of
    the snapshot data (all source modes, Nyquist split for even grids);
    node subsets of the source grid are read off directly.

    Parameters
    ----------
    times : array of float, strictly increasing snapshot times.
    snapshots : array (n_times, d) + (M,)*d of nodal velocities.
    lengths : domain edge lengths.
    time_interp : 'linear' (default) or 'cubic' interpolation in time.
    """

    def __init__(self, times, snapshots, lengths, time_interp: str = "linear"):
        self.times = np.asarray(times, dtype=float)
        self.snapshots = np.asarray(snapshots, dtype=float)
        self.lengths = tuple(float(L) for L in lengths)
        d = len(self.lengths)
        if self.times.ndim != 1 or len(self.times) < 1:
            raise ValueError("need at least one snapshot time")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("snapshot times must be strictly increasing")
        if self.snapshots.shape[0] != len(self.times) or self.snapshots.shape[1] != d:
            raise ValueError(f"snapshot array shape {self.snapshots.shape} inconsistent")
        M = self.snapshots.shape[2]
        if self.snapshots.shape[2:] != (M,) * d:
            raise ValueError("snapshots must be cubic arrays, one axis per dimension")
        if time_interp not in ("linear", "cubic"):
            raise ValueError(f"unknown time interpolation '{time_interp}'")
        self.M_source = M
        self.time_interp = time_interp
        self._spectra: dict[int, np.ndarray] = {}

    # -- time interpolation ------------------------------------------------

    def _bracket(self, t: float):
        times = self.times
        if t < times[0] - 1e-12 or t > times[-1] + 1e-12:
            raise ValueError(f"time {t} outside snapshot range [{times[0]}, {times[-1]}]")
        t = min(max(t, times[0]), times[-1])
        j = int(np.searchsorted(times, t, side="right") - 1)
        j = min(max(j, 0), len(times) - 2) if len(times) > 1 else 0
        return j, t

    def snapshot_at(self, t: float) -> np.ndarray:
        """Time-interpolated nodal velocity on the source grid."""
        if len(self.times) == 1:
            return self.snapshots[0]
        j, t = self._bracket(t)
        t0, t1 = self.times[j], self.times[j + 1]
        w = (t - t0) / (t1 - t0)
        if self.time_interp == "linear" or len(self.times) < 4:
            return (1.0 - w) * self.snapshots[j] + w * self.snapshots[j + 1]
        # Catmull-Rom through the four surrounding snapshots
        jm = max(j - 1, 0)
        jp = min(j + 2, len(self.times) - 1)
        p0, p1, p2, p3 = (self.snapshots[i] for i in (jm, j, j + 1, jp))
        w2, w3 = w * w, w * w * w
        return 0.5 * (
            (2.0 * p1)
            + (-p0 + p2) * w
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * w2
            + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * w3
        )

    # -- spatial evaluation -------------------------------------------------

    def velocity_on_grid(self, t: float, grid: FourierGrid) -> np.ndarray:
        if tuple(grid.lengths) != self.lengths:
            raise ValueError(f"grid lengths {grid.lengths} differ from flow domain {self.lengths}")
        snap = self.snapshot_at(t)
        Ms, Mt = self.M_source, grid.M
        if Mt == Ms:
            return snap
        if Mt < Ms and Ms % Mt == 0:
            stride = Ms // Mt
            sl = (slice(None),) + (slice(None, None, stride),) * grid.d
            return snap[sl]
        return np.stack([_resample(snap[a], Mt) for a in range(grid.d)])

    def velocity_at(self, t, points):
        pts = wrap_points(np.atleast_2d(points), self.lengths)
        snap = self.snapshot_at(t)
        out = np.empty((pts.shape[0], self.dim))
        for a in range(self.dim):
            out[:, a] = _trig_eval(snap[a], pts, self.lengths)
        return out

    def describe(self):
        return {
            "kind": "gridded",
            "lengths": list(self.lengths),
            "M": self.M_source,
            "n_snapshots": len(self.times),
            "t_range": [float(self.times[0]), float(self.times[-1])],
            "time_interp": self.time_interp,
        }


def _pad_axis(arr: np.ndarray, axis: int, M_target: int) -> np.ndarray:
    """Zero-pad one FFT axis, splitting the Nyquist bin of even-sized axes."""
    M = arr.shape[axis]
    if M_target == M:
        return arr
    if M_target < M:
        raise ValueError("padding target smaller than source")
    shape = list(arr.shape)
    shape[axis] = M_target
    out = np.zeros(shape, dtype=complex)
    arr = np.moveaxis(arr, axis, 0)
    view = np.moveaxis(out, axis, 0)
    half = M // 2
    if M % 2 == 1:
        view[: half + 1] = arr[: half + 1]
        view[M_target - half :] = arr[half + 1 :]
    else:
        view[:half] = arr[:half]
        if half > 1:
            view[M_target - (half - 1) :] = arr[half + 1 :]
        view[half] = 0.5 * arr[half]
        view[M_target - half] += 0.5 * arr[half]
    return out


def _resample(values: np.ndarray, M_target: int) -> np.ndarray:
    """Trigonometric resampling of one real nodal component to a finer grid."""
    M = values.shape[0]
    spec = np.fft.fftn(values)
    for ax in range(values.ndim):
        spec = _pad_axis(spec, ax, M_target)
    return np.fft.ifftn(spec).real * (M_target / M) ** values.ndim


def _trig_eval(values: np.ndarray, pts: np.ndarray, lengths, chunk: int = 8192) -> np.ndarray:
    """Evaluate the trigonometric interpolant of nodal data at arbitrary points."""
    d = values.ndim
    M = values.shape[0]
    coeffs = np.fft.fftn(values) / M**d
    kappas = [2.0 * np.pi * np.fft.fftfreq(M, d=1.0 / M) / lengths[a] for a in range(d)]
    n = pts.shape[0]
    out = np.empty(n)
    for start in range(0, n, chunk):
        sl = slice(start, min(start + chunk, n))
        phases = [np.exp(1j * np.outer(pts[sl, a], kappas[a])) for a in range(d)]
        if d == 1:
            acc = phases[0] @ coeffs
        elif d == 2:
            acc = np.einsum("nk,kl,nl->n", phases[0], coeffs, phases[1], optimize=True)
        else:
            tmp = np.tensordot(phases[0], coeffs, axes=(1, 0))  # (n, M, M)
            tmp = np.einsum("nlm,nl->nm", tmp, phases[1])
            acc = np.einsum("nm,nm->n", tmp, phases[2])
        out[sl] = acc.real
    return out


def divergence_defect(flow: VelocityField, t: float, resolution: int = 16) -> float:
    """Spectral divergence magnitude of the sampled flow at one time."""
    d = flow.dim
    N = resolution - 1 if resolution % 2 == 0 else resolution
    grid = FourierGrid(d, N, resolution, flow.lengths)
    b = flow.velocity_on_grid(t, grid)
    return spectral_divergence_max(b, grid)


def fd_divergence(flow: VelocityField, t: float, points: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference divergence at arbitrary points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    div = np.zeros(pts.shape[0])
    for a in range(pts.shape[1]):
        shift = np.zeros(pts.shape[1])
        shift[a] = h
        vp = flow.velocity_at(t, pts + shift)[:, a]
        vm = flow.velocity_at(t, pts - shift)[:, a]
        div += (vp - vm) / (2.0 * h)
    return div


# -- gridded flow file format ---------------------------------------------
#
# <name>.json   header: {"format": "gridded-flow", "version": 1, "d", "M",
#               "lengths", "times", "data_file", "dtype": "float64",
#               "order": "x-fastest"}
# <name>.bin    raw float64: snapshots in time order, components in axis
#               order within each snapshot, each component flattened with
#               the x index varying fastest.

FLOW_FORMAT = "gridded-flow"
FLOW_FORMAT_VERSION = 1


def save_gridded_flow(flow: GriddedFlow, path) -> Path:
    """Write header JSON at `path` and raw data next to it; returns header path."""
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    data_path = path.with_suffix(".bin")
    d = flow.dim
    header = {
        "format": FLOW_FORMAT,
        "version": FLOW_FORMAT_VERSION,
        "d": d,
        "M": flow.M_source,
        "lengths": list(flow.lengths),
        "times": [float(t) for t in flow.times],
        "time_interp": flow.time_interp,
        "data_file": data_path.name,
        "dtype": "float64",
        "order": "x-fastest",
    }
    blocks = []
    for snap in flow.snapshots:
        for a in range(d):
            blocks.append(snap[a].ravel(order="F"))
    data_path.write_bytes(np.concatenate(blocks).astype(np.float64).tobytes())
    path.write_text(json.dumps(header, indent=1))
    return path


def load_gridded_flow(path) -> GriddedFlow:
    """Read a flow written by `save_gridded_flow` (bit-exact round trip)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"flow file not found: {path}")
    header = json.loads(path.read_text())
    if header.get("format") != FLOW_FORMAT:
        raise ValueError(f"{path} is not a gridded-flow header")
    d, M = int(header["d"]), int(header["M"])
    times = np.asarray(header["times"], dtype=float)
    data_path = path.parent / header["data_file"]
    if not data_path.exists():
        raise FileNotFoundError(f"flow data file not found: {data_path}")
    raw = np.frombuffer(data_path.read_bytes(), dtype=np.float64)
    per_comp = M**d
    expected = len(times) * d * per_comp
    if raw.size != expected:
        raise ValueError(f"flow data has {raw.size} values, expected {expected}")
    snaps = np.empty((len(times), d) + (M,) * d)
    pos = 0
    for it in range(len(times)):
        for a in range(d):
            snaps[it, a] = raw[pos : pos + per_comp].reshape((M,) * d, order="F")
            pos += per_comp
    return GriddedFlow(times, snaps, header["lengths"], header.get("time_interp", "linear"))
