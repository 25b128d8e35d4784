"""Box-discretized transfer operator estimated from integrated test points.

Each box seeds K sample points which are advected with fixed-step RK4;
transition counts normalized per source box give a column-stochastic sparse
matrix whose leading singular triples play the same role as the spectral
ones.  No explicit diffusion is added; the box discretization itself
supplies numerical diffusion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .flows import VelocityField, wrap_points
from .transfer import SingularTriples, _fix_signs


class TrajectoryError(RuntimeError):
    """A sample trajectory produced non-finite coordinates."""


@dataclass(frozen=True)
class BoxPartition:
    """Uniform box grid over the periodic domain, n_boxes_per_axis^d cells.

    Boxes are indexed in raster order with the first axis fastest, matching
    the x-fastest layout used elsewhere.
    """

    n_boxes_per_axis: int
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.n_boxes_per_axis < 1:
            raise ValueError("need at least one box per axis")
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))

    @property
    def d(self) -> int:
        return len(self.lengths)

    @property
    def n_boxes(self) -> int:
        return self.n_boxes_per_axis**self.d

    @property
    def widths(self) -> np.ndarray:
        return np.asarray(self.lengths) / self.n_boxes_per_axis

    def box_volume(self) -> float:
        return float(np.prod(self.widths))

    def multi_index(self, flat: np.ndarray) -> np.ndarray:
        """Flat box index -> per-axis indices (first axis fastest)."""
        flat = np.asarray(flat)
        out = np.empty(flat.shape + (self.d,), dtype=int)
        rest = flat
        for a in range(self.d):
            out[..., a] = rest % self.n_boxes_per_axis
            rest = rest // self.n_boxes_per_axis
        return out

    def flat_index(self, multi: np.ndarray) -> np.ndarray:
        multi = np.asarray(multi)
        flat = np.zeros(multi.shape[:-1], dtype=int)
        stride = 1
        for a in range(self.d):
            flat = flat + multi[..., a] * stride
            stride *= self.n_boxes_per_axis
        return flat

    def locate(self, points: np.ndarray) -> np.ndarray:
        """Flat box index containing each (wrapped) point."""
        pts = wrap_points(points, self.lengths)
        multi = np.minimum(
            (pts / self.widths).astype(int), self.n_boxes_per_axis - 1
        )
        return self.flat_index(multi)

    def corners(self) -> np.ndarray:
        """Lower-left corner of every box, shape (n_boxes, d)."""
        idx = self.multi_index(np.arange(self.n_boxes))
        return idx * self.widths

    def centers(self) -> np.ndarray:
        return self.corners() + 0.5 * self.widths

    def center_grid(self, values: np.ndarray) -> np.ndarray:
        """Reshape per-box values to an (n,)*d array indexed by axis."""
        return values.reshape((self.n_boxes_per_axis,) * self.d, order="F")


@dataclass
class TransitionMatrix:
    """Column-stochastic transition estimate P[j, i] = #(Phi(x) in box_j)/K."""

    partition: BoxPartition
    matrix: sp.csc_matrix
    samples_per_box: int
    seed: int | None
    traj_step: float

    def __post_init__(self):
        if self.matrix.shape != (self.partition.n_boxes, self.partition.n_boxes):
            raise ValueError("matrix shape does not match partition")

    def column_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=0)).ravel()

    def pair_overlap(self, mask0: np.ndarray, mask1: np.ndarray) -> float:
        """<P 1_A0, 1_A1> with indicators as box-index masks."""
        m0 = mask0.ravel(order="F").astype(float)
        m1 = mask1.ravel(order="F").astype(float)
        return float(self.partition.box_volume() * (m1 @ (self.matrix @ m0)))

    def cell_volume(self) -> float:
        return self.partition.box_volume()

    def node_shape(self):
        return (self.partition.n_boxes_per_axis,) * self.partition.d


def rk4_trajectories(
    flow: VelocityField, points: np.ndarray, t0: float, t1: float, step: float
) -> np.ndarray:
    """Advance points with classical fixed-step RK4; final positions unwrapped."""
    n_steps = max(1, int(np.ceil((t1 - t0) / step - 1e-12)))
    h = (t1 - t0) / n_steps
    x = np.asarray(points, dtype=float).copy()
    t = t0
    for i in range(n_steps):
        k1 = flow.velocity_at(t, x)
        k2 = flow.velocity_at(t + 0.5 * h, x + 0.5 * h * k1)
        k3 = flow.velocity_at(t + 0.5 * h, x + 0.5 * h * k2)
        k4 = flow.velocity_at(t + h, x + h * k3)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + (i + 1) * h
    return x


def sample_points(
    partition: BoxPartition, K: int, seed: int | None, sampling: str = "random"
) -> np.ndarray:
    """K test points per box, grouped by box: shape (n_boxes, K, d).

    'random' draws uniform offsets from one seeded generator in box order;
    'subgrid' places a regular q^d lattice (K = q^d required) with interior
    half-cell offsets, useful as a deterministic oracle.
    """
    corners = partition.corners()
    w = partition.widths
    if sampling == "random":
        rng = np.random.default_rng(seed)
        offsets = rng.uniform(0.0, 1.0, size=(partition.n_boxes, K, partition.d)) * w
    elif sampling == "subgrid":
        q = round(K ** (1.0 / partition.d))
        if q**partition.d != K:
            raise ValueError(f"subgrid sampling needs K = q^{partition.d}, got {K}")
        axes = [(np.arange(q) + 0.5) / q * w[a] for a in range(partition.d)]
        mesh = np.meshgrid(*axes, indexing="ij")
        lattice = np.stack([m.ravel() for m in mesh], axis=1)
        offsets = np.broadcast_to(lattice, (partition.n_boxes, K, partition.d)).copy()
    else:
        raise ValueError(f"unknown sampling mode '{sampling}'")
    return corners[:, None, :] + offsets


def ulam_matrix(
    flow: VelocityField,
    partition: BoxPartition,
    K: int,
    t0: float,
    t1: float,
    traj_step: float = 0.01,
    seed: int | None = 0,
    sampling: str = "random",
) -> TransitionMatrix:
    """Estimate the box-to-box transition matrix over [t0, t1]."""
    if K < 1:
        raise ValueError("need at least one sample point per box")
    pts = sample_points(partition, K, seed, sampling).reshape(-1, partition.d)
    finals = rk4_trajectories(flow, pts, t0, t1, traj_step)
    if not np.all(np.isfinite(finals)):
        bad = np.nonzero(~np.isfinite(finals).all(axis=1))[0][0]
        raise TrajectoryError(f"non-finite trajectory from box {bad // K}")
    targets = partition.locate(finals)
    sources = np.repeat(np.arange(partition.n_boxes), K)
    counts = sp.csc_matrix(
        (np.ones(len(sources)), (targets, sources)),
        shape=(partition.n_boxes, partition.n_boxes),
    )
    counts.sum_duplicates()
    counts.data /= K  # integer count over K: entries in [0,1] exactly
    return TransitionMatrix(partition, counts, K, seed, traj_step)


def ulam_svd(tm: TransitionMatrix, n: int) -> SingularTriples:
    """Top n singular triples; vectors are per-box values (columns)."""
    n_boxes = tm.partition.n_boxes
    if not 1 <= n <= n_boxes:
        raise ValueError(f"requested {n} triples from a {n_boxes}-box matrix")
    U, s, Vt = np.linalg.svd(tm.matrix.toarray(), full_matrices=False)
    sigma, right, left = _fix_signs(s[:n].copy(), Vt[:n].T.copy(), U[:, :n].copy())
    return SingularTriples(sigma, right, left)


# -- text export -------------------------------------------------------------


def save_transition_matrix(tm: TransitionMatrix, path):
    """Coordinate-format text export with a JSON header line."""
    import json
    from pathlib import Path

    path = Path(path)
    header = {
        "format": "transition-matrix",
        "version": 1,
        "d": tm.partition.d,
        "boxes_per_axis": tm.partition.n_boxes_per_axis,
        "lengths": list(tm.partition.lengths),
        "samples_per_box": tm.samples_per_box,
        "seed": tm.seed,
        "traj_step": tm.traj_step,
        "entries": int(tm.matrix.nnz),
    }
    coo = tm.matrix.tocoo()
    lines = [f"# {json.dumps(header)}"]
    order = np.lexsort((coo.row, coo.col))
    for i in order:
        lines.append(f"{coo.col[i]},{coo.row[i]},{float(coo.data[i])!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


def load_transition_matrix(path) -> TransitionMatrix:
    import json
    from pathlib import Path

    text = Path(path).read_text().strip().splitlines()
    header = json.loads(text[0].lstrip("# "))
    if header.get("format") != "transition-matrix":
        raise ValueError(f"{path} is not a transition-matrix export")
    part = BoxPartition(header["boxes_per_axis"], tuple(header["lengths"]))
    cols, rows, vals = [], [], []
    for line in text[1:]:
        c, r, v = line.split(",")
        cols.append(int(c))
        rows.append(int(r))
        vals.append(float(v))
    mat = sp.csc_matrix((vals, (rows, cols)), shape=(part.n_boxes, part.n_boxes))
    return TransitionMatrix(
        part, mat, header["samples_per_box"], header["seed"], header["traj_step"]
    )
