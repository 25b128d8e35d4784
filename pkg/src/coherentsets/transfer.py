"""Collocation matrix of the density-evolution operator and its SVD.

Columns are the evolved real trigonometric basis functions evaluated on the
collocation nodes; rows carry the square-rooted quadrature weight.  With
M >= N the quadrature is exact on products of basis-resolved functions, so
the singular values of the rectangular matrix coincide with those of the
discrete evolution operator between L^2-orthonormal bases.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flows import VelocityField
from .fokker_planck import FpConfig, StageVelocities, evolve
from .spectral import FourierGrid, RealField, SpectralField, forward, inverse


@dataclass(frozen=True)
class RealBasis:
    """L^2-orthonormal real trigonometric basis on a grid.

    Ordering: the constant function first, then a (cos, sin) pair for each
    mode in the canonical half lattice (modes whose first nonzero index is
    positive), traversed in FFT raster order.  Total N^d functions.
    """

    grid: FourierGrid
    half_modes: tuple[tuple[int, ...], ...] = field(init=False)

    def __post_init__(self):
        kk = self.grid.mode_numbers()
        half = []
        for idx in np.ndindex(*self.grid.coeff_shape()):
            k = tuple(int(kk[i]) for i in idx)
            lead = next((c for c in k if c != 0), 0)
            if lead > 0:
                half.append(idx)
        object.__setattr__(self, "half_modes", tuple(half))
        assert 1 + 2 * len(half) == self.grid.n_modes

    @property
    def size(self) -> int:
        return self.grid.n_modes

    def _norms(self):
        vol = self.grid.volume
        return 1.0 / np.sqrt(vol), 1.0 / np.sqrt(2.0 * vol)

    def function_coeffs(self, j: int) -> np.ndarray:
        """Complex coefficients of real basis function j."""
        c0, cpair = self._norms()
        c = np.zeros(self.grid.coeff_shape(), dtype=complex)
        if j == 0:
            c[(0,) * self.grid.d] = c0
            return c
        idx = self.half_modes[(j - 1) // 2]
        conj_idx = tuple(-i % n for i, n in zip(idx, c.shape))
        if (j - 1) % 2 == 0:  # cosine
            c[idx] = cpair
            c[conj_idx] = cpair
        else:  # sine
            c[idx] = -1j * cpair
            c[conj_idx] = 1j * cpair
        return c

    def vector_to_coeffs(self, v: np.ndarray) -> np.ndarray:
        """Real-basis coordinate vector -> complex Fourier coefficients."""
        v = np.asarray(v, dtype=float)
        if v.shape != (self.size,):
            raise ValueError(f"expected vector of length {self.size}, got {v.shape}")
        c0, cpair = self._norms()
        c = np.zeros(self.grid.coeff_shape(), dtype=complex)
        c[(0,) * self.grid.d] = v[0] * c0
        for m, idx in enumerate(self.half_modes):
            conj_idx = tuple(-i % n for i, n in zip(idx, c.shape))
            cc, ss = v[1 + 2 * m], v[2 + 2 * m]
            c[idx] += (cc - 1j * ss) * cpair
            c[conj_idx] += (cc + 1j * ss) * cpair
        return c

    def coeffs_to_vector(self, coeffs: np.ndarray) -> np.ndarray:
        """Complex Fourier coefficients (conjugate-symmetric) -> real coordinates."""
        c0, cpair = self._norms()
        v = np.empty(self.size)
        v[0] = coeffs[(0,) * self.grid.d].real / c0
        for m, idx in enumerate(self.half_modes):
            v[1 + 2 * m] = coeffs[idx].real / cpair
            v[2 + 2 * m] = -coeffs[idx].imag / cpair
        return v


@dataclass
class TransferMatrix:
    """Weighted nodal-evaluation matrix of the evolved basis.

    entries[i, j] = sqrt(quad_weight) * (evolved basis_j)(x_i); singular
    values approximate those of the evolution operator on L^2.
    """

    grid: FourierGrid
    entries: np.ndarray
    config: FpConfig | None = None
    flow_info: dict | None = None

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        expected = (self.grid.n_nodes, self.grid.n_modes)
        if self.entries.shape != expected:
            raise ValueError(f"matrix shape {self.entries.shape}, expected {expected}")

    @property
    def basis(self) -> RealBasis:
        return RealBasis(self.grid)

    def apply_coeff_vector(self, v: np.ndarray) -> np.ndarray:
        """Evolved function's nodal values for a real-basis coordinate vector."""
        return (self.entries @ v) / np.sqrt(self.grid.quad_weight)

    def pair_overlap(self, mask0: np.ndarray, mask1: np.ndarray) -> float:
        """Quadrature value of <P 1_A0, 1_A1> with indicators on the node grid."""
        qw = self.grid.quad_weight
        coeff0 = np.sqrt(qw) * (basis_matrix(self.grid).T @ mask0.ravel().astype(float))
        evolved = self.entries @ coeff0
        return float(np.sqrt(qw) * (mask1.ravel().astype(float) @ evolved))

    def cell_volume(self) -> float:
        return self.grid.quad_weight

    def node_shape(self):
        return self.grid.node_shape()


_BASIS_CACHE: dict[tuple, np.ndarray] = {}


def basis_matrix(grid: FourierGrid) -> np.ndarray:
    """Weighted nodal evaluation of the unevolved basis (orthonormal columns)."""
    key = (grid.d, grid.N, grid.M, grid.lengths)
    B = _BASIS_CACHE.get(key)
    if B is None:
        basis = RealBasis(grid)
        root_w = np.sqrt(grid.quad_weight)
        cols = np.empty((grid.n_nodes, basis.size))
        for j in range(basis.size):
            f = inverse(SpectralField(grid, basis.function_coeffs(j)), grid.M)
            cols[:, j] = f.real.ravel() * root_w
        _BASIS_CACHE[key] = B = cols
    return B


def assemble_transfer(
    grid: FourierGrid,
    flow: VelocityField,
    cfg: FpConfig,
    threads: int = 1,
    validate: bool = True,
) -> TransferMatrix:
    """Evolve every real basis function and collect the weighted columns.

    The evolution is complex-linear and commutes with conjugation, so one
    complex-exponential evolution yields both the cosine column (real part)
    and the sine column (imaginary part) of its mode pair.  Velocity samples
    are shared across columns through a StageVelocities cache.
    """
    basis = RealBasis(grid)
    stages = StageVelocities(flow, grid, cfg)
    for j in range(2 * cfg.steps + 1):  # pre-populate so workers only read
        stages(j)
    root_w = np.sqrt(grid.quad_weight)
    c0 = 1.0 / np.sqrt(grid.volume)
    cpair = np.sqrt(2.0 / grid.volume)
    entries = np.empty((grid.n_nodes, basis.size))

    const = np.zeros(grid.coeff_shape(), dtype=complex)
    const[(0,) * grid.d] = c0

    def run(coeffs: np.ndarray) -> np.ndarray:
        out = evolve(SpectralField(grid, coeffs), cfg, flow, stages)
        return inverse(out, grid.M)

    entries[:, 0] = run(const).real.ravel() * root_w

    def column_pair(m: int):
        e = np.zeros(grid.coeff_shape(), dtype=complex)
        e[basis.half_modes[m]] = 1.0
        nod = run(e)
        return m, cpair * nod.real.ravel() * root_w, cpair * nod.imag.ravel() * root_w

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = pool.map(column_pair, range(len(basis.half_modes)))
    else:
        results = map(column_pair, range(len(basis.half_modes)))
    for m, cos_col, sin_col in results:
        entries[:, 1 + 2 * m] = cos_col
        entries[:, 2 + 2 * m] = sin_col

    tm = TransferMatrix(grid, entries, cfg, flow.describe())
    if validate:
        defects = stochasticity_defects(tm)
        if defects["constant_in"] > 1e-6 or defects["constant_out"] > 1e-4:
            raise ValueError(f"assembled matrix is not stochastic: {defects}")
    return tm


def stochasticity_defects(tm: TransferMatrix) -> dict:
    """Deviation from constant-in/constant-out and mass preservation.

    constant_in: evolved constant vs constant (nodal sup norm);
    constant_out: adjoint fixing of the all-ones functional, i.e. column
    masses vs the basis masses.
    """
    grid = tm.grid
    e0 = np.zeros(grid.n_modes)
    e0[0] = 1.0
    col = tm.apply_coeff_vector(e0)
    constant_in = float(np.abs(col - 1.0 / np.sqrt(grid.volume)).max() * np.sqrt(grid.volume))
    masses = grid.quad_weight * tm.entries.sum(axis=0) / np.sqrt(grid.quad_weight)
    target = np.zeros(grid.n_modes)
    target[0] = np.sqrt(grid.volume)
    constant_out = float(np.abs(masses - target).max())
    return {"constant_in": constant_in, "constant_out": constant_out}


@dataclass
class SingularTriples:
    """Leading singular triples, descending; vectors are matrix columns."""

    sigma: np.ndarray
    right: np.ndarray  # (n_modes or n_boxes, count) coordinate vectors
    left: np.ndarray  # (n_nodes or n_boxes, count) nodal values

    @property
    def count(self) -> int:
        return len(self.sigma)


def _fix_signs(sigma, right, left):
    for i in range(len(sigma)):
        j = int(np.argmax(np.abs(right[:, i])))
        if right[j, i] < 0:
            right[:, i] *= -1.0
            left[:, i] *= -1.0
    return sigma, right, left


def singular_triples(tm: TransferMatrix, n: int) -> SingularTriples:
    """Top n singular triples of the transfer matrix.

    Right vectors are coordinates in the real orthonormal basis; left
    vectors are nodal values normalized to unit quadrature L^2 norm.
    Each right vector's largest-magnitude entry is made positive.
    """
    rows, cols = tm.entries.shape
    if not 1 <= n <= min(rows, cols):
        raise ValueError(f"requested {n} triples from a {rows}x{cols} matrix")
    U, s, Vt = np.linalg.svd(tm.entries, full_matrices=False)
    left = U[:, :n] / np.sqrt(tm.grid.quad_weight)
    sigma, right, left = _fix_signs(s[:n].copy(), Vt[:n].T.copy(), left.copy())
    return SingularTriples(sigma, right, left)


def vector_to_field(tm_or_grid, v: np.ndarray, plot_M: int | None = None) -> RealField:
    """Render a right-vector coordinate vector on a plot grid.

    plot_M defaults to the grid's collocation count; any plot_M >= N gives
    the exact trigonometric evaluation of the same function.
    """
    grid = tm_or_grid.grid if isinstance(tm_or_grid, TransferMatrix) else tm_or_grid
    basis = RealBasis(grid)
    coeffs = basis.vector_to_coeffs(np.asarray(v, dtype=float))
    plot_M = grid.M if plot_M is None else int(plot_M)
    vals = inverse(SpectralField(grid, coeffs), plot_M)
    plot_grid = FourierGrid(grid.d, grid.N, plot_M, grid.lengths)
    return RealField(plot_grid, vals.real)


def left_vector_field(tm: TransferMatrix, triples: SingularTriples, i: int,
                      plot_M: int | None = None) -> RealField:
    """Left singular vector as a field, optionally upsampled through the basis."""
    grid = tm.grid
    vals = triples.left[:, i].reshape(grid.node_shape())
    if plot_M is None or plot_M == grid.M:
        return RealField(grid, vals)
    coeffs = forward(vals, grid)
    out = inverse(coeffs, plot_M)
    plot_grid = FourierGrid(grid.d, grid.N, plot_M, grid.lengths)
    return RealField(plot_grid, out.real)


# -- binary serialization ----------------------------------------------------
#
# <name>.json  header: grid geometry, evolution parameters, flow descriptor
# <name>.bin   row-major float64 entries

MATRIX_FORMAT = "transfer-matrix"
MATRIX_FORMAT_VERSION = 1


def save_transfer_matrix(tm: TransferMatrix, path) -> Path:
    path = Path(path)
    if path.suffix != ".json":
        path = path.with_suffix(".json")
    data_path = path.with_suffix(".bin")
    cfg = tm.config
    header = {
        "format": MATRIX_FORMAT,
        "version": MATRIX_FORMAT_VERSION,
        "d": tm.grid.d,
        "N": tm.grid.N,
        "M": tm.grid.M,
        "lengths": list(tm.grid.lengths),
        "rows": tm.entries.shape[0],
        "cols": tm.entries.shape[1],
        "order": "row-major",
        "dtype": "float64",
        "data_file": data_path.name,
        "evolution": None
        if cfg is None
        else {
            "epsilon": cfg.epsilon,
            "t0": cfg.t0,
            "t1": cfg.t1,
            "steps": cfg.steps,
            "scheme": cfg.scheme,
            "project_divergence": cfg.project_divergence,
        },
        "flow": tm.flow_info,
    }
    data_path.write_bytes(np.ascontiguousarray(tm.entries, dtype=np.float64).tobytes())
    path.write_text(json.dumps(header, indent=1))
    return path


def load_transfer_matrix(path) -> TransferMatrix:
    path = Path(path)
    header = json.loads(path.read_text())
    if header.get("format") != MATRIX_FORMAT:
        raise ValueError(f"{path} is not a transfer-matrix header")
    grid = FourierGrid(header["d"], header["N"], header["M"], tuple(header["lengths"]))
    raw = np.frombuffer((path.parent / header["data_file"]).read_bytes(), dtype=np.float64)
    entries = raw.reshape(header["rows"], header["cols"])
    ev = header.get("evolution")
    cfg = None
    if ev:
        cfg = FpConfig(
            epsilon=ev["epsilon"],
            t0=ev["t0"],
            t1=ev["t1"],
            steps=ev["steps"],
            scheme=ev["scheme"],
            project_divergence=ev.get("project_divergence", True),
        )
    return TransferMatrix(grid, entries.copy(), cfg, header.get("flow"))
