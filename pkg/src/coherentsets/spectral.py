"""Fourier collocation machinery on periodic hyperrectangles.

Fields live in two representations: nodal values on an equispaced M^d
collocation grid and complex coefficients of the N^d lowest Fourier modes
(N odd, M >= N).  All differential operators are diagonal in coefficient
space; products are formed nodally and truncated back, with the advection
term symmetrized so that its matrix representation is skew-adjoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FourierGrid:
    """Equispaced periodic grid with an odd Fourier basis truncation.

    Parameters
    ----------
    d : int
        Spatial dimension, 1 to 3.
    N : int
        Modes per axis (odd); the basis holds wavenumber indices
        k in [-(N-1)/2, (N-1)/2] per axis.
    M : int
        Collocation points per axis, M >= N.  Nodes are x_j = j*L/M,
        left-closed (node at 0, none at L).
    lengths : tuple of float
        Domain edge lengths; the domain is the torus prod [0, L_i).
    """

    d: int
    N: int
    M: int
    lengths: tuple[float, ...]

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise ValueError(f"dimension must be 1, 2 or 3, got {self.d}")
        if self.N % 2 == 0 or self.N < 1:
            raise ValueError(f"modes per axis must be odd and positive, got N={self.N}")
        if self.M < self.N:
            raise ValueError(f"collocation count M={self.M} undersamples basis N={self.N}")
        if len(self.lengths) != self.d:
            raise ValueError("lengths must have one entry per axis")
        if any(L <= 0 for L in self.lengths):
            raise ValueError("domain lengths must be strictly positive")
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))

    @property
    def volume(self) -> float:
        """Lebesgue measure of the domain."""
        return float(np.prod(self.lengths))

    @property
    def quad_weight(self) -> float:
        """Quadrature weight volume/M^d of one collocation cell."""
        return self.volume / self.M**self.d

    @property
    def n_nodes(self) -> int:
        return self.M**self.d

    @property
    def n_modes(self) -> int:
        return self.N**self.d

    def axis_nodes(self, axis: int) -> np.ndarray:
        """Collocation coordinates along one axis."""
        L = self.lengths[axis]
        return np.arange(self.M) * (L / self.M)

    def node_mesh(self) -> list[np.ndarray]:
        """Coordinate meshes of shape (M,)*d, 'ij' indexing (axis 0 is x)."""
        return list(np.meshgrid(*(self.axis_nodes(a) for a in range(self.d)), indexing="ij"))

    def mode_numbers(self) -> np.ndarray:
        """Integer mode indices per axis in FFT order: 0..(N-1)/2, -(N-1)/2..-1."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N).astype(int)

    def axis_wavenumbers(self, axis: int) -> np.ndarray:
        """Physical wavenumbers 2*pi*k/L_axis in FFT order."""
        return 2.0 * np.pi * self.mode_numbers() / self.lengths[axis]

    def wavenumber_mesh(self) -> list[np.ndarray]:
        """Per-axis wavenumber meshes of shape (N,)*d."""
        return list(
            np.meshgrid(*(self.axis_wavenumbers(a) for a in range(self.d)), indexing="ij")
        )

    def k_squared(self) -> np.ndarray:
        """|kappa|^2 mesh of shape (N,)*d."""
        mesh = self.wavenumber_mesh()
        return sum(km**2 for km in mesh)

    def coeff_shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    def node_shape(self) -> tuple[int, ...]:
        return (self.M,) * self.d

    def with_modes(self, N: int) -> "FourierGrid":
        """Same nodes and domain, different basis truncation."""
        return FourierGrid(self.d, N, self.M, self.lengths)


def make_grid(d: int, N: int, M: int, lengths) -> FourierGrid:
    """Construct a FourierGrid, validating N odd, M >= N, lengths > 0."""
    return FourierGrid(d, N, M, tuple(lengths))


@dataclass
class SpectralField:
    """Coefficients of a function in the grid's truncated Fourier basis.

    coeffs has shape (N,)*d, complex, FFT mode order per axis.  The basis
    functions are the unit-amplitude exponentials exp(i<kappa, x>).
    """

    grid: FourierGrid
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=complex)
        if self.coeffs.shape != self.grid.coeff_shape():
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} does not match grid "
                f"{self.grid.coeff_shape()}"
            )

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())


@dataclass
class RealField:
    """Real nodal values on the collocation grid, shape (M,)*d."""

    grid: FourierGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.node_shape():
            raise ValueError(
                f"nodal shape {self.values.shape} does not match grid "
                f"{self.grid.node_shape()}"
            )

    def integral(self) -> float:
        """Quadrature approximation of the integral over the domain."""
        return float(self.grid.quad_weight * self.values.sum())


def _low_mode_indices(N: int, M: int) -> np.ndarray:
    # positions of the N lowest modes inside a length-M FFT axis
    half = (N - 1) // 2
    return np.concatenate([np.arange(half + 1), np.arange(M - half, M)]) if half else np.arange(1)


def _truncate(full: np.ndarray, N: int) -> np.ndarray:
    M = full.shape[0]
    if M == N:
        return full
    idx = _low_mode_indices(N, M)
    return full[np.ix_(*([idx] * full.ndim))]


def _pad(coeffs: np.ndarray, target_M: int) -> np.ndarray:
    N = coeffs.shape[0]
    if target_M == N:
        return coeffs
    out = np.zeros((target_M,) * coeffs.ndim, dtype=complex)
    idx = _low_mode_indices(N, target_M)
    out[np.ix_(*([idx] * coeffs.ndim))] = coeffs
    return out


def forward(f: RealField | np.ndarray, grid: FourierGrid | None = None) -> SpectralField:
    """Nodal values -> coefficients of the N^d lowest modes.

    Exact (inverse of `inverse`) whenever the sampled function lies in the
    truncated basis; otherwise aliased modes fold onto the retained ones.
    """
    if isinstance(f, RealField):
        grid, values = f.grid, f.values
    else:
        if grid is None:
            raise TypeError("grid required when passing a bare array")
        values = np.asarray(f)
        if values.shape != grid.node_shape():
            raise ValueError(f"nodal shape {values.shape} does not match grid {grid.node_shape()}")
    full = np.fft.fftn(values) / grid.M**grid.d
    return SpectralField(grid, _truncate(full, grid.N))


def inverse(u: SpectralField, target_M: int | None = None) -> np.ndarray:
    """Evaluate the trigonometric polynomial on an equispaced target grid.

    Zero-padded inverse FFT; complex output (real up to roundoff when the
    coefficients are conjugate-symmetric).
    """
    target_M = u.grid.M if target_M is None else int(target_M)
    if target_M < u.grid.N:
        raise ValueError(f"target grid {target_M} undersamples basis N={u.grid.N}")
    padded = _pad(u.coeffs, target_M)
    return np.fft.ifftn(padded) * target_M**u.grid.d


def inverse_real(u: SpectralField, target_M: int | None = None, tol: float = 1e-9) -> RealField:
    """`inverse` for conjugate-symmetric coefficients, returned as a RealField."""
    vals = inverse(u, target_M)
    imag = np.abs(vals.imag).max()
    scale = max(np.abs(vals.real).max(), 1.0)
    if imag > tol * scale:
        raise ValueError(f"field is not real: max imaginary part {imag:.3e}")
    target_M = u.grid.M if target_M is None else int(target_M)
    grid = FourierGrid(u.grid.d, u.grid.N, target_M, u.grid.lengths)
    return RealField(grid, vals.real)


def conjugate_symmetry_defect(u: SpectralField) -> float:
    """Relative deviation from coeffs(-k) == conj(coeffs(k))."""
    flipped = u.coeffs.copy()
    for ax in range(u.grid.d):
        flipped = np.roll(np.flip(flipped, axis=ax), 1, axis=ax)
    norm = np.abs(u.coeffs).max()
    if norm == 0.0:
        return 0.0
    return float(np.abs(np.conj(flipped) - u.coeffs).max() / norm)


def laplacian_apply(u: SpectralField) -> SpectralField:
    """Multiply coefficients by -|kappa|^2."""
    return SpectralField(u.grid, -u.grid.k_squared() * u.coeffs)


def gradient_apply(u: SpectralField) -> list[SpectralField]:
    """Per-axis spectral derivative i*kappa_a * u."""
    mesh = u.grid.wavenumber_mesh()
    return [SpectralField(u.grid, 1j * mesh[a] * u.coeffs) for a in range(u.grid.d)]


def divergence_apply(components: list[SpectralField]) -> SpectralField:
    """Spectral divergence of a vector of fields on a common grid."""
    grid = components[0].grid
    if len(components) != grid.d:
        raise ValueError(f"expected {grid.d} components, got {len(components)}")
    mesh = grid.wavenumber_mesh()
    out = np.zeros(grid.coeff_shape(), dtype=complex)
    for a, comp in enumerate(components):
        if comp.grid is not grid and comp.grid != grid:
            raise ValueError("components live on different grids")
        out += 1j * mesh[a] * comp.coeffs
    return SpectralField(grid, out)


def advection_skew(u: SpectralField, b_nodal: np.ndarray) -> SpectralField:
    """Skew-symmetric discretization of div(b*u).

    Averages the divergence form and the advective form,
    0.5*div(b*u) + 0.5*b.grad(u), each formed as a nodal product on the
    M^d grid and truncated back to N^d modes.  The induced operator on
    coefficient space is exactly skew-adjoint for any real b, which keeps
    the spectrum purely imaginary and the advected mass constant.
    """
    grid = u.grid
    b_nodal = np.asarray(b_nodal, dtype=float)
    expected = (grid.d,) + grid.node_shape()
    if b_nodal.shape != expected:
        raise ValueError(f"velocity shape {b_nodal.shape} does not match {expected}")

    u_nodal = inverse(u, grid.M)
    mesh = grid.wavenumber_mesh()
    scale = 1.0 / grid.M**grid.d

    out = np.zeros(grid.coeff_shape(), dtype=complex)
    for a in range(grid.d):
        # 0.5 * i kappa_a * F(b_a * u)
        flux_hat = _truncate(np.fft.fftn(b_nodal[a] * u_nodal) * scale, grid.N)
        out += 0.5j * mesh[a] * flux_hat
        # 0.5 * F(b_a * d_a u)
        du_nodal = inverse(SpectralField(grid, 1j * mesh[a] * u.coeffs), grid.M)
        out += 0.5 * _truncate(np.fft.fftn(b_nodal[a] * du_nodal) * scale, grid.N)
    return SpectralField(grid, out)


def spectral_divergence_max(b_nodal: np.ndarray, grid: FourierGrid) -> float:
    """Max nodal magnitude of the spectral divergence of a sampled vector field."""
    comps = [forward(np.asarray(b_nodal)[a], grid) for a in range(grid.d)]
    div = divergence_apply(comps)
    return float(np.abs(inverse(div, grid.M)).max())


def parseval_mismatch(f: RealField) -> float:
    """Relative gap between nodal and coefficient energy (0 for fields in V_N)."""
    u = forward(f)
    nodal = f.grid.quad_weight * float(np.sum(f.values**2))
    spectral = f.grid.volume * float(np.sum(np.abs(u.coeffs) ** 2))
    return abs(nodal - spectral) / max(nodal, 1e-300)
