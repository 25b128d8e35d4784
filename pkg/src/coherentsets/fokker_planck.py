"""Evolve spectral densities under d/dt u = (eps^2/2) Lap u - div(u b).

The diffusion part is diagonal in coefficient space and integrated exactly;
the advection part is the skew form evaluated pseudo-spectrally.  Stepping
is classical RK4 on the full right-hand side or ETDRK4 with the stiff
diagonal handled through its exponential.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .flows import VelocityField
from .spectral import FourierGrid, SpectralField, advection_skew, laplacian_apply


class EvolutionBlowupError(RuntimeError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite values at step {step}")


@dataclass(frozen=True)
class FpConfig:
    """Parameters of one advection-diffusion evolution.

    epsilon is the noise amplitude of the underlying SDE (diffusion
    coefficient eps^2/2); the window [t0, t1] is split into `steps` equal
    steps.  `contour_points`/`contour_radius` control the quadrature used
    for the exponential-integrator coefficients.  `project_divergence`
    removes the spectral divergence of the sampled velocity before use
    (a no-op for band-limited divergence-free fields; for fields whose
    periodic extension is non-smooth it removes the sampling artifact
    that would otherwise break discrete mass conservation).
    """

    epsilon: float
    t0: float
    t1: float
    steps: int
    scheme: str = "etdrk4"
    contour_points: int = 32
    contour_radius: float = 1.0
    project_divergence: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.steps < 1:
            raise ValueError("need at least one time step")
        if not self.t1 > self.t0:
            raise ValueError("t1 must exceed t0")
        if self.scheme not in ("rk4", "etdrk4"):
            raise ValueError(f"unknown scheme '{self.scheme}'")
        if self.contour_points < 1 or self.contour_radius <= 0:
            raise ValueError("invalid contour quadrature parameters")

    @property
    def h(self) -> float:
        return (self.t1 - self.t0) / self.steps


@dataclass
class EtdCoefficients:
    """Diagonal ETDRK4 coefficient arrays for a fixed step size.

    E = exp(hL), E2 = exp(hL/2); Q is the half-step stage weight and
    f1, f2, f3 the quadrature weights of the final combination.
    """

    E: np.ndarray
    E2: np.ndarray
    Q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray


def etd_coefficients(
    L_diag: np.ndarray, h: float, contour_points: int = 32, contour_radius: float = 1.0
) -> EtdCoefficients:
    """ETDRK4 coefficients via trapezoidal contour averaging.

    The phi-function expressions suffer catastrophic cancellation for
    |hL| -> 0; averaging them over a circle of radius `contour_radius`
    around each hL entry evaluates the same analytic functions away from
    the cancellation region.  For real non-positive hL the average is
    real; the O(machine-eps) imaginary residue is checked and dropped.
    """
    if h <= 0:
        raise ValueError("step size must be positive")
    L_diag = np.asarray(L_diag, dtype=float)
    theta = 2.0 * np.pi * (np.arange(contour_points) + 0.5) / contour_points
    z = h * L_diag[..., None] + contour_radius * np.exp(1j * theta)
    ez = np.exp(z)
    z3 = z**3
    Q = h * np.mean((np.exp(0.5 * z) - 1.0) / z, axis=-1)
    f1 = h * np.mean((-4.0 - z + ez * (4.0 - 3.0 * z + z * z)) / z3, axis=-1)
    f2 = h * np.mean((2.0 + z + ez * (z - 2.0)) / z3, axis=-1)
    f3 = h * np.mean((-4.0 - 3.0 * z - z * z + ez * (4.0 - z)) / z3, axis=-1)
    worst = max(np.abs(c.imag).max() for c in (Q, f1, f2, f3)) / h
    if worst > 1e-12:
        raise ValueError(f"contour average left imaginary residue {worst:.2e}")
    return EtdCoefficients(
        E=np.exp(h * L_diag),
        E2=np.exp(0.5 * h * L_diag),
        Q=Q.real,
        f1=f1.real,
        f2=f2.real,
        f3=f3.real,
    )


class StageVelocities:
    """Velocity samples at the half-step times of a fixed stepping window.

    Index j corresponds to time t0 + j*h/2, so consecutive steps share
    their boundary sample.  Samples are computed on first use and cached;
    the cache may be shared read-only across concurrent evolutions of the
    same (flow, grid, window).
    """

    def __init__(self, flow: VelocityField, grid: FourierGrid, cfg: FpConfig):
        self.flow = flow
        self.grid = grid
        self.t0 = cfg.t0
        self.half_h = 0.5 * cfg.h
        self.project = cfg.project_divergence
        self._cache: dict[int, np.ndarray] = {}

    def __call__(self, j: int) -> np.ndarray:
        b = self._cache.get(j)
        if b is None:
            b = self.flow.velocity_on_grid(self.t0 + j * self.half_h, self.grid)
            if self.project:
                b = project_divergence_free(b, self.grid)
            b.setflags(write=False)
            self._cache[j] = b
        return b


def project_divergence_free(b_nodal: np.ndarray, grid: FourierGrid) -> np.ndarray:
    """Remove the potential (divergence-carrying) part of a sampled field.

    Helmholtz projection on the full collocation spectrum; exact no-op for
    fields whose samples are already spectrally divergence-free.
    """
    b_nodal = np.asarray(b_nodal, dtype=float)
    d, M = grid.d, grid.M
    axes_k = [2.0 * np.pi * np.fft.fftfreq(M, d=1.0 / M) / grid.lengths[a] for a in range(d)]
    mesh = np.meshgrid(*axes_k, indexing="ij")
    k2 = sum(m**2 for m in mesh)
    k2[(0,) * d] = 1.0  # constant mode carries no divergence
    b_hat = [np.fft.fftn(b_nodal[a]) for a in range(d)]
    div_hat = sum(1j * mesh[a] * b_hat[a] for a in range(d))
    pot_hat = div_hat / (-k2)
    pot_hat[(0,) * d] = 0.0
    return np.stack([np.fft.ifftn(b_hat[a] - 1j * mesh[a] * pot_hat).real for a in range(d)])


def fp_rhs(u: SpectralField, t: float, epsilon: float, flow: VelocityField) -> SpectralField:
    """Full right-hand side (eps^2/2)*Lap(u) - div_skew(b(t)*u)."""
    b = flow.velocity_on_grid(t, u.grid)
    adv = advection_skew(u, b)
    diff = laplacian_apply(u)
    return SpectralField(u.grid, 0.5 * epsilon**2 * diff.coeffs - adv.coeffs)


def _check_finite(coeffs: np.ndarray, step: int):
    if not np.all(np.isfinite(coeffs)):
        raise EvolutionBlowupError(step)


def evolve(u0: SpectralField, cfg: FpConfig, flow: VelocityField,
           stages: StageVelocities | None = None) -> SpectralField:
    """Advance a spectral density from t0 to t1.

    The velocity is sampled at the stage times t, t+h/2, t+h of each step.
    Pass a shared `StageVelocities` when running many evolutions over the
    same window (transfer-matrix assembly) to sample the flow only once.
    """
    grid = u0.grid
    if stages is None:
        stages = StageVelocities(flow, grid, cfg)
    L = -0.5 * cfg.epsilon**2 * grid.k_squared()
    h = cfg.h

    def nonlinear(coeffs: np.ndarray, j: int) -> np.ndarray:
        return -advection_skew(SpectralField(grid, coeffs), stages(j)).coeffs

    u = u0.coeffs.astype(complex).copy()
    if cfg.scheme == "etdrk4":
        co = etd_coefficients(L, h, cfg.contour_points, cfg.contour_radius)
        for n in range(cfg.steps):
            j = 2 * n
            N1 = nonlinear(u, j)
            a = co.E2 * u + co.Q * N1
            N2 = nonlinear(a, j + 1)
            b = co.E2 * u + co.Q * N2
            N3 = nonlinear(b, j + 1)
            c = co.E2 * a + co.Q * (2.0 * N3 - N1)
            N4 = nonlinear(c, j + 2)
            u = co.E * u + co.f1 * N1 + 2.0 * co.f2 * (N2 + N3) + co.f3 * N4
            _check_finite(u, n)
    else:
        for n in range(cfg.steps):
            j = 2 * n
            k1 = L * u + nonlinear(u, j)
            k2 = L * (u + 0.5 * h * k1) + nonlinear(u + 0.5 * h * k1, j + 1)
            k3 = L * (u + 0.5 * h * k2) + nonlinear(u + 0.5 * h * k2, j + 1)
            k4 = L * (u + h * k3) + nonlinear(u + h * k3, j + 2)
            u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            _check_finite(u, n)
    return SpectralField(grid, u)
