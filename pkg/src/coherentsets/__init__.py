"""Coherent-set detection in time-dependent periodic flows.

Evolves a truncated Fourier basis through the advection-diffusion equation
of a stochastically perturbed flow, assembles the resulting transfer matrix,
and reads coherent set pairs off its leading singular vectors.  Includes a
box-and-trajectory baseline (Ulam's method), a 2D vorticity-equation solver
for generating turbulent benchmark flows, and a Monte-Carlo validator.
"""

__version__ = "0.1.0"

from .spectral import (
    FourierGrid,
    RealField,
    SpectralField,
    advection_skew,
    divergence_apply,
    forward,
    gradient_apply,
    inverse,
    inverse_real,
    laplacian_apply,
    make_grid,
)
from .flows import (
    ConstantFlow,
    GriddedFlow,
    OctupleGyre,
    QuadrupleGyre,
    VelocityField,
    load_gridded_flow,
    save_gridded_flow,
)
from .fokker_planck import (
    EtdCoefficients,
    EvolutionBlowupError,
    FpConfig,
    StageVelocities,
    etd_coefficients,
    evolve,
    fp_rhs,
    project_divergence_free,
)
from .transfer import (
    RealBasis,
    SingularTriples,
    TransferMatrix,
    assemble_transfer,
    basis_matrix,
    left_vector_field,
    load_transfer_matrix,
    save_transfer_matrix,
    singular_triples,
    stochasticity_defects,
    vector_to_field,
)
from .ulam import (
    BoxPartition,
    TransitionMatrix,
    load_transition_matrix,
    save_transition_matrix,
    ulam_matrix,
    ulam_svd,
)
from .vorticity import (
    ns_evolve,
    random_ic,
    solver_grid,
    three_vortex_ic,
    velocity_from_vorticity,
)
from .coherence import (
    CoherentPair,
    DegenerateMaskError,
    KappaEstimate,
    SdeRun,
    coherence_ratio,
    kmeans_partition,
    line_search_threshold,
    sde_kappa,
    threshold_pair,
)
from .config import ConfigError, ExperimentConfig

__all__ = [name for name in dir() if not name.startswith("_")]
