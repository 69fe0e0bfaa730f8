"""Switching diffusions with killing on [0, 1]."""

from .models import (
    DiffusionLabel,
    SwitchingDiffusionModel,
    build_model,
    eigenvalue,
    invariant_psi,
    model_block,
    model_weight,
    phase_jump_probs,
    spherical_blocks,
)
from .spectral import (
    SpectralSeries,
    TruncationError,
    density,
    eigenfunction_Q1,
    eigenfunction_q2,
    mass,
    model_eigenfunction_derivatives,
    model_eigenfunctions,
    norm2q,
    norms_inv_switch2,
    spectral_series,
    survival,
)
from .simulate import DiffusionPath, EnsembleResult, em_ensemble, em_simulate
from .boundary import (
    BoundaryClass,
    FellerReport,
    Undecided,
    boundary_classify,
    classify_model_boundary,
    feller_report,
    model_boundary_report,
)
