"""Phase-randomised homodyne tomography of photon-number-conditioned states.

Simulates dual-homodyne records of a tapped squeezed-vacuum source and
reconstructs n-photon-subtracted states from them, using either
number-operator conditioning polynomials or Fock-basis pattern functions,
validated against an exact truncated-Fock-space oracle.

Quadrature convention used throughout: X^phi = a e^{-i phi} + a^dag e^{i phi},
[X, P] = 2i, so vacuum has quadrature variance 1 and position density
exp(-x^2/2)/sqrt(2 pi).  Wigner outputs are rescaled so the vacuum has
variance 1/4 on both axes.
"""

from .errors import (
    ConfigError,
    InsufficientStatisticsError,
    NumericalInvariantError,
)
from .fock import (
    DensityMatrix,
    FockVector,
    TwoModeMixture,
    TwoModeState,
    beamsplitter,
    condition_oracle,
    loss_channel,
    quadrature_pdf,
    rotate_state,
    squeezed_vacuum,
)
from .polynomials import (
    MomentPolynomial,
    NumberPolynomial,
    fock_weights,
    moment_oracle,
    moment_to_number,
    number_to_moment,
    shot_weight,
    subtraction_polynomial,
)
from .patterns import (
    ConditionSpec,
    PatternTable,
    WavefunctionTable,
    build_wavefunctions,
    weight_function,
)
from .sampler import (
    AngleSchedule,
    GaussianModel,
    RecordBatch,
    covariance,
    sample_angle,
    sample_records,
    validate_phase_uniformity,
)
from .estimator import (
    WeightedHistogram,
    accumulate,
    bootstrap_errors,
    conditioned_pdf,
    density_from_quadratures,
    project_to_physical,
)
from .analysis import (
    StateMetrics,
    WignerGrid,
    fidelity,
    negativity_at_origin,
    photon_populations,
    wigner_from_density,
)
from .config import RunConfig

__version__ = "0.1.0"

__all__ = [
    "AngleSchedule",
    "ConditionSpec",
    "ConfigError",
    "DensityMatrix",
    "FockVector",
    "GaussianModel",
    "InsufficientStatisticsError",
    "MomentPolynomial",
    "NumberPolynomial",
    "NumericalInvariantError",
    "PatternTable",
    "RecordBatch",
    "RunConfig",
    "StateMetrics",
    "TwoModeMixture",
    "TwoModeState",
    "WavefunctionTable",
    "WeightedHistogram",
    "WignerGrid",
    "accumulate",
    "beamsplitter",
    "bootstrap_errors",
    "build_wavefunctions",
    "condition_oracle",
    "conditioned_pdf",
    "covariance",
    "density_from_quadratures",
    "fidelity",
    "fock_weights",
    "loss_channel",
    "moment_oracle",
    "moment_to_number",
    "negativity_at_origin",
    "number_to_moment",
    "photon_populations",
    "project_to_physical",
    "quadrature_pdf",
    "rotate_state",
    "sample_angle",
    "sample_records",
    "shot_weight",
    "squeezed_vacuum",
    "subtraction_polynomial",
    "validate_phase_uniformity",
    "weight_function",
    "wigner_from_density",
]
