"""Entropic log-determinant estimation for large sparse SPD matrices."""

from .errors import (
    ConstraintDomainError,
    ContractError,
    ConvergenceError,
    MatrixMarketError,
    NotPositiveDefiniteError,
    NumericalFailure,
    SymmetryError,
    UnsupportedFormatError,
)
from .gmrf import (
    LatticeSpec,
    build_precision,
    log_likelihood,
    log_likelihood_nugget,
    nugget_logdet,
    sample_gmrf,
)
from .logdet import LogDetResult, logdet_chebyshev, logdet_maxent, logdet_taylor, relative_error
from .maxent import MaxEntDensity, fit_maxent, log_geometric_mean
from .probe import MomentEstimate, ProbeKind, estimate_power_traces, single_shot_variance
from .sparse import (
    SparseSymMatrix,
    exact_logdet,
    gershgorin_upper,
    load_matrix_market,
    matvec,
    spectral_norm_estimate,
    synth_wishart_identity,
    write_matrix_market,
)

__version__ = "0.1.0"
