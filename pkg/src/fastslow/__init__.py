"""Fast-slow stochastic dynamics on compact matrix Lie groups and their averaged limits."""

__version__ = "0.1.0"

from .effective import EffectiveSDE, backward_check, build_effective, semigroup_mc, step_limit
from .ensemble import Ensemble
from .errors import (
    ConfigError,
    CutLocusError,
    DegenerateFitError,
    FastSlowError,
    NotCenteredError,
    NotPSDError,
    NotTorusError,
    RequiresDerivativesError,
    SizeMismatchError,
    StepTooLargeError,
)
from .fast import FastSpec, hormander_check, lln_error, simulate_fast, step_fast
from .lie import (
    SO,
    SU,
    AlgebraVector,
    GroupElement,
    GroupSpec,
    adjoint,
    bracket,
    distance,
    exp_map,
    haar_sample,
    log_map,
)
from .metrics import RateFit, rate_fit, wasserstein1, wasserstein_convergence, weak_error
from .multiscale import (
    MultiscaleSystem,
    PathSample,
    ito_reduction_check,
    simulate_pair,
    slow_marginal,
    uniform_moment_probe,
)
from .observables import Observable, constant, real_trace, trace_observable
from .poisson import (
    AveragedModel,
    PoissonSolution,
    adjoint_alpha,
    averaged_matrix,
    centering_check,
    solve_poisson_mc,
    solve_poisson_spectral,
)
from .presets import Preset, get_preset, preset_hopf, preset_so4_hypoelliptic, preset_so_n_interpolation
from .rng import RngStream
