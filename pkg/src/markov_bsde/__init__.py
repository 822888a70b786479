"""BSDEs driven by finite-state continuous-time Markov chains."""
from .bsde import (
    Driver,
    DriverContext,
    ValueGrid,
    affine_driver,
    forward_residual,
    forward_sde,
    solve_hitting_time,
    solve_markovian,
    table_driver,
    z_at,
    zdrift_driver,
    zero_driver,
    znorm_driver,
)
from .chain import (
    ChainPath,
    RateModel,
    martingale_values,
    random_rate_model,
    reachable_states,
    simulate_path,
    simulate_paths,
    transition_matrix,
    validate_rate_model,
)
from .psi import (
    PsiMatrix,
    canonicalize_Z,
    epsilon_threshold,
    jump_drift_implication,
    projector,
    pseudoinverse,
    pseudoinverse_svd,
    psi_at,
    psi_from_rates,
    seminorm_sq,
)

__version__ = "0.1.0"
