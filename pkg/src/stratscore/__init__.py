"""Linear equilibria of multidimensional strategic scoring.

Three regimes are covered: signaling (the receiver regresses on raw
features), optimal scoring (an intermediary commits to an obeyed score) and
screening (the receiver commits to a decision rule).
"""

from .commitment import (
    CommitmentReport,
    SimpleSetting,
    build_simple_setting,
    commitment_report,
    norm4gamma,
    solve_screening,
    solve_simple_setting,
    sweep_feature_weights,
)
from .covmodel import (
    AssumptionReport,
    CovarianceModel,
    beta,
    independent_model,
    load_model,
    normalize_productive,
    pinv,
    reg_theta_given_features,
    validate,
)
from .dynamics import DynamicsTrace, integrate_br_dynamics, zero_sum_potential
from .montecarlo import SampleBatch, check_lce, empirical_loss, sample
from .scoring import (
    ScoringSolution,
    asymmetry_test,
    ex_post_best_response,
    noise_cutoff,
    obedience_residual,
    solve_efficient_scoring,
    solve_partial_disclosure,
    solve_scoring,
    solve_scoring_noisy,
)
from .signaling import (
    Coefficients,
    EquilibriumSet,
    homogeneous_intrinsic_equilibria,
    info_loss_sweep,
    potential_value_and_gradient,
    receiver_loss,
    signaling_residual,
    solve_signaling,
    solve_signaling_cubic_1d,
    solve_signaling_general,
)
from .tables import SweepTable

__version__ = "0.1.0"
