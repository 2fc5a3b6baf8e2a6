"""Natural-type-selection adaptation of a random-code input distribution to a
drifting discrete memoryless channel, with the exponent computations needed to
verify its convergence behaviour."""

from .prob import (
    Alphabet,
    Distribution,
    EmpiricalType,
    JointDistribution,
    StochasticMatrix,
    compose,
    conditional_x_given_y,
    joint_type,
    kl_divergence,
    marginals,
    mutual_information,
    rng_stream,
    sample_iid,
)
from .exponents import (
    ErrorExponentResult,
    ExponentSolution,
    brute_force_update_exponent,
    e0_hat,
    error_exponent,
    gallager_e0,
    threshold_t0,
    u_rho,
    update_exponent,
)
from .engine import (
    IterationRecord,
    RunOutcome,
    RunStatus,
    SystemState,
    check_arimoto_fixed_point,
    check_theorem1_conditions,
    init_phi_from_channel,
    nts_run,
    nts_step,
    stall_level_identity,
)
from .channels import (
    CapacityResult,
    bec,
    binary_entropy,
    blahut_arimoto_capacity,
    bsc,
    identity_channel,
    z_channel,
)
from .sim import (
    BlockResult,
    DriftSchedule,
    SessionTrace,
    SimConfig,
    feedback_bit,
    generate_codebook,
    ml_decode,
    run_session,
    simulate_block,
    transmit,
    tune_threshold,
    type_statistic,
    verify_type_concentration,
)

__all__ = [name for name in dir() if not name.startswith("_")]
