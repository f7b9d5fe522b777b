"""Decentralized federated learning with verifiable contribution accounting."""

__version__ = "0.1.0"

from .adversary import AdversaryProfile, falsify_pretrain, falsify_report, select_dishonest
from .coordinator import (
    OutlierProblem,
    OutlierResult,
    consistency_threshold,
    correct_lcvs,
    detect_outliers,
    propagate,
    refit_consensus,
    soft_threshold,
    stack_round,
)
from .engine import (
    ClientState,
    ExchangePacket,
    NumericError,
    RoundLog,
    SimConfig,
    SimResult,
    run_round,
    run_simulation,
)
from .learner import (
    Dataset,
    DistributionSpec,
    ModelParams,
    evaluate,
    generate_partitions,
    init_params,
    load_csv,
    make_blobs,
    save_csv,
    train,
)
from .lcv import (
    Lcv,
    aggregate,
    compute_lcv,
    filter_pretrain_models,
    lcv_from_table,
    partial_model,
    subset_utilities,
)
from .oracle import (
    OracleResult,
    cosine_distance,
    exact_shapley,
    pearson,
    rerun_with_subset,
)
from .baselines import CflResult, mr_contributions, or_contributions, run_cfl
from .shapley import monte_carlo_shapley, permutation_shapley, shapley_from_table
from .topology import (
    RoundSchedule,
    TopologySpec,
    build_schedule,
    line_schedule,
    load_schedule_file,
    regular_schedule,
    star_schedule,
    watts_strogatz_schedule,
)

__all__ = [name for name in dir() if not name.startswith("_")]
