"""Bandit learners over linear softmax policies on candidate sets."""
import numpy as np

from .agents import (
    CandidateTable,
    ELLearner,
    Learner,
    LearnerConfig,
    LearnerKind,
    OracleLearner,
    StaticLearner,
    SZOLearner,
    UCB1EnsembleLearner,
    load_checkpoint,
    make_learner,
    restore_learner,
    save_checkpoint,
)
from .optim import (
    AnnealSchedule,
    OptimizerDiverged,
    OptimizerKind,
    OptimizerState,
    adadelta_step,
    adam_step,
    anneal_tick,
    optimizer_step,
    sgd_step,
)
from .policy import (
    ControlVariateState,
    PolicyDistribution,
    candidate_scores,
    cv_adjust,
    el_gradient,
    expected_el_gradient,
    expected_reward,
    softmax_with_temperature,
    szo_gradient,
    szo_propose,
    szo_step,
)
from .ucb import (
    RewardRegressor,
    UcbArmStats,
    UcbVariant,
    reward_regressor_score,
    reward_regressor_update,
    ucb1_indices,
    ucb1_select,
)


def static_policy(weights, features) -> int:
    """Argmax candidate under fixed seed weights (lowest index on ties)."""
    return int(np.argmax(candidate_scores(np.asarray(weights, dtype=float), features)))


def oracle_policy(instance) -> int:
    return instance.oracle_index
