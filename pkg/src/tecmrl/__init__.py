"""Offline Q-learning for heparin dosing with continuous SOFA rewards and TECM* assessment."""
from ._backend import BACKEND
from .actions import bin_action
from .assess import (
    AssessmentReport,
    Partition,
    SelectionConfig,
    Tecm,
    bias,
    classify_episodes,
    compare,
    confidence,
    select_checkpoint,
    similarity,
    tecm,
)
from .learners import Checkpoint, Hyper, policy_best, policy_worst, train_deep, train_ql
from .mdp import RewardSpec, build_transitions, encode_state, reward
from .outcomes import group_stats, match_followers, outcome_report
from .scoring import (
    ScoreConfig,
    VitalSigns,
    builtin_config,
    component_score,
    cxsofa,
    load_score_config,
    sofa_discrete,
)
from .stats import welch_t
from .trajectory import Cohort, Episode, SynthParams, synth_cohort

__version__ = "0.1.0"
