"""Hierarchical federated smoothing ADMM (HFSAD) with a phase-retrieval benchmark."""

from ._accel import BACKEND
from .engine import ConsensusWeights, client_round, cluster_round, server_update
from .problems import GeneratorParams, generate_instance, relative_error, subgradient_baseline
from .prox_ops import BoxDomain, PenaltyKind, PenaltySpec
from .simulator import RunConfig, run
from .smoothing import ScheduleParams

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BoxDomain", "ConsensusWeights", "GeneratorParams", "PenaltyKind", "PenaltySpec",
    "RunConfig", "ScheduleParams", "client_round", "cluster_round", "generate_instance",
    "relative_error", "run", "server_update", "subgradient_baseline",
]
