"""Training procedures and inference agents."""

from __future__ import annotations

from unplugged.agents.actor_critic import ActorCriticLearner, EmphaticLearner, train_eoac, train_oac
from unplugged.agents.bc import (BCLearner, BCValueLearner, FineTuneLearner, finetune_bc, train_bc,
                                 train_bc_value, value_sign_accuracy)
from unplugged.agents.emphatic import EmphaticState, LaneDiscontinuity, emphatic_traces
from unplugged.agents.mcts import MCTSConfig, mcts_act, search
from unplugged.agents.muzero import MuZeroSupervisedLearner, train_mzs
from unplugged.agents.players import MCTSAgent, PolicyAgent, ScriptedBot, agent_from_checkpoint
from unplugged.agents.training import (KINDS, PREREQUISITE, Checkpoint, DependencyError, Learner,
                                       TrainConfig, default_config, read_checkpoint)
from unplugged.agents.vtrace import BehaviorMismatch, VTraceOutputs, draw_horizons, vtrace_targets
from unplugged.network import NetworkParams

LEARNERS = {
    "bc": BCLearner,
    "ft-bc": FineTuneLearner,
    "bc-value": BCValueLearner,
    "oac": ActorCriticLearner,
    "e-oac": EmphaticLearner,
    "mzs": MuZeroSupervisedLearner,
}


def make_learner(dataset, config: TrainConfig, init: Checkpoint | None = None) -> Learner:
    """Fresh learner of ``config.kind``; ``init`` is the prerequisite checkpoint, if any."""
    need = PREREQUISITE.get(config.kind)
    if need is not None:
        if init is None:
            raise DependencyError(f"train {config.kind} requires a {need} checkpoint (--init-from)")
        if init.kind != need:
            raise DependencyError(f"train {config.kind} requires a {need} checkpoint, got {init.kind}")
    params = init.params if init is not None else None
    return LEARNERS[config.kind](dataset, config, init=params)


def resume_learner(dataset, checkpoint) -> Learner:
    """Rebuild a learner from its own checkpoint so training continues bit-exactly."""
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else read_checkpoint(checkpoint)
    if ckpt.meta["dataset_digest"] != dataset.digest():
        raise ValueError("checkpoint was trained on a different dataset")
    init = ckpt.behavior or ckpt.params
    learner = LEARNERS[ckpt.kind](dataset, ckpt.config, init=init)
    learner._restore(ckpt.meta, ckpt.arrays)
    return learner


__all__ = [
    "ActorCriticLearner", "BCLearner", "BCValueLearner", "BehaviorMismatch", "Checkpoint",
    "DependencyError", "EmphaticLearner", "EmphaticState", "FineTuneLearner", "KINDS", "LEARNERS",
    "LaneDiscontinuity", "Learner", "MCTSAgent", "MCTSConfig", "MuZeroSupervisedLearner",
    "NetworkParams", "PolicyAgent", "ScriptedBot", "TrainConfig", "VTraceOutputs",
    "agent_from_checkpoint", "default_config", "draw_horizons", "emphatic_traces",
    "finetune_bc", "make_learner", "mcts_act", "read_checkpoint", "resume_learner", "search",
    "train_bc", "train_bc_value", "train_eoac", "train_mzs", "train_oac", "value_sign_accuracy",
    "vtrace_targets",
]
