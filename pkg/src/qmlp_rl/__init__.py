"""Quadratic-neuron actor networks for off-policy actor-critic training."""

from .algorithms import SACAgent, TD3Agent, TrainConfig, make_agent, train
from .envs import add_action_noise, add_observation_noise, make_env
from .evaluation import EvalRecord, LearningCurve, evaluate
from .harness import (ExperimentConfig, noise_sweep, run_experiment, sample_efficiency, smooth,
                      top_reward_improvement)
from .kernels import BACKEND as KERNEL_BACKEND
from .networks import Actor, ArchitectureConfig, Critic, build_actor, count_parameters
from .quadratic import (ExplicitQuadratic, FeatureSizeSpec, QuadraticNeuron, explicit_forward,
                        explicit_param_count, feature_count, quad_forward)

__version__ = "0.1.0"

__all__ = [
    "Actor", "ArchitectureConfig", "Critic", "EvalRecord", "ExperimentConfig", "ExplicitQuadratic",
    "FeatureSizeSpec", "KERNEL_BACKEND", "LearningCurve", "QuadraticNeuron", "SACAgent", "TD3Agent",
    "TrainConfig", "add_action_noise", "add_observation_noise", "build_actor", "count_parameters",
    "evaluate", "explicit_forward", "explicit_param_count", "feature_count", "make_agent", "make_env",
    "noise_sweep", "quad_forward", "run_experiment", "sample_efficiency", "smooth", "top_reward_improvement",
    "train",
]
