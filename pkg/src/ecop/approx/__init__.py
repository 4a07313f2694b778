"""Parameterised policies, critics, advantage estimation and gradient tools."""

from .advantages import AdvantageEstimates, monte_carlo_advantages, returns_to_go
from .critics import CriticSet, MLPCritic, TabularCritic
from .gradcheck import finite_diff_gradient, probe_gradient, relative_error
from .params import Layout, ParamVector, load_checkpoint, save_checkpoint
from .policies import MLPPolicy, TabularSoftmaxPolicy, action_distribution, log_prob_gradient

__all__ = [
    "AdvantageEstimates", "monte_carlo_advantages", "returns_to_go",
    "CriticSet", "MLPCritic", "TabularCritic",
    "finite_diff_gradient", "probe_gradient", "relative_error",
    "Layout", "ParamVector", "load_checkpoint", "save_checkpoint",
    "MLPPolicy", "TabularSoftmaxPolicy", "action_distribution", "log_prob_gradient",
]
