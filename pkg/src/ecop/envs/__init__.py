"""Environment registry."""

from __future__ import annotations

from .base import Env, EnvSpec
from .circle import PointCircle
from .gridworld import GridWorld, hazard_gridworld, navigation_gridworld
from .tiny import TwoStateHazard

_FACTORIES = {
    "hazard_gridworld": hazard_gridworld,
    "navigation_gridworld": navigation_gridworld,
    "point_circle": PointCircle,
    "two_state_hazard": TwoStateHazard,
}

ENV_NAMES = tuple(_FACTORIES)


def make_env(name: str, **overrides) -> Env:
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown environment {name!r}; choose from {', '.join(ENV_NAMES)}") from None
    if "thresholds" in overrides and factory is not navigation_gridworld:
        (overrides["threshold"],) = overrides.pop("thresholds")
    return factory(**overrides)


__all__ = ["Env", "EnvSpec", "GridWorld", "PointCircle", "TwoStateHazard", "ENV_NAMES",
           "make_env", "hazard_gridworld", "navigation_gridworld"]
