"""Regression targets on a fixed grid of evaluation points.

The grid convention is K evenly spaced points theta_k = k/(K-1) on [0, 1],
endpoints included. Target functions are the test problems used by the
benchmark runners; "log-sine" carries a low-frequency auxiliary component
(the logarithm alone) used by the pseudo-loss diagnostic.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = ["GridTask", "TARGETS", "target_fn", "aux_fn"]


def _sine(theta):
    return np.sin(2.0 * np.pi * theta)


def _log_component(theta):
    return np.log(1.0 + 5.0 * theta)


def _log_sine(theta):
    return _log_component(theta) + 0.1 * np.sin(20.0 * np.pi * theta)


def _step(theta):
    theta = np.asarray(theta, dtype=np.float64)
    return np.where((theta > 0.5) & (theta < 0.75), 0.5, 0.0)


TARGETS = {"sine": _sine, "log-sine": _log_sine, "step": _step}
AUX_FNS = {"log": _log_component}


def target_fn(name: str):
    try:
        return TARGETS[name]
    except KeyError:
        raise ValueError(f"unknown target {name!r}") from None


def aux_fn(name: str):
    try:
        return AUX_FNS[name]
    except KeyError:
        raise ValueError(f"unknown auxiliary component {name!r}") from None


@dataclass(frozen=True)
class GridTask:
    """A 1-d regression task evaluated on an evenly spaced grid."""

    target: str
    n_points: int = 1000
    aux: str | None = None

    def __post_init__(self):
        target_fn(self.target)
        if self.aux is not None:
            aux_fn(self.aux)
        if self.n_points < 2:
            raise ValueError("grid needs at least 2 points")

    @cached_property
    def thetas(self) -> np.ndarray:
        return np.linspace(0.0, 1.0, self.n_points)

    @cached_property
    def target_values(self) -> np.ndarray:
        return target_fn(self.target)(self.thetas)

    @cached_property
    def aux_values(self) -> np.ndarray:
        if self.aux is None:
            raise ValueError("task has no auxiliary component")
        return aux_fn(self.aux)(self.thetas)

    def to_dict(self) -> dict:
        return {"target": self.target, "n_points": self.n_points, "aux": self.aux}

    @staticmethod
    def from_dict(d: dict) -> "GridTask":
        return GridTask(target=d["target"], n_points=d.get("n_points", 1000), aux=d.get("aux"))
