"""Binary estimators turning one learnable scalar per item into a selection bit.

Both estimators round ``sigmoid`` in the forward pass.  In the backward pass
the straight-through estimator (STE) differentiates ``sigmoid(tau * e)``
while the pass-through estimator (PTE) treats the output as ``e`` itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit


class EstimatorKind(str, Enum):
    STE = "ste"
    PTE = "pte"


@dataclass(frozen=True)
class EstimatorConfig:
    kind: EstimatorKind = EstimatorKind.STE
    tau0: float = 1.0
    change_rate: float = 1.01
    step: float = 50.0
    round_threshold: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", EstimatorKind(self.kind))
        if not 0 < self.round_threshold < 1:
            raise ValueError(f"round_threshold must lie in (0, 1), got {self.round_threshold}")
        if self.kind is EstimatorKind.STE:
            if self.tau0 < 1:
                raise ValueError(f"tau0 must be >= 1, got {self.tau0}")
            if self.change_rate <= 1:
                raise ValueError(f"change_rate must be > 1, got {self.change_rate}")
            if self.step < 1:
                raise ValueError(f"step must be >= 1, got {self.step}")


@dataclass
class EstimatorState:
    e: np.ndarray
    epoch: int = 0

    @classmethod
    def zeros(cls, n: int) -> "EstimatorState":
        return cls(np.zeros(n))


def anneal_tau(config: EstimatorConfig, epoch: int) -> float:
    """Slope of the STE sigmoid at ``epoch``: ``tau0 * r ** (epoch / s)``."""
    if config.kind is not EstimatorKind.STE:
        raise TypeError("slope annealing is only defined for the STE estimator")
    if epoch < 0:
        raise ValueError(f"epoch must be non-negative, got {epoch}")
    return config.tau0 * config.change_rate ** (epoch / config.step)


def _slope(state: EstimatorState, config: EstimatorConfig) -> float:
    if config.kind is EstimatorKind.STE:
        return anneal_tau(config, state.epoch)
    return 1.0


def forward(state: EstimatorState, config: EstimatorConfig, idx=None) -> np.ndarray:
    """Selection bits (uint8); a sigmoid output equal to the threshold rounds up."""
    e = state.e if idx is None else state.e[idx]
    return (expit(_slope(state, config) * e) >= config.round_threshold).astype(np.uint8)


def backward_relaxation(state: EstimatorState, config: EstimatorConfig, idx=None):
    """Return the relaxed output and its elementwise derivative w.r.t. ``e``.

    ``idx`` restricts both arrays to a subset of coordinates.
    """
    e = state.e if idx is None else state.e[idx]
    if config.kind is EstimatorKind.PTE:
        return e.copy(), np.ones_like(e)
    tau = anneal_tau(config, state.epoch)
    xt = expit(tau * e)
    return xt, tau * xt * (1.0 - xt)

