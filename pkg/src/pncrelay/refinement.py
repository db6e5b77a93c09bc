"""Parity-check-driven refinement of the decoder's soft output.

Every bit carries a belief weight ``z``.  After a decoding pass each check
adds ``alpha`` to the weights of its bits when it is satisfied and
subtracts ``beta`` when it is violated.  The sigmoid of ``z`` then scales
the decoder posterior before it is mixed with a uniform term and fed back
to the detector.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = ["BeliefState", "update_belief_weights", "refine", "Z_CLAMP"]

Z_CLAMP = 30.0


@dataclass(frozen=True)
class BeliefState:
    z: np.ndarray
    alpha: float = 1.0
    beta: float = 5.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("belief weights must be finite")

    @classmethod
    def initial(cls, length: int, alpha: float = 1.0, beta: float = 5.0) -> "BeliefState":
        return cls(np.zeros(length), alpha, beta)

    @property
    def r_bf(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.z))


def update_belief_weights(state: BeliefState, H, syndrome) -> BeliefState:
    H = np.asarray(H)
    s = np.asarray(syndrome).astype(bool)
    if H.shape != (s.size, state.z.size):
        raise ValueError(
            f"H has shape {H.shape}; expected ({s.size}, {state.z.size}) from syndrome and weights"
        )
    per_check = np.where(s, -state.beta, state.alpha)
    z = np.clip(state.z + per_check @ H, -Z_CLAMP, Z_CLAMP)
    return replace(state, z=z)


def refine(posterior, state: BeliefState) -> np.ndarray:
    """xi * (r_bf * p + 1/4) per position, with xi chosen to normalize."""
    p = np.asarray(posterior, dtype=float)
    if p.ndim != 2 or p.shape[1] != 4 or p.shape[0] != state.z.size:
        raise ValueError(f"posterior must have shape ({state.z.size}, 4), got {p.shape}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValueError("posterior must be finite and nonnegative")
    if not np.allclose(p.sum(axis=1), 1.0, atol=1e-9):
        raise ValueError("posterior rows must sum to 1")
    r = state.r_bf[:, None]
    return (r * p + 0.25) / (r + 1.0)
