"""Max-margin ranking loss, AdaGrad, and constraint projections.

The loss pushes the energy of an observed (word, context) pair above the
energy of a sampled negative by a margin.  Parameters live in constraint
sets: means inside an L2 ball of radius ``mean_cap``, covariance entries
inside ``[cov_floor, cov_ceiling]``.  Projections are exact in floating
point: re-applying either projection returns a bitwise-identical array.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EL = "el"
KL = "kl"
ENERGY_KINDS = (EL, KL)


@dataclass(frozen=True)
class MarginLossConfig:
    margin: float = 1.0
    energy_kind: str = EL

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.energy_kind not in ENERGY_KINDS:
            raise ValueError(f"unknown energy kind {self.energy_kind!r}")


@dataclass(frozen=True)
class ConstraintConfig:
    mean_cap: float = 5.0
    cov_floor: float = 0.05
    cov_ceiling: float = 10.0

    def __post_init__(self):
        if self.mean_cap <= 0:
            raise ValueError("mean_cap must be positive")
        if not 0 < self.cov_floor < self.cov_ceiling:
            raise ValueError("need 0 < cov_floor < cov_ceiling")


@dataclass
class AdaGradState:
    """Per-parameter accumulator of squared gradients."""

    learning_rate: float
    accumulator: np.ndarray
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, param: np.ndarray, learning_rate: float = 0.05,
                   epsilon: float = 1e-8) -> "AdaGradState":
        return cls(learning_rate, np.zeros_like(param, dtype=np.float64), epsilon)


def margin_loss(e_pos: float, e_neg: float, cfg: MarginLossConfig) -> tuple[float, bool]:
    """Hinge max(0, margin - e_pos + e_neg).

    Returns the loss and whether the hinge is active; gradients flow only
    when it is.
    """
    if not (np.isfinite(e_pos) and np.isfinite(e_neg)):
        raise ValueError("energies must be finite")
    raw = cfg.margin - e_pos + e_neg
    if raw > 0:
        return float(raw), True
    return 0.0, False


def adagrad_step_values(param: np.ndarray, grad: np.ndarray, acc: np.ndarray,
                        lr: float, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """One AdaGrad update on raw arrays; returns (new param, new accumulator)."""
    acc = acc + grad * grad
    return param - lr * grad / (np.sqrt(acc) + eps), acc


def adagrad_step(param: np.ndarray, grad: np.ndarray, state: AdaGradState) -> np.ndarray:
    """Update ``param`` with AdaGrad, mutating the state's accumulator."""
    if param.shape != grad.shape or param.shape != state.accumulator.shape:
        raise ValueError("param, grad, and accumulator shapes must match")
    new_param, new_acc = adagrad_step_values(
        param, grad, state.accumulator, state.learning_rate, state.epsilon
    )
    state.accumulator = new_acc
    return new_param


def project_mean(mean: np.ndarray, cfg: ConstraintConfig) -> np.ndarray:
    """Rescale ``mean`` onto the L2 ball of radius ``mean_cap`` if outside.

    Loops until the recomputed norm is actually <= cap so that a second
    application is an exact no-op (one rescale can land a few ulps above
    the cap).
    """
    out = np.asarray(mean, dtype=np.float64)
    cap = cfg.mean_cap
    while True:
        norm = float(np.linalg.norm(out))
        if norm <= cap:
            return out
        factor = cap / norm
        if factor >= 1.0:
            factor = np.nextafter(1.0, 0.0)
        out = out * factor


def project_mean_rows(means: np.ndarray, cfg: ConstraintConfig) -> np.ndarray:
    """Row-wise ``project_mean`` over a (n, d) matrix, in place."""
    cap = cfg.mean_cap
    while True:
        norms = np.linalg.norm(means, axis=1)
        over = norms > cap
        if not over.any():
            return means
        factors = cap / norms[over]
        np.minimum(factors, np.nextafter(1.0, 0.0), out=factors)
        means[over] *= factors[:, None]


def project_covariance(cov: np.ndarray, cfg: ConstraintConfig) -> np.ndarray:
    """Clamp covariance entries into [cov_floor, cov_ceiling]."""
    return np.clip(np.asarray(cov, dtype=np.float64), cfg.cov_floor, cfg.cov_ceiling)


def project_covariance_rows(covs: np.ndarray, cfg: ConstraintConfig) -> np.ndarray:
    np.clip(covs, cfg.cov_floor, cfg.cov_ceiling, out=covs)
    return covs
