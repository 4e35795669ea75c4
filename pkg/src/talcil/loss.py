"""Temporally-adjusted cross-entropy and its analytical gradient.

For a sample (z, y) and a snapshot q of the per-class tracker, each
non-true class k gets its exponential reweighted by alpha * w(q_k),
w(q) = (q/q_max)**r.  Vectorized, this is a per-class additive shift of
the logits:

    zt[i, k] = z[i, k] + log(alpha * max(s_k, eps))   for k != y_i
    zt[i, y_i] = z[i, y_i]
    loss = mean_i [ logsumexp_k zt[i, k] - z[i, y_i] ]

The eps floor sits inside the log on s_k alone (not on alpha * s_k), so
a class with q = 0 contributes exp(z + log(alpha * eps)) -- screened out
of the denominator but still differentiable.  The gradient treats q as a
constant: no sensitivity flows from the loss into the tracker, matching
the update rule's role as a separate online statistic.

At the balanced steady state q_k = x* * q_max the shifts all vanish
(alpha * w = 1) and both loss and gradient coincide with plain
cross-entropy.

Forward passes are pure given a tracker snapshot, so any number may run
concurrently against the same snapshot; ``training_step`` additionally
advances the tracker and so belongs to its single-writer chain.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import solve_calibration
from .errors import DomainError
from .kernel import MemoryKernel, QState, negative_weight, update_batched

__all__ = ["TalConfig", "LossOutput", "tal_forward", "ce_forward", "training_step"]


@dataclass(frozen=True)
class TalConfig:
    """One fully calibrated loss instance: kernel, steepness, class count,
    alignment parameter and the log-weight stabilizer."""

    kernel: MemoryKernel
    r: float
    class_count: int
    alpha: float
    epsilon: float = 1e-12
    exploratory: bool = False

    def __post_init__(self):
        if not (0.0 < self.epsilon <= 1e-6):
            raise DomainError(f"epsilon must lie in (0, 1e-6], got {self.epsilon}")
        if self.class_count < 2:
            raise DomainError("need at least 2 classes")
        if not self.exploratory:
            if self.r < 1.0:
                raise DomainError(
                    f"steepness r={self.r} < 1 needs exploratory=True (uncalibrated domain)"
                )
            if self.kernel.lam < 0.5:
                raise DomainError(
                    f"lam={self.kernel.lam} < 0.5 needs exploratory=True (q_max < 1)"
                )
        ref = solve_calibration(self.class_count, self.r, strict=not self.exploratory)
        if abs(self.alpha * ref.x_star**self.r - 1.0) > 1e-9:
            raise DomainError(
                f"alpha={self.alpha} inconsistent with (C={self.class_count}, r={self.r}); "
                f"calibrated value is {ref.alpha}"
            )

    @classmethod
    def for_classes(
        cls,
        lam: float,
        r: float,
        class_count: int,
        epsilon: float = 1e-12,
        *,
        exploratory: bool = False,
    ) -> "TalConfig":
        """Build a config by solving the calibration for (class_count, r)."""
        result = solve_calibration(class_count, r, strict=not exploratory)
        return cls(
            kernel=MemoryKernel(lam=lam),
            r=r,
            class_count=class_count,
            alpha=result.alpha,
            epsilon=epsilon,
            exploratory=exploratory,
        )


@dataclass(frozen=True)
class LossOutput:
    """Batch-mean loss and its exact gradient with respect to the logits."""

    loss: float
    grad_logits: np.ndarray


def _check_inputs(logits, labels, class_count=None):
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    if z.ndim != 2:
        raise DomainError("logits must be an N x C matrix")
    if not np.all(np.isfinite(z)):
        raise DomainError("logits contain non-finite values")
    if y.shape != (z.shape[0],):
        raise DomainError("labels must be a vector with one entry per row of logits")
    if not np.issubdtype(y.dtype, np.integer):
        y = y.astype(np.int64)
    c = z.shape[1] if class_count is None else class_count
    if z.shape[1] != c:
        raise DomainError(f"logits have {z.shape[1]} columns, expected {c}")
    if y.size and (y.min() < 0 or y.max() >= c):
        raise IndexError(f"labels must lie in [0, {c})")
    return z, y


def _softmax_loss(z_tilde: np.ndarray, z_true: np.ndarray, labels: np.ndarray):
    """Mean of logsumexp(zt) - z_true and the softmax-minus-onehot gradient."""
    n = z_tilde.shape[0]
    m = z_tilde.max(axis=1, keepdims=True)
    exps = np.exp(z_tilde - m)
    denom = exps.sum(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(denom[:, 0])
    loss = float(np.mean(lse - z_true))
    grad = exps / denom
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad


def ce_forward(logits, labels) -> LossOutput:
    """Plain mean cross-entropy; the baseline for every comparison."""
    z, y = _check_inputs(logits, labels)
    loss, grad = _softmax_loss(z, z[np.arange(z.shape[0]), y], y)
    return LossOutput(loss=loss, grad_logits=grad)


def tal_forward(config: TalConfig, logits, labels, q_snapshot: QState) -> LossOutput:
    """Temporally-adjusted loss against a fixed tracker snapshot."""
    z, y = _check_inputs(logits, labels, config.class_count)
    if q_snapshot.class_count != config.class_count:
        raise DomainError(
            f"tracker has {q_snapshot.class_count} classes, config expects {config.class_count}"
        )
    q_max = config.kernel.q_max
    q = q_snapshot.q
    if not config.exploratory and (np.any(q < 0.0) or np.any(q >= q_max)):
        raise DomainError("tracker snapshot outside [0, q_max)")
    s = negative_weight(q, q_max, config.r)
    log_w = np.log(config.alpha * np.maximum(s, config.epsilon))
    rows = np.arange(z.shape[0])
    z_true = z[rows, y]
    z_tilde = z + log_w[np.newaxis, :]
    z_tilde[rows, y] = z_true
    loss, grad = _softmax_loss(z_tilde, z_true, y)
    return LossOutput(loss=loss, grad_logits=grad)


def training_step(
    config: TalConfig, q_state: QState, logits, labels
) -> tuple[LossOutput, QState]:
    """Loss against the pre-update snapshot, then the tracker advance.

    The ordering is part of the contract: the loss never sees the current
    batch's own counts.  The tracker moves by the fractional minibatch
    rule with pos_counts taken from the label histogram.
    """
    out = tal_forward(config, logits, labels, q_state)
    y = np.asarray(labels, dtype=np.int64)
    pos_counts = np.bincount(y, minlength=config.class_count)
    new_state = update_batched(
        q_state,
        config.kernel,
        config.r,
        pos_counts,
        batch_size=y.shape[0],
        strict=not config.exploratory,
    )
    return out, new_state
