"""Exponential decay kernel and the per-class temporal supervision tracker Q.

A class's supervision history is a polarity sequence a[n] in {+1, -1}
(+1 when the step's sample belongs to the class, -1 otherwise).  The
tracker convolves that sequence with the decay kernel

    f[n] = lam**(n + 1),   0 < lam < 1,

so the most recent step carries weight lam and influence fades
geometrically.  Under all-positive supervision Q approaches but never
reaches q_max = lam / (1 - lam).

Three update rules are provided:

* ``update_plain``    -- the raw one-step recursion q' = lam * (q + a).
  Exactly equivalent to the convolution but can go negative on
  negative-heavy streams; kept as an oracle-comparison path only.
* ``update_tal``      -- the attenuated rule used for training: negative
  supervision is scaled by w(q) = (q / q_max) ** r, which keeps q inside
  [0, q_max) for r >= 1 and lam >= 1/2.
* ``update_batched``  -- the fractional minibatch form: with N samples of
  which n_k are positive for class k,
  q' = lam * (q + n_k/N - ((N - n_k)/N) * w(q)).
  For N = 1 this reduces bit-exactly to ``update_tal``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

__all__ = [
    "MemoryKernel",
    "QState",
    "PolaritySequence",
    "negative_weight",
    "q_from_convolution",
    "convolve_q",
    "update_plain",
    "update_tal",
    "update_batched",
]


@dataclass(frozen=True)
class MemoryKernel:
    """Exponential decay law f[n] = lam**(n+1) with memory parameter lam."""

    lam: float

    def __post_init__(self):
        if not (0.0 < self.lam < 1.0):
            raise DomainError(f"memory parameter must lie in (0, 1), got {self.lam}")

    @property
    def q_max(self) -> float:
        """Asymptotic supremum of the tracker, lam / (1 - lam).

        Always recomputed from lam so the two can never drift apart.
        """
        return self.lam / (1.0 - self.lam)

    def weights(self, n: int) -> np.ndarray:
        """First n kernel values f[0..n-1] = lam**1 .. lam**n."""
        return self.lam ** (np.arange(1, n + 1, dtype=np.float64))


@dataclass(frozen=True)
class QState:
    """Per-class temporal positive-supervision strengths.

    ``q[k]`` lives in [0, q_max) for every class once driven by the
    attenuated updates.  Updates return a fresh QState; a state in hand
    is a stable snapshot (single-writer contract: one updater advances
    the chain, readers keep old snapshots).
    """

    q: np.ndarray
    step: int = 0

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64)
        object.__setattr__(self, "q", q)
        if q.ndim != 1:
            raise DomainError("q must be a 1-d vector of per-class strengths")
        if self.step < 0:
            raise DomainError("step count cannot be negative")

    @classmethod
    def zeros(cls, class_count: int) -> "QState":
        """Fresh tracker: every class starts at zero strength."""
        if class_count < 1:
            raise DomainError("need at least one class")
        return cls(q=np.zeros(class_count), step=0)

    @property
    def class_count(self) -> int:
        return self.q.shape[0]

    def append_classes(self, n_new: int) -> "QState":
        """Grow the tracker when a task introduces classes; new entries start at 0."""
        if n_new < 0:
            raise DomainError("cannot append a negative number of classes")
        return QState(q=np.concatenate([self.q, np.zeros(n_new)]), step=self.step)


@dataclass(frozen=True)
class PolaritySequence:
    """A recorded +1/-1 supervision sequence for one class."""

    values: np.ndarray
    class_id: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 1:
            raise DomainError("polarity sequence must be 1-d")
        if values.size and not np.all(np.abs(values) == 1.0):
            raise DomainError("polarities must be exactly +1 or -1")
        if self.class_id < 0:
            raise DomainError("class_id must be nonnegative")

    def __len__(self) -> int:
        return self.values.shape[0]


def negative_weight(q, q_max: float, r: float):
    """Sensitivity to negative supervision, w(q) = (q / q_max) ** r.

    Shared by the loss, the attenuated updates and the calibration
    degeneracy probe, so all three see the same arithmetic. Accepts
    scalars or arrays.
    """
    return (np.asarray(q, dtype=np.float64) / q_max) ** r


def _check_polarities(polarities, class_count: int) -> np.ndarray:
    a = np.asarray(polarities, dtype=np.float64)
    if a.shape != (class_count,):
        raise DomainError(
            f"polarity vector has length {a.shape}, expected ({class_count},)"
        )
    if not np.all(np.abs(a) == 1.0):
        raise DomainError("polarities must be exactly +1 or -1")
    return a


def convolve_q(kernel_values: np.ndarray, polarities: np.ndarray) -> float:
    """Brute-force tracker value for an arbitrary decreasing kernel.

    Computes sum_n f[N-1-n] * a[n], i.e. the newest step gets f[0].  This
    is the O(N) oracle that every recursion must reproduce; it accepts
    any kernel value array so monotonicity arguments can be probed with
    non-exponential decays too.
    """
    f = np.asarray(kernel_values, dtype=np.float64)
    a = np.asarray(polarities, dtype=np.float64)
    if a.size == 0:
        raise DomainError("cannot evaluate the tracker on an empty sequence")
    if f.shape[0] < a.shape[0]:
        raise DomainError("kernel shorter than the polarity sequence")
    return float(np.dot(f[: a.size], a[::-1]))


def q_from_convolution(kernel: MemoryKernel, seq: PolaritySequence) -> float:
    """Tracker value by direct convolution with the exponential kernel."""
    if len(seq) == 0:
        raise DomainError("cannot evaluate the tracker on an empty sequence")
    return convolve_q(kernel.weights(len(seq)), seq.values)


def update_plain(state: QState, kernel: MemoryKernel, polarities) -> QState:
    """One step of the raw recursion q' = lam * (q + a).

    Matches the convolution exactly but has no lower bound; negative
    values are reported as-is.  Oracle path only -- training goes
    through ``update_tal`` / ``update_batched``.
    """
    a = _check_polarities(polarities, state.class_count)
    return QState(q=kernel.lam * (state.q + a), step=state.step + 1)


def _require_tal_domain(kernel: MemoryKernel, r: float, strict: bool) -> None:
    if strict:
        if r < 1.0:
            raise DomainError(
                f"steepness r={r} < 1 is outside the calibrated domain; "
                "pass strict=False to explore it (range invariants demote to warnings)"
            )
        if kernel.lam < 0.5:
            raise DomainError(
                f"lam={kernel.lam} < 0.5 gives q_max < 1 and breaks the "
                "nonnegativity of the attenuated update; pass strict=False to explore"
            )
    elif r <= 0.0:
        raise DomainError(f"steepness r must be positive, got {r}")


def _settle_range(q: np.ndarray, q_max: float, strict: bool) -> np.ndarray:
    if strict:
        # In exact arithmetic the update maps [0, q_max) into itself.  The
        # rounded result can land exactly on either boundary (e.g. lam=0.5
        # after ~53 consecutive positives puts the true value within half an
        # ulp of q_max), so exact-boundary roundings are snapped one ulp back
        # inside.  Anything beyond rounding distance is a real bug.
        tol = 4.0 * np.finfo(np.float64).eps * q_max
        assert np.all(q >= -tol) and np.all(q <= q_max + tol), "tracker left [0, q_max)"
        return np.minimum(np.maximum(q, 0.0), np.nextafter(q_max, 0.0))
    if np.any(q < 0.0):
        warnings.warn(
            "attenuated update left [0, q_max); clamping at 0 (exploratory r < 1 path)",
            RuntimeWarning,
            stacklevel=3,
        )
        q = np.maximum(q, 0.0)
    return q


def update_tal(
    state: QState,
    kernel: MemoryKernel,
    r: float,
    polarities,
    *,
    strict: bool = True,
) -> QState:
    """One attenuated step: q' = lam*(q+1) on +1, q' = lam*(q - w(q)) on -1."""
    _require_tal_domain(kernel, r, strict)
    a = _check_polarities(polarities, state.class_count)
    q = state.q
    q_max = kernel.q_max
    if strict and (np.any(q < 0.0) or np.any(q >= q_max)):
        raise DomainError("tracker state outside [0, q_max); cannot apply attenuated update")
    w = negative_weight(q, q_max, r)
    q_next = kernel.lam * (q + np.where(a > 0, 1.0, -w))
    return QState(q=_settle_range(q_next, q_max, strict), step=state.step + 1)


def update_batched(
    state: QState,
    kernel: MemoryKernel,
    r: float,
    pos_counts,
    batch_size: int,
    *,
    strict: bool = True,
) -> QState:
    """Minibatch tracker advance from per-class positive counts.

    With batch fractions p_k = pos_counts[k] / batch_size:

        q'_k = lam * (q_k + p_k - (1 - p_k) * w(q_k))

    One call per minibatch; ``batch_size=1`` with a one-hot count vector
    reproduces ``update_tal`` bit for bit.
    """
    _require_tal_domain(kernel, r, strict)
    if batch_size <= 0:
        raise DomainError("batch must contain at least one sample")
    n_pos = np.asarray(pos_counts, dtype=np.float64)
    if n_pos.shape != (state.class_count,):
        raise DomainError(
            f"pos_counts has shape {n_pos.shape}, expected ({state.class_count},)"
        )
    if np.any(n_pos < 0) or np.any(n_pos > batch_size):
        raise DomainError("pos_counts must lie in [0, batch_size]")
    q = state.q
    q_max = kernel.q_max
    if strict and (np.any(q < 0.0) or np.any(q >= q_max)):
        raise DomainError("tracker state outside [0, q_max); cannot apply attenuated update")
    frac_pos = n_pos / batch_size
    frac_neg = 1.0 - frac_pos
    w = negative_weight(q, q_max, r)
    q_next = kernel.lam * (q + frac_pos - frac_neg * w)
    return QState(q=_settle_range(q_next, q_max, strict), step=state.step + 1)
