"""Supervision stream generation and the temporal-imbalance check.

A stream is a step-per-sample label sequence (single-label: exactly one
class is positive at each step, every other class sees -1).  Streams are
generated from a task schedule -- each task contributes its new classes'
samples plus a fixed number of replay exemplars per old class, shuffled
within the task -- so earlier classes' positives are front-loaded by
construction.

``verify_theorem1`` checks the core monotonicity fact: for two classes
with the same total number of positives, if class A's cumulative
positive count dominates class B's at every step (front-loaded vs
back-loaded), then A's tracker value at the end is <= B's, strictly so
when the dominance is strict somewhere and the kernel strictly
decreases.  The check evaluates Q twice: by direct convolution, and
through the summation-by-parts form

    Phi_k = f[0] * S_k[N-1] - sum_n (f[N-2-n] - f[N-1-n]) * S_k[n]
    Q_k   = 2 * Phi_k - sum_m f[m]

whose second term is class-independent, so the Q order and the Phi order
must agree exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .kernel import MemoryKernel, convolve_q

__all__ = [
    "TaskSpec",
    "TaskSchedule",
    "SupervisionTrace",
    "TheoremVerdict",
    "generate_stream",
    "verify_theorem1",
    "sample_dominance_pair",
]


@dataclass(frozen=True)
class TaskSpec:
    task_id: int
    new_class_ids: tuple[int, ...]
    samples_per_class: int
    replay_per_old_class: int = 0

    def __post_init__(self):
        object.__setattr__(self, "new_class_ids", tuple(self.new_class_ids))
        if not self.new_class_ids:
            raise DomainError(f"task {self.task_id} introduces no classes")
        if self.samples_per_class < 1:
            raise DomainError(f"task {self.task_id} has no samples per class")
        if self.replay_per_old_class < 0:
            raise DomainError("replay count cannot be negative")


@dataclass(frozen=True)
class TaskSchedule:
    """Ordered tasks with disjoint class ids and a default shuffle seed."""

    tasks: tuple[TaskSpec, ...]
    shuffle_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        if not self.tasks:
            raise DomainError("schedule contains no tasks")
        seen: set[int] = set()
        for task in self.tasks:
            overlap = seen.intersection(task.new_class_ids)
            if overlap:
                raise DomainError(f"class ids {sorted(overlap)} appear in multiple tasks")
            seen.update(task.new_class_ids)

    @property
    def class_count(self) -> int:
        return max(k for t in self.tasks for k in t.new_class_ids) + 1

    @classmethod
    def uniform(
        cls,
        class_count: int,
        tasks: int,
        samples_per_class: int,
        replay_per_old_class: int = 0,
        shuffle_seed: int = 0,
    ) -> "TaskSchedule":
        """Equal-width tasks over classes 0..class_count-1, in id order."""
        if tasks < 1 or class_count < 1:
            raise DomainError("need at least one task and one class")
        if class_count % tasks != 0:
            raise DomainError(
                f"class count {class_count} not divisible by task count {tasks}"
            )
        width = class_count // tasks
        specs = tuple(
            TaskSpec(
                task_id=t,
                new_class_ids=tuple(range(t * width, (t + 1) * width)),
                samples_per_class=samples_per_class,
                replay_per_old_class=replay_per_old_class,
            )
            for t in range(tasks)
        )
        return cls(tasks=specs, shuffle_seed=shuffle_seed)


@dataclass(frozen=True)
class SupervisionTrace:
    """A single-label step stream and its induced per-class polarities."""

    labels: np.ndarray
    class_count: int
    task_boundaries: tuple[int, ...] = field(default=())

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "task_boundaries", tuple(self.task_boundaries))
        if labels.ndim != 1 or labels.size == 0:
            raise DomainError("trace needs a nonempty 1-d label stream")
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise DomainError("trace labels outside [0, class_count)")

    def __len__(self) -> int:
        return self.labels.shape[0]

    def polarities(self, class_id: int) -> np.ndarray:
        """a_k[n]: +1 at the class's own steps, -1 elsewhere."""
        if not (0 <= class_id < self.class_count):
            raise DomainError(f"class {class_id} outside [0, {self.class_count})")
        return np.where(self.labels == class_id, 1.0, -1.0)

    def cumulative_positives(self, class_id: int) -> np.ndarray:
        """S_k[n]: positives of the class among steps 0..n."""
        return np.cumsum(self.labels == class_id).astype(np.int64)

    def positive_total(self, class_id: int) -> int:
        return int(np.sum(self.labels == class_id))


def generate_stream(schedule: TaskSchedule, seed: int | None = None) -> SupervisionTrace:
    """Emit the step-per-sample label stream a schedule induces.

    Within each task the new-class samples and the replay exemplars of
    every already-seen class are shuffled uniformly; tasks stay in order.
    """
    rng = np.random.default_rng(schedule.shuffle_seed if seed is None else seed)
    chunks: list[np.ndarray] = []
    boundaries: list[int] = []
    seen: list[int] = []
    total = 0
    for task in schedule.tasks:
        block = [
            np.full(task.samples_per_class, k, dtype=np.int64)
            for k in task.new_class_ids
        ]
        if task.replay_per_old_class > 0:
            block.extend(
                np.full(task.replay_per_old_class, k, dtype=np.int64) for k in seen
            )
        labels = np.concatenate(block)
        rng.shuffle(labels)
        chunks.append(labels)
        total += labels.size
        boundaries.append(total)
        seen.extend(task.new_class_ids)
    return SupervisionTrace(
        labels=np.concatenate(chunks),
        class_count=schedule.class_count,
        task_boundaries=tuple(boundaries),
    )


def _kernel_values(kernel, n: int) -> np.ndarray:
    if isinstance(kernel, MemoryKernel):
        return kernel.weights(n)
    f = np.asarray(kernel, dtype=np.float64)
    if f.shape[0] < n:
        raise DomainError("kernel value array shorter than the trace")
    if np.any(f < 0) or np.any(np.diff(f[:n]) > 0):
        raise DomainError("kernel values must be nonnegative and nonincreasing")
    return f[:n]


def phi_from_counts(kernel_values: np.ndarray, cum_positives: np.ndarray) -> float:
    """Summation-by-parts functional of the cumulative positive curve.

    Phi = f[0] * S[N-1] - sum_{n=0}^{N-2} (f[N-2-n] - f[N-1-n]) * S[n].
    Larger Phi means later (back-loaded) positives under a decreasing
    kernel -- see ``verify_theorem1`` for the identity tying it to Q.
    """
    f = np.asarray(kernel_values, dtype=np.float64)
    s = np.asarray(cum_positives, dtype=np.float64)
    n = s.shape[0]
    if n == 0:
        raise DomainError("empty cumulative curve")
    if n == 1:
        return float(f[0] * s[-1])
    deltas = f[n - 2 :: -1] - f[n - 1 : 0 : -1]  # f[N-2-n'] - f[N-1-n'] for n'=0..N-2
    return float(f[0] * s[-1] - np.dot(deltas, s[: n - 1]))


@dataclass(frozen=True)
class TheoremVerdict:
    """Outcome of one monotonicity check on a pair of classes.

    ``gap_by_parts`` is Q_b - Q_a evaluated through the summation-by-parts
    differences, 2 * sum_n Delta_n * (S_a[n] - S_b[n]): a sum of same-sign
    terms, so it stays positive for strictly dominated pairs even when the
    direct difference q_b - q_a underflows to zero next to |Q| (a gap
    carried entirely by ancient steps can be ~1e-90 while Q is O(1)).
    """

    q_a: float
    q_b: float
    phi_a: float
    phi_b: float
    gap_by_parts: float
    dominance_held: bool
    strict_dominance: bool
    conclusion_held: bool

    @property
    def gap(self) -> float:
        return self.q_b - self.q_a


def verify_theorem1(
    kernel,
    trace_or_pair,
    class_a: int = 0,
    class_b: int = 1,
) -> TheoremVerdict:
    """Check Q_A <= Q_B for an equal-positive-count, dominance-ordered pair.

    ``kernel`` is a MemoryKernel or an explicit nonincreasing value
    array; ``trace_or_pair`` is a SupervisionTrace (classes picked by id)
    or a pair of +1/-1 sequences.  Both evaluation paths are computed and
    cross-checked: Q by direct convolution and Q = 2*Phi - sum(f) through
    the cumulative curves.  Raises if the pair's positive totals differ
    (the hypothesis of the statement), or if the two paths disagree
    beyond 1e-10.
    """
    if isinstance(trace_or_pair, SupervisionTrace):
        a_seq = trace_or_pair.polarities(class_a)
        b_seq = trace_or_pair.polarities(class_b)
    else:
        a_raw, b_raw = trace_or_pair
        a_seq = np.asarray(a_raw, dtype=np.float64)
        b_seq = np.asarray(b_raw, dtype=np.float64)
        if a_seq.shape != b_seq.shape:
            raise DomainError("pair sequences must have equal length")
        for seq in (a_seq, b_seq):
            if seq.size == 0 or not np.all(np.abs(seq) == 1.0):
                raise DomainError("pair sequences must be nonempty and +1/-1 valued")
    n = a_seq.shape[0]
    s_a = np.cumsum(a_seq > 0).astype(np.float64)
    s_b = np.cumsum(b_seq > 0).astype(np.float64)
    if s_a[-1] != s_b[-1]:
        raise DomainError(
            f"classes have unequal positive totals ({int(s_a[-1])} vs {int(s_b[-1])}); "
            "the monotonicity statement assumes equal counts"
        )
    f = _kernel_values(kernel, n)
    q_a = convolve_q(f, a_seq)
    q_b = convolve_q(f, b_seq)
    phi_a = phi_from_counts(f, s_a)
    phi_b = phi_from_counts(f, s_b)
    kernel_mass = float(np.sum(f[:n]))
    scale = max(1.0, kernel_mass)
    if abs(q_a - (2.0 * phi_a - kernel_mass)) > 1e-10 * scale or abs(
        q_b - (2.0 * phi_b - kernel_mass)
    ) > 1e-10 * scale:
        raise AssertionError("convolution and summation-by-parts paths disagree")
    if n > 1:
        deltas = f[n - 2 :: -1] - f[n - 1 : 0 : -1]
        gap_by_parts = 2.0 * float(np.dot(deltas, (s_a - s_b)[: n - 1]))
    else:
        gap_by_parts = 0.0
    dominance = bool(np.all(s_a >= s_b))
    strict = dominance and bool(np.any(s_a > s_b))
    return TheoremVerdict(
        q_a=q_a,
        q_b=q_b,
        phi_a=phi_a,
        phi_b=phi_b,
        gap_by_parts=gap_by_parts,
        dominance_held=dominance,
        strict_dominance=strict,
        conclusion_held=bool(q_a <= q_b + 1e-12 * scale),
    )


def sample_dominance_pair(
    rng: np.random.Generator, length: int, positives: int
) -> tuple[np.ndarray, np.ndarray]:
    """Random equal-count pair with S_A >= S_B at every step.

    B's positive positions are a uniform sorted sample; A's i-th positive
    is then placed uniformly at or before B's i-th (and after A's
    previous one), which forces pointwise dominance of A's cumulative
    curve.
    """
    if not (0 < positives <= length):
        raise DomainError("positives must lie in [1, length]")
    b_pos = np.sort(rng.choice(length, size=positives, replace=False))
    a_pos = np.empty(positives, dtype=np.int64)
    prev = -1
    for i, b in enumerate(b_pos):
        a_pos[i] = rng.integers(prev + 1, b + 1)
        prev = a_pos[i]
    a_seq = np.full(length, -1.0)
    b_seq = np.full(length, -1.0)
    a_seq[a_pos] = 1.0
    b_seq[b_pos] = 1.0
    return a_seq, b_seq
