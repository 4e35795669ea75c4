import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from talcil import (
    DomainError,
    MemoryKernel,
    PolaritySequence,
    QState,
    q_from_convolution,
    solve_calibration,
    update_batched,
    update_plain,
    update_tal,
)
from talcil.kernel import convolve_q, negative_weight

LAMBDAS = [0.5, 0.9, 0.99, 0.995, 0.999]

polarity_lists = st.lists(st.sampled_from([-1.0, 1.0]), min_size=1, max_size=400)


# ---------------------------------------------------------------------------
# MemoryKernel
# ---------------------------------------------------------------------------


def test_q_max_is_derived_from_lam():
    k = MemoryKernel(lam=0.9)
    assert k.q_max == pytest.approx(9.0, rel=1e-15)
    assert MemoryKernel(lam=0.5).q_max == 1.0


@pytest.mark.parametrize("bad", [0.0, 1.0, -0.3, 1.7])
def test_lam_outside_open_interval_rejected(bad):
    with pytest.raises(DomainError):
        MemoryKernel(lam=bad)


def test_kernel_weights_strictly_decreasing_and_positive():
    w = MemoryKernel(lam=0.7).weights(50)
    assert np.all(w > 0)
    assert np.all(np.diff(w) < 0)
    assert w[0] == 0.7  # newest step carries lam itself


# ---------------------------------------------------------------------------
# convolution oracle
# ---------------------------------------------------------------------------


def test_convolution_single_positive_step():
    k = MemoryKernel(lam=0.5)
    assert q_from_convolution(k, PolaritySequence(values=[1.0])) == 0.5


@pytest.mark.parametrize("n", [1, 3, 10, 64])
def test_convolution_all_positive_closed_form(n):
    # under all-positive supervision the value is q_max * (1 - lam**n)
    k = MemoryKernel(lam=0.5)
    got = q_from_convolution(k, PolaritySequence(values=np.ones(n)))
    assert got == pytest.approx(1.0 - 0.5**n, abs=1e-14)


def test_convolution_alternating_matches_direct_summation():
    lam = 0.9
    values = np.array([1.0, -1.0] * 5)
    expected = sum(lam ** (10 - 1 - n + 1) * values[n] for n in range(10))
    k = MemoryKernel(lam=lam)
    got = q_from_convolution(k, PolaritySequence(values=values))
    assert got == pytest.approx(expected, abs=1e-15)


def test_convolution_rejects_empty_sequence():
    with pytest.raises(DomainError):
        q_from_convolution(MemoryKernel(lam=0.5), PolaritySequence(values=[]))


def test_polarity_sequence_rejects_nonunit_values():
    with pytest.raises(DomainError):
        PolaritySequence(values=[1.0, 0.5])


def test_convolve_q_accepts_any_decreasing_kernel():
    f = 1.0 / (np.arange(10) + 2.0)
    a = np.array([1.0, -1.0, 1.0])
    assert convolve_q(f, a) == pytest.approx(f[2] - f[1] + f[0])


# ---------------------------------------------------------------------------
# plain recursion (oracle-comparison path)
# ---------------------------------------------------------------------------


def test_plain_one_step_values():
    k = MemoryKernel(lam=0.5)
    st = update_plain(QState.zeros(2), k, [1.0, -1.0])
    # raw recursion reports the negative value as-is
    assert st.q.tolist() == [0.5, -0.5]
    assert st.step == 1

    st2 = update_plain(QState(q=np.array([0.9])), MemoryKernel(lam=0.9), [1.0])
    assert st2.q[0] == pytest.approx(1.71, abs=1e-15)


def test_plain_rejects_length_mismatch():
    with pytest.raises(DomainError):
        update_plain(QState.zeros(3), MemoryKernel(lam=0.5), [1.0, -1.0])


def test_plain_all_positive_monotone_approach():
    k = MemoryKernel(lam=0.9)
    st = QState.zeros(1)
    values = []
    for _ in range(1000):
        st = update_plain(st, k, [1.0])
        values.append(st.q[0])
    # strictly increasing until float64 saturation (~step 326 for lam=0.9),
    # never decreasing, never attaining q_max
    assert all(b > a for a, b in zip(values[:300], values[1:301]))
    assert all(b >= a for a, b in zip(values, values[1:]))
    assert values[-1] == pytest.approx(k.q_max * (1 - 0.9**1000), rel=1e-12)
    assert values[-1] < k.q_max


@given(values=polarity_lists, lam=st.sampled_from(LAMBDAS))
def test_plain_recursion_equals_convolution(values, lam):
    k = MemoryKernel(lam=lam)
    st = QState.zeros(1)
    for v in values:
        st = update_plain(st, k, [v])
    conv = q_from_convolution(k, PolaritySequence(values=np.array(values)))
    assert st.q[0] == pytest.approx(conv, abs=1e-10 * max(1.0, k.q_max))


# ---------------------------------------------------------------------------
# attenuated update
# ---------------------------------------------------------------------------


def test_tal_all_negative_stays_exactly_zero():
    for lam in (0.5, 0.9, 0.995):
        for r in (1.0, 2.0, 5.0):
            st = QState.zeros(1)
            for _ in range(200):
                st = update_tal(st, MemoryKernel(lam=lam), r, [-1.0])
                assert st.q[0] == 0.0


def test_tal_all_positive_closed_form():
    k = MemoryKernel(lam=0.99)
    st = QState.zeros(1)
    for n in range(1, 500):
        st = update_tal(st, k, 1.0, [1.0])
        assert st.q[0] == pytest.approx(k.q_max * (1 - 0.99**n), abs=1e-12 * k.q_max)


def test_tal_saturates_one_ulp_below_q_max():
    # lam=0.5 reaches the float ceiling after ~55 positives: the value must
    # pin at the largest representable below q_max, never q_max itself
    k = MemoryKernel(lam=0.5)
    st = QState.zeros(1)
    for _ in range(200):
        st = update_tal(st, k, 1.0, [1.0])
        assert st.q[0] < k.q_max
    assert st.q[0] == np.nextafter(k.q_max, 0.0)


def test_tal_rejects_uncalibrated_parameters():
    with pytest.raises(DomainError):
        update_tal(QState.zeros(1), MemoryKernel(lam=0.9), 0.5, [1.0])
    with pytest.raises(DomainError):
        update_tal(QState.zeros(1), MemoryKernel(lam=0.4), 1.0, [1.0])


def test_tal_rejects_state_outside_range():
    with pytest.raises(DomainError):
        update_tal(QState(q=np.array([-0.1])), MemoryKernel(lam=0.9), 1.0, [1.0])
    k = MemoryKernel(lam=0.9)
    with pytest.raises(DomainError):
        update_tal(QState(q=np.array([k.q_max])), k, 1.0, [1.0])


def test_tal_exploratory_r_clamps_and_warns():
    # r < 1 can push the value negative; the permissive path clamps at 0
    k = MemoryKernel(lam=0.99)
    st = QState(q=np.array([1e-4 * k.q_max]))
    with pytest.warns(RuntimeWarning):
        st = update_tal(st, k, 0.2, [-1.0], strict=False)
    assert st.q[0] == 0.0


@given(
    lam=st.sampled_from([0.5, 0.9, 0.995]),
    r=st.sampled_from([1.0, 2.0, 5.0]),
    bias=st.floats(min_value=0.05, max_value=0.95),
    seed=st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=25)
def test_tal_range_invariant_under_random_streams(lam, r, bias, seed):
    rng = np.random.default_rng(seed)
    k = MemoryKernel(lam=lam)
    st = QState.zeros(3)
    for _ in range(300):
        a = np.where(rng.random(3) < bias, 1.0, -1.0)
        st = update_tal(st, k, r, a)
        w = negative_weight(st.q, k.q_max, r)
        assert np.all(st.q >= 0.0) and np.all(st.q < k.q_max)
        assert np.all(w >= 0.0) and np.all(w < 1.0)


# ---------------------------------------------------------------------------
# batched update
# ---------------------------------------------------------------------------


@given(
    q_fracs=st.lists(st.floats(min_value=0.0, max_value=0.999), min_size=2, max_size=6),
    lam=st.sampled_from([0.5, 0.9, 0.995]),
    r=st.sampled_from([1.0, 2.0, 5.0]),
    hot=st.integers(min_value=0, max_value=5),
)
def test_batched_single_sample_equals_single_step(q_fracs, lam, r, hot):
    k = MemoryKernel(lam=lam)
    q = np.array(q_fracs) * k.q_max
    hot = hot % len(q_fracs)
    state = QState(q=q)
    polarity = np.where(np.arange(len(q_fracs)) == hot, 1.0, -1.0)
    counts = (polarity > 0).astype(int)
    via_single = update_tal(state, k, r, polarity)
    via_batch = update_batched(state, k, r, counts, batch_size=1)
    assert np.array_equal(via_single.q, via_batch.q)


def test_batched_balanced_fixed_point():
    for c, r in [(5, 1.0), (10, 2.0), (3, 3.0)]:
        res = solve_calibration(c, r)
        k = MemoryKernel(lam=0.9)
        q0 = QState(q=np.full(c, res.x_star * k.q_max))
        q1 = update_batched(q0, k, r, np.full(c, 4), batch_size=4 * c)
        assert np.abs(q1.q - q0.q).max() < 1e-9


def test_batched_per_class_priors_reach_their_own_fixed_points():
    # non-uniform batch composition: each class settles at the root of
    # (1 - p_k) x^r + x - p_k for its own prior p_k
    from talcil.calibration import _solve_x_star

    counts = np.array([1, 3, 6, 10])  # priors 0.05, 0.15, 0.3, 0.5
    n = counts.sum()
    k = MemoryKernel(lam=0.95)
    st = QState.zeros(4)
    for _ in range(3000):
        st = update_batched(st, k, 2.0, counts, batch_size=n)
    for i, c in enumerate(counts):
        x_expected, _ = _solve_x_star(c / n, 2.0)
        assert st.q[i] / k.q_max == pytest.approx(x_expected, abs=1e-10)


def test_batched_rejects_empty_batch_and_bad_counts():
    st = QState.zeros(2)
    k = MemoryKernel(lam=0.9)
    with pytest.raises(DomainError):
        update_batched(st, k, 1.0, [0, 0], batch_size=0)
    with pytest.raises(DomainError):
        update_batched(st, k, 1.0, [3, 0], batch_size=2)
    with pytest.raises(DomainError):
        update_batched(st, k, 1.0, [-1, 1], batch_size=2)
    with pytest.raises(DomainError):
        update_batched(st, k, 1.0, [1, 1, 1], batch_size=3)


# ---------------------------------------------------------------------------
# QState bookkeeping
# ---------------------------------------------------------------------------


def test_qstate_starts_at_zero_and_grows_with_zeros():
    st = QState.zeros(3)
    assert st.q.tolist() == [0.0, 0.0, 0.0]
    st = update_tal(st, MemoryKernel(lam=0.9), 1.0, [1.0, -1.0, -1.0])
    grown = st.append_classes(2)
    assert grown.class_count == 5
    assert grown.q[3] == 0.0 and grown.q[4] == 0.0
    assert grown.step == st.step
    with pytest.raises(DomainError):
        st.append_classes(-1)
    with pytest.raises(DomainError):
        QState.zeros(0)


def test_batched_exploratory_small_r_clamps_and_warns():
    k = MemoryKernel(lam=0.99)
    st = QState(q=np.array([1e-4 * k.q_max, 0.5]))
    with pytest.warns(RuntimeWarning):
        st = update_batched(st, k, 0.2, [0, 0], batch_size=8, strict=False)
    assert st.q[0] == 0.0
    assert st.q[1] >= 0.0


def test_updates_leave_input_state_untouched():
    st = QState(q=np.array([0.25, 0.5]))
    before = st.q.copy()
    update_tal(st, MemoryKernel(lam=0.9), 1.0, [1.0, -1.0])
    update_plain(st, MemoryKernel(lam=0.9), [1.0, -1.0])
    update_batched(st, MemoryKernel(lam=0.9), 1.0, [1, 0], batch_size=2)
    assert np.array_equal(st.q, before)
    assert st.step == 0
