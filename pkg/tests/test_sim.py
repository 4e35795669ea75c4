import warnings

import numpy as np
import pytest

from talcil import (
    DomainError,
    SolverError,
    TrainingError,
    ablate,
    make_gaussian_tasks,
    spearman,
    train_incremental,
)
from talcil.sim import Classifier, class_ages, fresh_state

QUICK = dict(lr=0.1, epochs_per_task=20, batch_size=32)


def small_setup(seed=0, classes=10, tasks=5, per_class=100, sep=2.5, replay=20):
    return make_gaussian_tasks(
        classes, 16, tasks, per_class, sep, seed,
        test_per_class=100, replay_per_old_class=replay,
    )


# ---------------------------------------------------------------------------
# dataset generation
# ---------------------------------------------------------------------------


def test_dataset_is_bit_identical_for_same_seed():
    a, _ = small_setup(seed=5)
    b, _ = small_setup(seed=5)
    assert np.array_equal(a.class_means, b.class_means)
    assert np.array_equal(a.train, b.train)
    assert np.array_equal(a.test, b.test)
    c, _ = small_setup(seed=6)
    assert not np.array_equal(a.train, c.train)


def test_dataset_shapes_and_separation():
    ds, schedule = small_setup(seed=1, classes=10, tasks=5, per_class=30)
    assert ds.train.shape == (10, 30, 16)
    assert ds.test.shape == (10, 100, 16)
    dists = np.linalg.norm(
        ds.class_means[:, None, :] - ds.class_means[None, :, :], axis=2
    )
    np.fill_diagonal(dists, np.inf)
    assert dists.min() >= 2.5
    assert len(schedule.tasks) == 5
    assert schedule.tasks[0].new_class_ids == (0, 1)


def test_dataset_parameter_validation():
    with pytest.raises(DomainError):
        make_gaussian_tasks(10, 16, 3, 50, 2.5, 0)  # 10 % 3 != 0
    with pytest.raises(DomainError):
        make_gaussian_tasks(10, 16, 5, 50, -1.0, 0)
    with pytest.raises(SolverError):
        # 20 points on a radius-5 circle cannot be pairwise 5 apart
        make_gaussian_tasks(20, 2, 2, 10, 5.0, 0)


def test_widely_separated_classes_are_jointly_learnable():
    ds, schedule = make_gaussian_tasks(
        10, 16, 1, 100, 6.0, 0, test_per_class=100, replay_per_old_class=0
    )
    report = train_incremental(fresh_state("ce", 16, seed=0, **QUICK), ds, schedule)
    assert report.a_last > 0.95


# ---------------------------------------------------------------------------
# classifier
# ---------------------------------------------------------------------------


def test_classifier_head_grows_with_zero_columns():
    clf = Classifier(dim=4)
    clf.add_classes(2)
    x = np.ones((3, 4))
    assert clf.logits(x).shape == (3, 2)
    assert np.all(clf.logits(x) == 0.0)
    clf.w += 1.0
    clf.add_classes(1)
    z = clf.logits(x)
    assert z.shape == (3, 3)
    assert np.all(z[:, 2] == 0.0)  # new column starts silent
    assert np.all(z[:, :2] == 4.0)


def test_hidden_layer_classifier_trains():
    ds, schedule = make_gaussian_tasks(
        4, 8, 1, 60, 4.0, 0, test_per_class=50, replay_per_old_class=0
    )
    report = train_incremental(
        fresh_state("ce", 8, seed=0, hidden=32, **QUICK), ds, schedule
    )
    assert report.a_last > 0.9


def test_hidden_layer_incremental_run_grows_head_only():
    ds, schedule = make_gaussian_tasks(
        4, 8, 2, 40, 3.0, 0, test_per_class=30, replay_per_old_class=5
    )
    state = fresh_state("tal", 8, seed=0, hidden=16, lr=0.1, epochs_per_task=15, batch_size=16)
    report = train_incremental(state, ds, schedule)
    assert state.classifier.w1.shape == (8, 16)
    assert state.classifier.w.shape == (16, 4)
    assert report.overall_accuracy[-1] > 0.5  # well above the 0.25 chance level


# ---------------------------------------------------------------------------
# incremental training
# ---------------------------------------------------------------------------


def test_single_task_adjusted_and_plain_losses_agree_closely():
    ds, schedule = make_gaussian_tasks(
        10, 16, 1, 100, 2.5, 0, test_per_class=100, replay_per_old_class=0
    )
    acc = {}
    for kind in ("ce", "tal"):
        report = train_incremental(fresh_state(kind, 16, seed=0, **QUICK), ds, schedule)
        acc[kind] = report.a_last
    assert abs(acc["tal"] - acc["ce"]) < 0.02


def test_accuracy_matrix_is_lower_triangular():
    ds, schedule = small_setup(seed=0, per_class=40)
    report = train_incremental(fresh_state("ce", 16, seed=0, **QUICK), ds, schedule)
    acc = report.accuracy_matrix
    for t in range(5):
        for u in range(5):
            if u <= t:
                assert np.isfinite(acc[t, u])
            else:
                assert np.isnan(acc[t, u])
    # overall accuracy over seen classes equals the row mean on balanced tests
    for t in range(5):
        assert report.overall_accuracy[t] == pytest.approx(
            np.nanmean(acc[t, : t + 1]), abs=1e-12
        )
    assert report.a_last == report.overall_accuracy[-1]
    assert report.a_mean == pytest.approx(report.overall_accuracy.mean())


def test_ce_run_shows_age_skew_and_positive_q_recall_association():
    corr_q_recall = []
    early_skew = 0
    for seed in range(3):
        ds, schedule = small_setup(seed=seed)
        report = train_incremental(fresh_state("ce", 16, seed=seed, **QUICK), ds, schedule)
        final = [row for row in report.per_class if row.task_id == 4]
        recall = np.array([row.recall for row in final])
        precision = np.array([row.precision for row in final])
        q = np.array([row.q_value for row in final])
        corr_q_recall.append(spearman(q, recall))
        if recall[:2].mean() < np.nanmean(precision[:2]):
            early_skew += 1
    assert np.mean(corr_q_recall) > 0.2
    assert early_skew >= 2


def test_adjusted_loss_beats_plain_on_paired_seeds():
    wins = 0
    for seed in range(2):
        ds, schedule = small_setup(seed=seed)
        a_last = {}
        for kind in ("ce", "tal"):
            report = train_incremental(
                fresh_state(kind, 16, seed=seed, lam=0.995, r=1.0, **QUICK), ds, schedule
            )
            a_last[kind] = report.a_last
        wins += a_last["tal"] > a_last["ce"]
    assert wins == 2


def test_reports_are_reproducible():
    ds, schedule = small_setup(seed=3, per_class=40)
    a = train_incremental(fresh_state("tal", 16, seed=3, **QUICK), ds, schedule)
    b = train_incremental(fresh_state("tal", 16, seed=3, **QUICK), ds, schedule)
    assert np.array_equal(a.accuracy_matrix, b.accuracy_matrix, equal_nan=True)
    assert a.per_class == b.per_class
    assert a.a_mean == b.a_mean and a.a_last == b.a_last
    assert all(
        s1 == s2 and np.array_equal(q1, q2)
        for (s1, q1), (s2, q2) in zip(a.q_snapshots, b.q_snapshots)
    )


def test_tracker_tracks_classifier_growth():
    ds, schedule = small_setup(seed=0, per_class=30)
    report = train_incremental(fresh_state("tal", 16, seed=0, **QUICK), ds, schedule)
    # after task t there are 2*(t+1) classes, all with a tracker entry
    for t, (_, q) in enumerate(report.q_snapshots):
        assert q.shape == (2 * (t + 1),)


def test_divergent_run_raises_training_error_with_step():
    ds, schedule = make_gaussian_tasks(
        4, 8, 2, 20, 2.5, 0, test_per_class=10, replay_per_old_class=2
    )
    state = fresh_state("ce", 8, lr=1e308, epochs_per_task=3, seed=0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(TrainingError) as err:
            train_incremental(state, ds, schedule)
    assert err.value.step is not None


def test_event_sink_sees_every_step():
    ds, schedule = make_gaussian_tasks(
        4, 8, 2, 24, 2.5, 0, test_per_class=10, replay_per_old_class=4
    )
    events = []
    train_incremental(
        fresh_state("ce", 8, seed=0, lr=0.1, epochs_per_task=2, batch_size=16),
        ds,
        schedule,
        event_sink=events.append,
    )
    # task 0: 48 samples -> 3 batches/epoch; task 1: 48+8 -> 4 batches/epoch
    assert len(events) == 2 * 3 + 2 * 4
    assert [e["step"] for e in events] == list(range(len(events)))
    assert all(np.isfinite(e["loss"]) for e in events)


def test_forgetting_curve_directions():
    # the first task's accuracy decays over subsequent tasks under plain CE,
    # and the adjusted loss ends it higher (mean over 5 paired seeds)
    from talcil import forgetting_curve

    finals = {"ce": [], "tal": []}
    initial_drop = 0
    for seed in range(5):
        ds, schedule = small_setup(seed=seed)
        for kind in ("ce", "tal"):
            report = train_incremental(
                fresh_state(kind, 16, seed=seed, **QUICK), ds, schedule
            )
            task0 = forgetting_curve(report.accuracy_matrix)[0]
            finals[kind].append(task0[-1])
            if kind == "ce" and task0[-1] < task0[0]:
                initial_drop += 1
    assert initial_drop >= 4
    assert np.mean(finals["tal"]) > np.mean(finals["ce"])


def test_class_ages_order():
    _, schedule = small_setup()
    ages = class_ages(schedule)
    assert ages[0] == 4 and ages[1] == 4
    assert ages[8] == 0 and ages[9] == 0
    assert np.all(np.diff(ages[::2]) < 0)


# ---------------------------------------------------------------------------
# ablation grid
# ---------------------------------------------------------------------------


def test_ablation_enumerates_every_cell_with_one_baseline():
    ds, schedule = small_setup(seed=0, per_class=30)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rows = ablate(
            ds,
            schedule,
            seeds=[0, 1],
            lambdas=(0.99, 0.995),
            rs=(0.5, 1.0),
            epochs_per_task=4,
        )
    ce_rows = [r for r in rows if r["loss"] == "ce"]
    tal_rows = [r for r in rows if r["loss"] == "tal"]
    assert len(ce_rows) == 2  # one per seed: a single baseline cell
    assert len(tal_rows) == 2 * 2 * 2
    cells = {(r["lam"], r["r"]) for r in tal_rows}
    assert cells == {(0.99, 0.5), (0.99, 1.0), (0.995, 0.5), (0.995, 1.0)}


def test_steep_weighting_underperforms_linear_at_desk_scale():
    ds, schedule = small_setup(seed=0)
    rows = ablate(ds, schedule, seeds=[0, 1, 2], lambdas=(0.99,), rs=(1.0, 5.0), **QUICK)
    mean_last = {
        r: np.mean([row["a_last"] for row in rows if row["loss"] == "tal" and row["r"] == r])
        for r in (1.0, 5.0)
    }
    assert mean_last[5.0] < mean_last[1.0]
