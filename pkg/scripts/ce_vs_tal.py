#!/usr/bin/env python3
"""Paired desk-scale comparison: plain cross-entropy vs the adjusted loss.

For each seed, trains the same synthetic 5-task problem twice (same data,
same shuffles) and reports final accuracy, per-task mean accuracy, and
the rank correlation between class age and (precision - recall) -- the
temporal-imbalance signature the adjusted loss is supposed to flatten.

Run:
    python scripts/ce_vs_tal.py [--seeds 5] [--lam 0.995] [--r 1.0]
"""

import argparse

import numpy as np

from talcil import make_gaussian_tasks, train_incremental
from talcil.metrics import PerClassMetrics, asymmetry_index
from talcil.sim import class_ages, fresh_state


def run(seed, kind, lam, r):
    dataset, schedule = make_gaussian_tasks(
        10, 16, 5, 100, 2.5, seed, test_per_class=100, replay_per_old_class=20
    )
    state = fresh_state(
        kind, 16, lam=lam, r=r, lr=0.1, epochs_per_task=20, batch_size=32, seed=seed
    )
    report = train_incremental(state, dataset, schedule)
    final = [row for row in report.per_class if row.task_id == 4]
    metrics = PerClassMetrics(
        precision=np.array([row.precision for row in final]),
        recall=np.array([row.recall for row in final]),
        support=np.full(len(final), 100),
        precision_defined=np.array([row.precision_defined for row in final]),
        recall_defined=np.full(len(final), True),
    )
    corr = asymmetry_index(metrics, class_ages(schedule)).age_correlation
    return report.a_mean, report.a_last, corr


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--lam", type=float, default=0.995)
    parser.add_argument("--r", type=float, default=1.0)
    args = parser.parse_args()

    results = {"ce": [], "tal": []}
    print(f"{'seed':>4}  {'loss':<4} {'a_mean':>7} {'a_last':>7} {'age corr':>9}")
    for seed in range(args.seeds):
        for kind in ("ce", "tal"):
            a_mean, a_last, corr = run(seed, kind, args.lam, args.r)
            results[kind].append((a_mean, a_last, corr))
            print(f"{seed:>4}  {kind:<4} {a_mean:7.4f} {a_last:7.4f} {corr:+9.3f}")

    print("-" * 40)
    for kind in ("ce", "tal"):
        arr = np.array(results[kind])
        print(
            f"{kind:>4} mean: a_mean={arr[:, 0].mean():.4f}+-{arr[:, 0].std():.4f}  "
            f"a_last={arr[:, 1].mean():.4f}+-{arr[:, 1].std():.4f}  "
            f"|age corr|={np.abs(arr[:, 2]).mean():.3f}"
        )
    delta = np.array(results["tal"])[:, 1] - np.array(results["ce"])[:, 1]
    print(f"paired a_last improvement: {delta.mean():+.4f} (wins {np.sum(delta > 0)}/{len(delta)})")


if __name__ == "__main__":
    main()
