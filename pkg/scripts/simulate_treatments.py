"""Simulate every treatment arm with noisy subjects and print a summary table."""
import argparse

from recdesign.replication import treatment_table

ap = argparse.ArgumentParser()
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--n-subjects", type=int, default=1000)
ap.add_argument("--threads", type=int, default=1)
args = ap.parse_args()

print(f"{'treatment':<22}{'optimal %':>12}{'hire %':>12}{'deviated %':>12}")
for name, row in treatment_table(args.seed, args.n_subjects, args.threads).items():
    s = row["simulated"]
    dev = "-" if s["deviated_pct"] is None else f"{s['deviated_pct']:.1f}"
    print(f"{name:<22}{s['optimal_pct']:>8.1f}±{s['optimal_se']:<3.1f}{s['hire_pct']:>8.1f}±{s['hire_se']:<3.1f}{dev:>12}")
