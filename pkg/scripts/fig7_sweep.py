"""Print the kappa bands for the control-arm baseline next to the published band starts."""
from recdesign.core import LossSpec
from recdesign.experiment import fig7_comparison, table6_baseline
from recdesign.lfm import kappa_thresholds, mistake_stats, sweep

stats = mistake_stats(table6_baseline())
spec = LossSpec()
for b in sweep(stats, spec, 0.0, 10.0):
    print(f"{b.x}  [{b.start:7.4f}, {b.end:7.4f})  {b.rec.code}")
print()
for x in stats.support:
    print(x, kappa_thresholds(stats, spec, x))
print()
for row in fig7_comparison(stats, spec):
    flag = "  <-- differs from published value" if row["discrepancy"] else ""
    print(f"{row['x']} {row['rec']}: derived {row['derived']}, published {row['published']}{flag}")
