"""Show where the closed-form worst-case excess and the exact per-cell adversary disagree.

A policy that recommends hire where the baseline never hires badly gains nothing from
compliance but still pays for every overridden pass; the adversary then sets the compliance
rate given no mistake to 1, while the closed form scales it by epsilon / kappa.
"""
from recdesign.core import LossSpec
from recdesign.lfm import ComplianceAssumptions, MistakeStats, XStats, adversary_excess, lfm_policy, worst_case_excess
from recdesign.policies import Policy

stats = MistakeStats({"x": XStats(p=1.0, h=0.5, m_N=0.0, m_H=0.0)})
spec = LossSpec()
a = ComplianceAssumptions(kappa=2.0, epsilon=0.5)
for code in "N0H":
    p = Policy(("x",), (Policy.from_codes(("x",), code)["x"],))
    print(f"recommend {code}: closed form {worst_case_excess(p, stats, spec, a):+.4f}  exact adversary {adversary_excess(p, stats, spec, a):+.4f}")
print("lfm:", lfm_policy(stats, spec, a.kappa).as_dict())
