"""Brute-force the optimal policies of the hiring game under each compliance / active-decision cell."""
from recdesign.core import LossSpec
from recdesign.experiment import default_population, rational_errors, table4_matrix, TREATMENTS

pop = default_population()
for cell in table4_matrix(pop, LossSpec()):
    codes = ", ".join("".join(p[x].code if p[x].code != "none" else "0" for x in p.support) for p in cell.argmin)
    print(f"{cell.compliance:>9} / {cell.active:<13} errors {25 * cell.value:5.2f}  named {cell.named:<20} "
          f"{'in' if cell.contains_named else 'NOT in'} argmin {{{codes}}}")
print()
for name, policy in TREATMENTS.items():
    print(f"{name:<20} selective-compliance rational errors: {rational_errors(pop, policy)}")
