"""
Shrinking the alignment kernel
==============================

Two counter-moving clusters with the alignment bump rescaled to radius r. As r
shrinks, u_R approaches the k-nearest-neighbor velocity average.
"""

import sys

from stochflock.experiments import StudySpec, study_sla_limit
from stochflock.reference import sla_study

ref = sla_study()
if "--full" in sys.argv:
    spec = ref
else:
    spec = StudySpec(ref.base.with_(n=2048), ref.sweep, ref.seeds)
report = study_sla_limit(spec)

print(f"{'r':>6} {'|u_R - u_knn|':>14} {'sliced W2 to previous':>22}")
for row in report.tables["sweep"]:
    prev = row["sliced_W2_to_previous_mean"]
    print(f"{row['r']:>6g} {row['u_gap_mean']:>14.4e} {'-' if prev is None else f'{prev:.4e}':>22}")

for v in report.verdicts:
    print(v.line())
