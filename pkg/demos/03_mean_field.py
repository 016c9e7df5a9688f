"""
Nested ensembles and the mean-field limit
=========================================

Draw nested ensembles of size N and 2N on a shared noise path and measure the
worst-in-time squared Wasserstein gap between them.
"""

import sys

from stochflock.experiments import NDoubling, StudySpec, study_meanfield
from stochflock.reference import meanfield_study

if "--full" in sys.argv:
    spec = meanfield_study()
else:
    ref = meanfield_study(seeds=tuple(range(8)))
    spec = StudySpec(ref.base, NDoubling((32, 64, 128)), ref.seeds)
report = study_meanfield(spec)

print(f"{'N':>6} {'2N':>6} {'sup_t W2^2':>12} {'SE':>10}")
for row in report.tables["gaps"]:
    print(f"{row['N']:>6} {2 * row['N']:>6} {row['sup_W2sq_mean']:>12.4e} {row['sup_W2sq_se']:>10.2e}")

# Each doubling should shrink the gap by several paired standard errors.
for v in report.verdicts:
    print(v.line())
