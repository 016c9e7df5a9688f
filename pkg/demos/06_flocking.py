"""
Exponential flocking without noise
==================================

With a constant communication rate lambda and no noise the velocity variance
decays like exp(-2 lambda t). Compare the simulation with an ODE reference.
"""

import numpy as np

from stochflock.experiments import study_flocking
from stochflock.reference import flocking_study

report = study_flocking(flocking_study())
rows = report.tables["variance"]
for row in rows[:: len(rows) // 8]:
    print(f"t = {row['time']:5.2f}  variance = {row['velocity_variance']:.6e}  "
          f"exp(-2t) * v0 = {rows[0]['velocity_variance'] * np.exp(-2 * row['time']):.6e}")

print(f"fitted decay rate {report.slopes['decay_rate']:.4f}, ODE oracle {report.slopes['oracle_decay_rate']:.4f}")
for v in report.verdicts:
    print(v.line())
