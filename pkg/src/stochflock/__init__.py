"""Stochastic Cucker-Smale / Motsch-Tadmor flocking under common noise.

Particle simulation of the regularized N-particle system, plus the
empirical-measure diagnostics used to study its mean-field behavior.
"""
import numba as _numba

# the bundled TBB is too old; prefer OpenMP and fall back to the workqueue
_numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

__version__ = "0.1.0"
