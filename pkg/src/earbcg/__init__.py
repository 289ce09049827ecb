"""Heartbeat-based wearer authentication from in-ear accelerometer signals.

Pipeline stages, each its own module:

- synth      : synthetic per-subject BCG recordings with interference
- wavelet    : undecimated wavelet transform with an exact inverse
- denoise    : band selection + hyperbolic shrinkage for inherent noise
- motion     : periodicity screening + adaptive RLS for sporadic noise
- disentangle: adversarially trained identity/non-identity feature split
- siamese    : metric-learning projection trained with triplet loss
- auth       : registration, threshold fitting, authentication decisions
- harness    : cohort-level evaluation, degradation studies, reporting
"""

__version__ = "0.1.0"
