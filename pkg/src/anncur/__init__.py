"""Annotation curricula: order annotation work easy-first.

The package estimates per-instance annotation effort, orders instances so
that easier ones come first, and measures whether such orderings help.  It
ships a small text-feature kit, closed-form and boosted regressors, an
adaptive (retrain-as-you-go) curriculum loop, simulation harnesses driven
by recorded annotation times, and an HTTP service for running timed
annotation studies with consent, control blocks, and per-participant
adaptive ordering.
"""

__version__ = "0.1.0"
