"""emogap: cross-modal emotion-mismatch features for depression screening.

A small numpy-backed library implementing, end to end at desk scale:
transformer aggregation of acoustic/textual feature sequences, a
cross-attention emotion-consistency network whose representations feed a
severity classifier through configurable fusion, joint incremental training
on a reverse-mode autodiff core, and a speaker-disjoint cross-validation
harness driven by a synthetic corpus with a known Bayes oracle.
"""

__version__ = "0.1.0"
