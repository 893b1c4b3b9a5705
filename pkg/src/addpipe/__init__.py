"""addpipe: data pipeline for instruction-based object addition.

Builds removal-pair training data from detection datasets, plans rational
category additions with long-tail-aware sampling, pseudo-annotates generated
images through a grounding backend, and schedules real/synthetic training
batches. All neural models live behind pluggable backend contracts with
deterministic stubs for offline runs.
"""

__version__ = "0.1.0"
