"""modelbridge: HTTP service hosting the pipeline's model backends.

Exposes POST /v1/inpaint, /v1/ground, /v1/embed, /v1/edit plus /v1/health.
Model implementations are pluggable adapters loaded from the service config;
reference adapters (deterministic, CPU-only) ship in-tree so the service runs
without any model weights.
"""

__version__ = "0.1.0"
