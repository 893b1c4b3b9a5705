"""Model registry: which adapter serves each request kind."""

from __future__ import annotations

import importlib
import threading
from dataclasses import dataclass, field

KINDS = ("inpaint", "ground", "embed", "edit")


@dataclass
class ModelEntry:
    kind: str
    adapter: object
    impl_id: str
    device: str = "cpu"
    weights: str | None = None
    max_concurrency: int = 2
    _slots: threading.Semaphore = field(init=False, repr=False)

    def __post_init__(self):
        self._slots = threading.Semaphore(self.max_concurrency)

    def acquire(self):
        return self._slots


class ModelRegistry:
    """kind -> loaded adapter, with health reporting."""

    def __init__(self):
        self._entries: dict[str, ModelEntry] = {}

    def register(self, kind: str, adapter, device: str = "cpu", weights: str | None = None,
                 max_concurrency: int = 2) -> None:
        if kind not in KINDS:
            raise ValueError(f"unknown model kind {kind!r}")
        impl_id = getattr(adapter, "impl_id", type(adapter).__name__)
        self._entries[kind] = ModelEntry(
            kind=kind,
            adapter=adapter,
            impl_id=impl_id,
            device=device,
            weights=weights,
            max_concurrency=max_concurrency,
        )

    def get(self, kind: str) -> ModelEntry | None:
        return self._entries.get(kind)

    def missing_kinds(self) -> list[str]:
        return [k for k in KINDS if k not in self._entries]

    def health(self) -> dict:
        missing = self.missing_kinds()
        return {
            "status": "ok" if not missing else "unhealthy",
            "missing": missing,
            "models": {
                kind: {
                    "impl": entry.impl_id,
                    "device": entry.device,
                    "weights": entry.weights,
                }
                for kind, entry in sorted(self._entries.items())
            },
        }


def load_adapter(spec: str, options: dict | None = None):
    """Instantiate an adapter from a "package.module:ClassName" path."""
    module_name, _, attr = spec.partition(":")
    if not attr:
        raise ValueError(f"adapter spec {spec!r} must look like module:ClassName")
    cls = getattr(importlib.import_module(module_name), attr)
    return cls(**(options or {}))


def registry_from_config(models: dict) -> ModelRegistry:
    """Build a registry from the config's `models` mapping.

    Each entry: {impl: "module:Class", device: ..., weights: ...,
    options: {...}, max_concurrency: ...}. Kinds not listed stay unserved.
    """
    registry = ModelRegistry()
    for kind, entry in (models or {}).items():
        adapter = load_adapter(entry["impl"], entry.get("options"))
        registry.register(
            kind,
            adapter,
            device=entry.get("device", "cpu"),
            weights=entry.get("weights"),
            max_concurrency=int(entry.get("max_concurrency", 2)),
        )
    return registry


def reference_registry() -> ModelRegistry:
    """Registry serving all four kinds with the in-tree reference adapters."""
    from .adapters import REFERENCE_ADAPTERS

    registry = ModelRegistry()
    for kind, cls in REFERENCE_ADAPTERS.items():
        registry.register(kind, cls())
    return registry
