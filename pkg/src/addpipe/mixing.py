"""Real/synthetic batch scheduling for detector training.

Two strategies: batch_sampling draws each whole batch from one source
(so mask losses never mix gated and ungated samples), normal_mixture draws
every slot independently. Plans are deterministic, serializable, and
replayable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EmptyPoolError, ParseError
from .seeding import derive_rng

STRATEGIES = ("batch_sampling", "normal_mixture")
REAL, SYNTHETIC = "real", "synthetic"


@dataclass(frozen=True)
class MixConfig:
    ratio: float = 0.2  # synthetic share; 0.2 performed best in ablation
    strategy: str = "batch_sampling"
    batch_size: int = 8
    total_batches: int = 90_000
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.ratio <= 1.0):
            raise ValueError(f"ratio must be in [0, 1], got {self.ratio}")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.batch_size < 1 or self.total_batches < 1:
            raise ValueError("batch_size and total_batches must be positive")


@dataclass(frozen=True)
class BatchDescriptor:
    index: int
    source: str | None  # set under batch_sampling
    slot_sources: tuple[str, ...] | None  # set under normal_mixture
    sample_ids: tuple[int, ...]


@dataclass
class BatchPlan:
    config: MixConfig
    batches: list[BatchDescriptor]


def next_batch_source(cfg: MixConfig, rng: np.random.Generator) -> str:
    """One source draw: synthetic with probability cfg.ratio."""
    return SYNTHETIC if rng.random() < cfg.ratio else REAL


class _PoolStream:
    """Uniform ids without replacement, reshuffled each epoch."""

    def __init__(self, size: int, rng: np.random.Generator):
        self.size = size
        self.rng = rng
        self._order: list[int] = []

    def take(self) -> int:
        if not self._order:
            self._order = list(self.rng.permutation(self.size))
        return int(self._order.pop())


def build_plan(cfg: MixConfig, real_pool_size: int, synth_pool_size: int) -> BatchPlan:
    """Deterministic batch schedule over the two pools."""
    if cfg.ratio > 0.0 and synth_pool_size < 1:
        raise EmptyPoolError("synthetic pool is empty but ratio > 0")
    if cfg.ratio < 1.0 and real_pool_size < 1:
        raise EmptyPoolError("real pool is empty but ratio < 1")
    source_rng = derive_rng(cfg.seed, "source")
    pools = {
        REAL: _PoolStream(real_pool_size, derive_rng(cfg.seed, "pool", REAL)),
        SYNTHETIC: _PoolStream(synth_pool_size, derive_rng(cfg.seed, "pool", SYNTHETIC)),
    }
    batches = []
    for index in range(cfg.total_batches):
        if cfg.strategy == "batch_sampling":
            source = next_batch_source(cfg, source_rng)
            ids = tuple(pools[source].take() for _ in range(cfg.batch_size))
            batches.append(
                BatchDescriptor(index=index, source=source, slot_sources=None, sample_ids=ids)
            )
        else:
            slots = tuple(next_batch_source(cfg, source_rng) for _ in range(cfg.batch_size))
            ids = tuple(pools[s].take() for s in slots)
            batches.append(
                BatchDescriptor(index=index, source=None, slot_sources=slots, sample_ids=ids)
            )
    return BatchPlan(config=cfg, batches=batches)


def mask_loss_gate(batch: BatchDescriptor):
    """Whether mask losses may be computed for this batch.

    Homogeneous batches gate as one bool (real -> True); mixed batches gate
    per slot.
    """
    if batch.source is not None:
        return batch.source == REAL
    return [s == REAL for s in batch.slot_sources]


def write_plan(plan: BatchPlan, path) -> None:
    cfg = plan.config
    header = {
        "schema": "batch_plan/v1",
        "ratio": cfg.ratio,
        "strategy": cfg.strategy,
        "batch_size": cfg.batch_size,
        "total_batches": cfg.total_batches,
        "seed": cfg.seed,
    }
    lines = [json.dumps(header)]
    for b in plan.batches:
        rec = {"index": b.index, "sample_ids": list(b.sample_ids)}
        if b.source is not None:
            rec["source"] = b.source
        else:
            rec["slot_sources"] = list(b.slot_sources)
        lines.append(json.dumps(rec))
    Path(path).write_text("\n".join(lines) + "\n")


def read_plan(path) -> BatchPlan:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ParseError(f"{path}: empty plan file")
    header = json.loads(lines[0])
    if header.get("schema") != "batch_plan/v1":
        raise ParseError(f"{path}: unexpected plan schema {header.get('schema')!r}")
    cfg = MixConfig(
        ratio=header["ratio"],
        strategy=header["strategy"],
        batch_size=header["batch_size"],
        total_batches=header["total_batches"],
        seed=header["seed"],
    )
    batches = []
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = json.loads(line)
        batches.append(
            BatchDescriptor(
                index=int(rec["index"]),
                source=rec.get("source"),
                slot_sources=tuple(rec["slot_sources"]) if "slot_sources" in rec else None,
                sample_ids=tuple(int(i) for i in rec["sample_ids"]),
            )
        )
    return BatchPlan(config=cfg, batches=batches)
