import math

import pytest

from addpipe.errors import EmptyPoolError
from addpipe.mixing import (
    BatchDescriptor,
    MixConfig,
    build_plan,
    mask_loss_gate,
    next_batch_source,
    read_plan,
    write_plan,
)
from addpipe.seeding import derive_rng


def test_ratio_zero_always_real():
    cfg = MixConfig(ratio=0.0, total_batches=10)
    rng = derive_rng(0)
    assert all(next_batch_source(cfg, rng) == "real" for _ in range(1000))


def test_ratio_one_always_synthetic():
    cfg = MixConfig(ratio=1.0, total_batches=10)
    rng = derive_rng(0)
    assert all(next_batch_source(cfg, rng) == "synthetic" for _ in range(1000))


def test_ratio_point_two_binomial_bound():
    cfg = MixConfig(ratio=0.2)
    rng = derive_rng(123)
    draws = 100_000
    synth = sum(next_batch_source(cfg, rng) == "synthetic" for _ in range(draws))
    tol = 3 * math.sqrt(0.2 * 0.8 / draws)  # binomial standard error
    assert abs(synth / draws - 0.2) < max(tol, 0.004)


# --- plans ------------------------------------------------------------------------

def test_batch_sampling_plan_is_homogeneous_and_replayable():
    cfg = MixConfig(ratio=0.5, strategy="batch_sampling", batch_size=4, total_batches=4, seed=0)
    plan = build_plan(cfg, real_pool_size=20, synth_pool_size=20)
    assert len(plan.batches) == 4
    for batch in plan.batches:
        assert batch.source in ("real", "synthetic")
        assert batch.slot_sources is None
        assert len(batch.sample_ids) == 4
    again = build_plan(cfg, 20, 20)
    assert again.batches == plan.batches


def test_normal_mixture_slot_rate():
    cfg = MixConfig(
        ratio=0.2, strategy="normal_mixture", batch_size=8, total_batches=10_000, seed=3
    )
    plan = build_plan(cfg, real_pool_size=100, synth_pool_size=100)
    synth_slots = [b.slot_sources.count("synthetic") for b in plan.batches]
    mean = sum(synth_slots) / len(synth_slots)
    assert mean == pytest.approx(1.6, abs=0.05)  # 8 slots * 0.2


def test_empty_pools_rejected():
    with pytest.raises(EmptyPoolError):
        build_plan(MixConfig(ratio=0.2), real_pool_size=10, synth_pool_size=0)
    with pytest.raises(EmptyPoolError):
        build_plan(MixConfig(ratio=0.2), real_pool_size=0, synth_pool_size=10)
    # degenerate ratios only need one pool
    build_plan(MixConfig(ratio=0.0, total_batches=2), real_pool_size=10, synth_pool_size=0)
    build_plan(MixConfig(ratio=1.0, total_batches=2), real_pool_size=0, synth_pool_size=10)


def test_sample_ids_stay_in_pool_and_cover_epochs():
    cfg = MixConfig(ratio=1.0, strategy="batch_sampling", batch_size=5, total_batches=4, seed=7)
    plan = build_plan(cfg, real_pool_size=1, synth_pool_size=10)
    ids = [i for b in plan.batches for i in b.sample_ids]
    assert all(0 <= i < 10 for i in ids)
    assert sorted(ids[:10]) == list(range(10))  # first epoch is a permutation
    assert sorted(ids[10:20]) == list(range(10))  # second epoch reshuffles
    assert ids[:10] != ids[10:20] or len(set(ids[:10])) == 10


def test_mask_loss_gate_semantics():
    real = BatchDescriptor(index=0, source="real", slot_sources=None, sample_ids=(1,))
    synth = BatchDescriptor(index=1, source="synthetic", slot_sources=None, sample_ids=(2,))
    mixed = BatchDescriptor(
        index=2, source=None, slot_sources=("real", "synthetic", "real"), sample_ids=(1, 2, 3)
    )
    assert mask_loss_gate(real) is True
    assert mask_loss_gate(synth) is False
    assert mask_loss_gate(mixed) == [True, False, True]


def test_plan_serialization_replays_identically(tmp_path):
    cfg = MixConfig(ratio=0.3, strategy="normal_mixture", batch_size=3, total_batches=20, seed=5)
    plan = build_plan(cfg, real_pool_size=7, synth_pool_size=5)
    path = tmp_path / "plan.jsonl"
    write_plan(plan, path)
    again = read_plan(path)
    assert again.config == cfg
    assert again.batches == plan.batches
    first = path.read_bytes()
    write_plan(again, path)
    assert path.read_bytes() == first


def test_config_validation():
    with pytest.raises(ValueError):
        MixConfig(ratio=1.5)
    with pytest.raises(ValueError):
        MixConfig(strategy="sometimes")
    with pytest.raises(ValueError):
        MixConfig(batch_size=0)
