import numpy as np
import pytest

from addpipe.coco import category_frequencies
from addpipe.errors import EmptyCandidatesError
from addpipe.sampling import (
    AdditionPlanEntry,
    SamplerConfig,
    candidate_labels,
    plan_additions,
    read_plan,
    sample_label,
    write_plan,
)
from addpipe.seeding import derive_rng, derive_seed


def _cfg(**kw):
    return SamplerConfig(**kw)


# --- candidate restriction -----------------------------------------------------

def test_outdoor_only_image_restricts_to_outdoor(toy_index):
    # image 1 holds a single traffic light; an unrelated sports item must not qualify
    candidates = candidate_labels(1, toy_index, _cfg())
    names = {toy_index.category_by_id[c].name for c in candidates}
    assert names == {"traffic light", "fire hydrant"}
    assert "snowboard" not in names


def test_filter_disabled_returns_all(toy_index):
    candidates = candidate_labels(1, toy_index, _cfg(use_super_label_filter=False))
    assert candidates == {c.id for c in toy_index.categories}


def test_two_supercategory_image_takes_union(toy_index):
    # image 4: car + bicycle (vehicle) and dog (animal)
    candidates = candidate_labels(4, toy_index, _cfg())
    # brute-force union oracle over the toy taxonomy
    present_supers = {
        toy_index.category_by_id[a.category_id].super_category
        for a in toy_index.annotations_by_image[4]
    }
    expected = {
        c.id for c in toy_index.categories if c.super_category in present_supers
    }
    assert candidates == expected
    assert present_supers == {"vehicle", "animal"}


def test_empty_image_with_filter_raises(tmp_path):
    import json

    from addpipe.coco import load_dataset

    payload = {
        "images": [{"id": 1, "file_name": "a.png", "width": 8, "height": 8}],
        "annotations": [],
        "categories": [{"id": 1, "name": "dog", "supercategory": "animal"}],
    }
    path = tmp_path / "empty.json"
    path.write_text(json.dumps(payload))
    ds = load_dataset(path)
    with pytest.raises(EmptyCandidatesError):
        candidate_labels(1, ds, _cfg())
    assert candidate_labels(1, ds, _cfg(use_super_label_filter=False)) == {1}


# --- weighted draws --------------------------------------------------------------

def test_single_candidate_always_wins():
    rng = derive_rng(0)
    assert all(sample_label({7}, {7: 3}, _cfg(), rng) == 7 for _ in range(10))


def test_reciprocal_weighting_monte_carlo():
    # counts {A:1, B:3} -> P(A) = (1/1) / (1/1 + 1/3) = 0.75
    rng = derive_rng(42)
    cfg = _cfg()
    freqs = {1: 1, 2: 3}
    draws = 100_000
    hits = sum(sample_label({1, 2}, freqs, cfg, rng) == 1 for _ in range(draws))
    assert hits / draws == pytest.approx(0.75, abs=0.01)


def test_zero_frequency_candidate_gets_max_weight():
    # zero observed instances counts as frequency 1
    rng = derive_rng(3)
    cfg = _cfg()
    freqs = {1: 0, 2: 1}
    draws = 40_000
    hits = sum(sample_label({1, 2}, freqs, cfg, rng) == 1 for _ in range(draws))
    assert hits / draws == pytest.approx(0.5, abs=0.01)


def test_rare_uniform_monte_carlo():
    rng = derive_rng(17)
    cfg = _cfg(mode="lvis_rare_uniform")
    rare = {1, 2, 3, 4}
    draws = 100_000
    counts = {c: 0 for c in rare}
    for _ in range(draws):
        counts[sample_label({1, 2, 3, 4, 5}, {}, cfg, rng, rare_ids=rare)] += 1
    for c in rare:
        assert counts[c] / draws == pytest.approx(0.25, abs=0.01)
    assert 5 not in counts or counts.get(5, 0) == 0


def test_rare_uniform_fallback_when_no_rare_candidate():
    rng = derive_rng(23)
    cfg = _cfg(mode="lvis_rare_uniform")
    picked = {sample_label({10, 11}, {}, cfg, rng, rare_ids={99}) for _ in range(200)}
    assert picked == {10, 11}


def test_empty_candidates_raise():
    with pytest.raises(EmptyCandidatesError):
        sample_label(set(), {}, _cfg(), derive_rng(0))


# --- planning ---------------------------------------------------------------------

def test_plan_single_instance_range(toy_index):
    entries = plan_additions(toy_index, _cfg(rng_seed=4))
    assert len(entries) == len(toy_index.images)
    assert all(len(e.categories) == 1 for e in entries)


def test_plan_is_deterministic(toy_index):
    cfg = _cfg(instances_max=2, rng_seed=9)
    assert plan_additions(toy_index, cfg) == plan_additions(toy_index, cfg)


def test_plan_matches_straight_line_reimplementation(toy_index):
    cfg = _cfg(instances_min=1, instances_max=2, rng_seed=11)
    entries = plan_additions(toy_index, cfg)

    freqs = category_frequencies(toy_index)
    expected = []
    for image_id in sorted(toy_index.image_by_id):
        present = {
            toy_index.category_by_id[a.category_id].super_category
            for a in toy_index.annotations_by_image[image_id]
        }
        candidates = sorted(
            c.id for c in toy_index.categories if c.super_category in present
        )
        rng = derive_rng(11, image_id, 0)
        n = int(rng.integers(1, 3))
        cats = []
        for _ in range(n):
            weights = np.array([1.0 / max(freqs[c], 1) for c in candidates])
            weights /= weights.sum()
            cats.append(candidates[int(rng.choice(len(candidates), p=weights))])
        expected.append(
            AdditionPlanEntry(
                image_id=image_id,
                categories=tuple(cats),
                instruction_seed=derive_seed(11, image_id, 0, "instruction"),
            )
        )
    assert entries == expected


def test_plan_super_label_soundness(toy_index):
    cfg = _cfg(instances_max=3, rng_seed=1, passes=20)
    entries = plan_additions(toy_index, cfg)
    for entry in entries:
        supers_present = {
            toy_index.category_by_id[a.category_id].super_category
            for a in toy_index.annotations_by_image[entry.image_id]
        }
        for cat in entry.categories:
            assert toy_index.category_by_id[cat].super_category in supers_present


def test_plan_passes_and_num_images(toy_index):
    entries = plan_additions(toy_index, _cfg(rng_seed=0, passes=3, num_images=4))
    assert len(entries) == 12
    assert sorted({e.image_id for e in entries}) == [1, 2, 3, 4]


def test_plan_round_trips_through_file(toy_index, tmp_path):
    cfg = _cfg(instances_max=2, rng_seed=5)
    entries = plan_additions(toy_index, cfg)
    path = tmp_path / "plan.jsonl"
    write_plan(entries, cfg, path)
    header, again = read_plan(path)
    assert again == entries
    assert header["rng_seed"] == 5
    # byte-identical on rewrite
    first_bytes = path.read_bytes()
    write_plan(entries, cfg, path)
    assert path.read_bytes() == first_bytes


def test_bad_config_rejected():
    with pytest.raises(ValueError):
        SamplerConfig(mode="nope")
    with pytest.raises(ValueError):
        SamplerConfig(instances_min=2, instances_max=1)
