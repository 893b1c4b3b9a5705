"""Pipeline CLI: build-removal, plan, generate, annotate, mix, metrics, stats.

Stages communicate exclusively through files, so each one is re-runnable on
its own and the whole chain composes without manual edits. Exit code 0 on
success; failures print a stage-tagged diagnostic and exit nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from . import annotate as annotate_mod
from . import coco, instructions, metrics as metrics_mod, mixing, removal, sampling
from .backends import (
    BackendSet,
    RemoteBackend,
    StubEditor,
    StubEmbedder,
    StubGrounder,
    StubInpainter,
)
from .config import PipelineConfig, load_config
from .errors import (
    AddPipeError,
    ConfigError,
    NoAddedObjectsError,
    NoInstancesError,
    ParseError,
)
from .seeding import derive_seed


def make_backends(cfg: PipelineConfig) -> BackendSet:
    if cfg.backend.startswith("remote:"):
        remote = RemoteBackend(cfg.backend[len("remote:") :])
        return BackendSet(inpainter=remote, grounder=remote, embedder=remote, editor=remote)
    grounder = (
        StubGrounder.from_file(cfg.ground_fixtures) if cfg.ground_fixtures else StubGrounder()
    )
    return BackendSet(
        inpainter=StubInpainter(),
        grounder=grounder,
        embedder=StubEmbedder(dim=cfg.embed_dim),
        editor=StubEditor(),
    )


def _read_image(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def _load_dataset(cfg: PipelineConfig) -> coco.DatasetIndex:
    return coco.load_dataset(cfg.annotations, taxonomy_path=cfg.taxonomy)


def _bank(cfg: PipelineConfig):
    return instructions.load_template_bank(cfg.template_bank)


def cmd_build_removal(cfg: PipelineConfig) -> Path:
    ds = _load_dataset(cfg)
    bank = _bank(cfg)
    backends = make_backends(cfg)
    rc = cfg.removal
    out_dir = cfg.output_root / "removal"
    image_ids = sorted(ds.image_by_id)
    if rc.num_images is not None:
        image_ids = image_ids[: rc.num_images]
    pairs = []
    for image_id in image_ids:
        try:
            jobs = removal.select_removal_jobs(
                ds,
                image_id,
                max_instances=rc.max_instances,
                rng_seed=cfg.seed,
                dilation_radius=rc.dilation_radius,
                max_area_fraction=rc.max_area_fraction,
            )
        except NoInstancesError:
            continue
        pixels = _read_image(cfg.images_dir / ds.image_by_id[image_id].file_name)
        for job_idx, job in enumerate(jobs):
            mask = removal.prepare_mask(job, ds)
            categories = [
                ds.category_by_id[a.category_id].name
                for a in ds.annotations_by_image[image_id]
                if a.id in job.target_instances
            ]
            seed = derive_seed(cfg.seed, image_id, job_idx, "removal-instruction")
            instruction = instructions.render_from_bank(
                instructions.phrases_from_categories(categories), bank, seed
            )
            pairs.append(
                removal.build_pair(
                    job,
                    pixels,
                    mask,
                    backends.inpainter,
                    instruction,
                    ds=ds,
                    provenance={"seed": seed, "source": str(cfg.annotations)},
                    long_side_limit=rc.long_side_limit,
                )
            )
    manifest = removal.export_removal_dataset(pairs, out_dir)
    _write_stage_echo(cfg, out_dir / "config.json")
    return manifest


def cmd_plan(cfg: PipelineConfig) -> Path:
    ds = _load_dataset(cfg)
    if cfg.sampler.use_super_label_filter and all(
        cat.super_category == "unspecified" for cat in ds.categories
    ):
        raise ConfigError(
            "super-label filter enabled but the dataset has no super-categories; "
            "provide a --taxonomy sidecar"
        )
    entries = sampling.plan_additions(ds, cfg.sampler)
    out_dir = cfg.output_root / "plan"
    out_dir.mkdir(parents=True, exist_ok=True)
    plan_path = out_dir / "plan.jsonl"
    sampling.write_plan(entries, cfg.sampler, plan_path)
    _write_stage_echo(cfg, out_dir / "config.json")
    return plan_path


def cmd_generate(cfg: PipelineConfig, plan_path) -> Path:
    ds = _load_dataset(cfg)
    bank = _bank(cfg)
    backends = make_backends(cfg)
    _, entries = sampling.read_plan(plan_path)
    out_dir = cfg.output_root / "generated"
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    lines = [
        json.dumps(
            {
                "schema": "generated_images/v1",
                "seed": cfg.seed,
                "steps": cfg.generate.steps,
                "plan": str(plan_path),
            }
        )
    ]
    for idx, entry in enumerate(entries):
        record = ds.image_by_id[entry.image_id]
        pixels = _read_image(cfg.images_dir / record.file_name)
        names = [ds.category_by_id[c].name for c in entry.categories]
        instruction = instructions.render_from_bank(
            instructions.phrases_from_categories(names), bank, entry.instruction_seed
        )
        generated = backends.editor.edit(
            pixels, instruction, steps=cfg.generate.steps, seed=entry.instruction_seed
        )
        rel = f"images/gen_{idx:06d}_{entry.image_id}.png"
        Image.fromarray(np.asarray(generated)).save(out_dir / rel)
        lines.append(
            json.dumps(
                {
                    "generated": rel,
                    "image_id": entry.image_id,
                    "categories": list(entry.categories),
                    "instruction": instruction,
                    "seed": entry.instruction_seed,
                    "backend_id": getattr(backends.editor, "backend_id", "unknown"),
                }
            )
        )
    manifest = out_dir / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    _write_stage_echo(cfg, out_dir / "config.json")
    return manifest


def cmd_annotate(cfg: PipelineConfig, generated_manifest) -> Path:
    ds = _load_dataset(cfg)
    backends = make_backends(cfg)
    manifest_path = Path(generated_manifest)
    lines = manifest_path.read_text().splitlines()
    header = json.loads(lines[0])
    if header.get("schema") != "generated_images/v1":
        raise ConfigError(f"{manifest_path}: not a generated-image manifest")
    base_dir = manifest_path.parent
    records = []
    dropped = 0
    for line in lines[1:]:
        if not line.strip():
            continue
        rec = json.loads(line)
        image = _read_image(base_dir / rec["generated"])
        grounded = annotate_mod.ground_added(
            image,
            rec["categories"],
            ds,
            backends.grounder,
            threshold=cfg.annotate.score_threshold,
            max_boxes_per_query=cfg.annotate.max_boxes_per_query,
            fixture_key=rec["generated"],
        )
        source_image = ds.image_by_id[rec["image_id"]]
        try:
            records.append(
                annotate_mod.merge_record(
                    source_image,
                    list(ds.annotations_by_image[rec["image_id"]]),
                    grounded,
                    base_dir / rec["generated"],
                    metadata={
                        "instruction": rec["instruction"],
                        "seed": rec["seed"],
                        "backend_id": rec.get("backend_id", "unknown"),
                    },
                )
            )
        except NoAddedObjectsError:
            dropped += 1
    out_dir = cfg.output_root / "synthetic"
    dataset_path = annotate_mod.emit_synthetic_dataset(records, list(ds.categories), out_dir)
    summary = {"kept": len(records), "dropped": dropped, "seed": cfg.seed}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=1))
    _write_stage_echo(cfg, out_dir / "config.json")
    return dataset_path


def cmd_mix(cfg: PipelineConfig) -> Path:
    real_pool = cfg.mix.real_pool
    if real_pool is None:
        real_pool = len(_load_dataset(cfg).images)
    synth_pool = cfg.mix.synth_pool
    if synth_pool is None:
        synth_path = cfg.output_root / "synthetic" / "annotations.json"
        if not synth_path.exists():
            raise ConfigError(
                f"mix.synth_pool unset and no synthetic dataset at {synth_path}"
            )
        synth_pool = len(coco.load_dataset(synth_path).images)
    plan = mixing.build_plan(cfg.mix.to_mix_config(cfg.seed), real_pool, synth_pool)
    out_dir = cfg.output_root / "mix"
    out_dir.mkdir(parents=True, exist_ok=True)
    plan_path = out_dir / "batch_plan.jsonl"
    mixing.write_plan(plan, plan_path)
    _write_stage_echo(cfg, out_dir / "config.json")
    return plan_path


def cmd_metrics(cfg: PipelineConfig, pairs_file) -> Path:
    backends = make_backends(cfg)
    pairs_path = Path(pairs_file)
    base_dir = pairs_path.parent
    pairs = []
    for lineno, line in enumerate(pairs_path.read_text().splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        try:
            rec = json.loads(line)
            embeddings = {
                key: metrics_mod.read_vector_file(base_dir / rec[f"{key}_vec"])
                for key in ("generated_clip", "reference_clip", "generated_dino",
                            "reference_dino", "text")
                if rec.get(f"{key}_vec")
            }
            pairs.append(
                metrics_mod.EvalPair(
                    generated=_read_image(base_dir / rec["generated"]),
                    reference=_read_image(base_dir / rec["reference"]),
                    instruction=rec.get("instruction", ""),
                    objects=tuple(rec["objects"]) if rec.get("objects") else None,
                    embeddings=embeddings or None,
                )
            )
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ParseError(f"{pairs_path}:{lineno}: bad pair record ({exc})") from exc
    if not pairs:
        raise ConfigError(f"{pairs_path}: no evaluation pairs found")
    report = metrics_mod.evaluate_pairs(
        pairs, backends.embedder, text_source=cfg.metrics.text_source
    )
    out_dir = cfg.output_root / "metrics"
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "report.txt"
    metrics_mod.write_report(report, report_path)
    _write_stage_echo(cfg, out_dir / "config.json")
    return report_path


def cmd_stats(cfg: PipelineConfig, before_path, after_paths) -> Path:
    before = coco.load_dataset(before_path, taxonomy_path=cfg.taxonomy)
    before_counts = coco.category_frequencies(before)
    after_counts = dict.fromkeys(before_counts, 0)
    for after_path in after_paths:
        after = coco.load_dataset(after_path, taxonomy_path=cfg.taxonomy)
        for cat_id, count in coco.category_frequencies(after).items():
            after_counts[cat_id] = after_counts.get(cat_id, 0) + count
    stats = coco.growth_from_counts(before_counts, after_counts, before.category_by_id)
    out_dir = cfg.output_root / "stats"
    out_dir.mkdir(parents=True, exist_ok=True)
    report_path = out_dir / "growth.tsv"
    lines = ["category_id\tname\tcount_before\tcount_after\tgrowth_rate"]
    for s in stats:
        rate = "new" if s.rate is None else f"{s.rate:.6g}"
        lines.append(f"{s.category_id}\t{s.name}\t{s.count_before}\t{s.count_after}\t{rate}")
    report_path.write_text("\n".join(lines) + "\n")
    _write_stage_echo(cfg, out_dir / "config.json")
    return report_path


def _write_stage_echo(cfg: PipelineConfig, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg.echo(), indent=1, sort_keys=True))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="addpipe", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="pipeline config file (YAML)")
        p.add_argument("--seed", type=int, default=None, help="override the global seed")
        p.add_argument("--backend", default=None, help="stub | remote:<url>")
        p.add_argument("--output-root", default=None, help="override the output directory")

    common(sub.add_parser("build-removal", help="construct removal pairs"))
    common(sub.add_parser("plan", help="plan category additions"))
    p = sub.add_parser("generate", help="generate edited images from a plan")
    common(p)
    p.add_argument("--plan", required=True)
    p = sub.add_parser("annotate", help="ground and merge generated images")
    common(p)
    p.add_argument("--manifest", required=True)
    common(sub.add_parser("mix", help="build a real/synthetic batch plan"))
    p = sub.add_parser("metrics", help="evaluate editing metrics over pairs")
    common(p)
    p.add_argument("--pairs", required=True)
    p = sub.add_parser("stats", help="per-category growth report")
    common(p)
    p.add_argument("--before", required=True)
    p.add_argument("--after", required=True, action="append")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    stage = args.command
    try:
        cfg = load_config(
            args.config,
            overrides={
                "seed": args.seed,
                "backend": args.backend,
                "output_root": args.output_root,
            },
        )
        if stage == "build-removal":
            out = cmd_build_removal(cfg)
        elif stage == "plan":
            out = cmd_plan(cfg)
        elif stage == "generate":
            out = cmd_generate(cfg, args.plan)
        elif stage == "annotate":
            out = cmd_annotate(cfg, args.manifest)
        elif stage == "mix":
            out = cmd_mix(cfg)
        elif stage == "metrics":
            out = cmd_metrics(cfg, args.pairs)
        else:
            out = cmd_stats(cfg, args.before, args.after)
    except AddPipeError as exc:
        print(f"[{stage}] error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
