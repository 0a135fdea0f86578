"""Command-line entry point exposing the pipeline stages.

Subcommands: prompts, generate, filter, amf, threshold, train-toy,
stats, toy-data. Effective settings resolve as flags > config file >
built-in defaults, and every output carries a reproducibility header
with the effective config. Exit codes: 0 success, 2 usage, 3 invalid
config, 4 unreadable input, 5 missing file, 6 transport failure,
7 other pipeline error, 1 unexpected.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from typing import Optional

import numpy as np

from . import __version__, amf, music, reporting, teacher_student, toyworld
from .backends import CacheBackend, RemoteBackend
from .dataio import (
    FileImageProvider,
    FrequencyTable,
    Manifest,
    dumps_record,
    save_prompts,
    save_pseudo_labels,
    save_rejections,
    save_scene_map,
    save_predictions,
)
from .errors import ConfigError, ParseError, TransportError, VILError
from .scenes import seed_from

SIDECAR_ENV = "VIL_SIDECAR_URL"

DEFAULTS = {
    "dataset": "hico",
    "backend": "mock",
    "seed": 0,
    "workers": os.cpu_count() or 1,
    "tau_scn": 0.9,
    "tau_det": 0.9,
    "tau_inter": 0.3,
    "tau_nms": 0.7,
    "kappa": 1.5,
    "alpha": 0.9996,
    "epochs": 10,
    "pretrain_epochs": 0,
    "lr": 1.0,
    "batch_size": 16,
    "freeze_heads": True,
    "use_predicted_object": False,
    "count": 1,
    "rare_budget": None,
    "common_budget": None,
    "test_per_category": 4,
}


def _require_file(path, what: str):
    if path is None:
        raise ConfigError(f"{what} is required")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{what} {path} does not exist")
    return path


def _load_config_file(path) -> dict:
    if path is None:
        return {}
    _require_file(path, "config file")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"{path}: config must be a JSON object")
    return data


class _Resolver:
    """flags > config file > defaults, remembering effective values."""

    def __init__(self, args, file_config: dict):
        self.args = vars(args)
        self.file_config = dict(file_config)
        self.effective = {}

    def get(self, key: str, default=None):
        if key in self.args and self.args[key] is not None:
            value = self.args[key]
        elif key in self.file_config:
            value = self.file_config[key]
        elif key in DEFAULTS:
            value = DEFAULTS[key] if default is None else default
        else:
            value = default
        self.effective[key] = value
        return value


def _check_unit(name: str, value: float):
    if not (0.0 <= value <= 1.0):
        raise ConfigError(f"{name} must lie in [0, 1], got {value}")
    return float(value)


def _run_header(command: str, resolver: _Resolver, argv) -> dict:
    config = {
        k: resolver.effective[k] for k in sorted(resolver.effective)
        if resolver.effective[k] is not None
    }
    return {
        "tool": "vil",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": config,
    }


def _write_run_file(out_dir, run: dict):
    with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as f:
        f.write(dumps_record(run) + "\n")


def _make_backend(res: _Resolver):
    kind = res.get("backend")
    seed = int(res.get("seed"))
    if kind == "mock":
        return toyworld.toy_backend(seed)
    if kind == "cache":
        cache_dir = res.get("cache_dir")
        if cache_dir is None:
            raise ConfigError("cache backend needs --cache-dir")
        return CacheBackend(cache_dir)
    if kind == "remote":
        url = res.get("url") or os.environ.get(SIDECAR_ENV)
        if not url:
            raise ConfigError(
                f"remote backend needs --url or the {SIDECAR_ENV} environment variable"
            )
        res.effective["url"] = url
        return RemoteBackend(url)
    raise ConfigError(f"unknown backend {kind!r}; use mock, cache, or remote")


def _music_config(res: _Resolver) -> music.MusicConfig:
    return music.MusicConfig(
        tau_scn=_check_unit("tau_scn", float(res.get("tau_scn"))),
        tau_det=_check_unit("tau_det", float(res.get("tau_det"))),
        tau_inter=_check_unit("tau_inter", float(res.get("tau_inter"))),
    )


def _real_pool(res: _Resolver, backend):
    """Real images whose embeddings anchor the scene filter."""
    manifest_path = res.get("manifest_real")
    if manifest_path is not None:
        _require_file(manifest_path, "real manifest")
        manifest = Manifest.load(manifest_path)
        images_dir = res.get("images_real") or os.path.dirname(manifest_path)
        provider = FileImageProvider(images_dir)
    else:
        manifest, provider = toyworld.build_real_dataset(int(res.get("seed")))
    features = [backend.scene_embed(provider.load(e)) for e in manifest.images]
    return manifest, provider, features


def _persist_split(out_dir, manifest: Manifest, provider, run: dict):
    os.makedirs(os.path.join(out_dir, "images"), exist_ok=True)
    for entry in manifest.images:
        img = provider.load(entry)
        with open(os.path.join(out_dir, entry.path), "wb") as f:
            f.write(img.to_png_bytes())
    manifest.save(os.path.join(out_dir, "manifest.jsonl"), run=run)


def _budgets(res: _Resolver, freq: FrequencyTable, dataset: str) -> dict:
    rare = res.get("rare_budget")
    common = res.get("common_budget")
    if (rare is None) != (common is None):
        raise ConfigError("--rare-budget and --common-budget go together")
    if rare is not None:
        rare, common = int(rare), int(common)
        if rare < 0 or common < 0:
            raise ConfigError("budgets must be non-negative")
        return {cat: (rare if freq.rare[cat] else common)
                for cat in freq.categories()}
    return music.generation_budget(freq, dataset)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def _cmd_prompts(res: _Resolver, argv) -> int:
    out = res.get("out")
    if out is None:
        raise ConfigError("--out is required")
    seed = int(res.get("seed"))
    count = int(res.get("count"))
    if count < 1:
        raise ConfigError(f"--count must be >= 1, got {count}")
    vocab = toyworld.toy_vocab()
    words = toyworld.toy_word_sets()
    rows = []
    for cat in sorted(words.scene_map.keys()):
        for attempt in range(count):
            spec_seed = seed_from("music", seed, cat[0], cat[1], attempt)
            p = music.build_prompt(cat, words, vocab, toyworld.TOY_LEXICON, spec_seed)
            rows.append({
                "c_a": p.c_a, "c_o": p.c_o, "attempt": attempt,
                "w_h": p.w_h, "w_s": p.w_s, "text": p.text,
            })
    save_prompts(out, rows, run=_run_header("prompts", res, argv))
    print(f"wrote {len(rows)} prompts to {out}")
    return 0


def _cmd_generate(res: _Resolver, argv) -> int:
    out_dir = res.get("out")
    if out_dir is None:
        raise ConfigError("--out is required")
    dataset = res.get("dataset")
    seed = int(res.get("seed"))
    workers = int(res.get("workers"))
    if workers < 1:
        raise ConfigError(f"--workers must be >= 1, got {workers}")
    backend = _make_backend(res)
    config = _music_config(res)
    real_manifest, _, features = _real_pool(res, backend)
    freq = FrequencyTable.from_manifest(real_manifest)
    budgets = _budgets(res, freq, dataset)
    ctx = music.GenerationContext(
        vocab=toyworld.toy_vocab(), words=toyworld.toy_word_sets(),
        lexicon=toyworld.TOY_LEXICON, backend=backend, config=config,
        real_features=features, master_seed=seed,
    )
    samples, rejections = music.generate_dataset(ctx, freq, dataset,
                                                 workers=workers, budgets=budgets)
    run = _run_header("generate", res, argv)
    manifest, provider = toyworld.virtual_manifest(samples)
    os.makedirs(out_dir, exist_ok=True)
    _persist_split(out_dir, manifest, provider, run)
    save_rejections(os.path.join(out_dir, "rejections.jsonl"), rejections, run=run)
    freq.save(os.path.join(out_dir, "frequency.jsonl"), run=run)
    _write_run_file(out_dir, run)
    print(f"kept {len(samples)} virtual images "
          f"({len(rejections)} rejected) in {out_dir}")
    return 0


def _cmd_filter(res: _Resolver, argv) -> int:
    out_dir = res.get("out")
    manifest_path = _require_file(res.get("manifest"), "candidate manifest")
    if out_dir is None:
        raise ConfigError("--out is required")
    images_dir = res.get("images") or os.path.dirname(manifest_path)
    manifest = Manifest.load(manifest_path)
    provider = FileImageProvider(images_dir)
    backend = _make_backend(res)
    config = _music_config(res)
    _, _, features = _real_pool(res, backend)
    ctx = music.GenerationContext(
        vocab=toyworld.toy_vocab(), words=toyworld.toy_word_sets(),
        lexicon=toyworld.TOY_LEXICON, backend=backend, config=config,
        real_features=features, master_seed=int(res.get("seed")),
    )
    samples, rejections = music.filter_candidates(ctx, manifest, provider)
    run = _run_header("filter", res, argv)
    kept_manifest, kept_provider = toyworld.virtual_manifest(samples)
    os.makedirs(out_dir, exist_ok=True)
    _persist_split(out_dir, kept_manifest, kept_provider, run)
    save_rejections(os.path.join(out_dir, "rejections.jsonl"), rejections, run=run)
    _write_run_file(out_dir, run)
    print(f"kept {len(samples)} of {len(manifest.images)} candidates in {out_dir}")
    return 0


def _detector_from_checkpoint(path):
    theta, meta = teacher_student.load_checkpoint(path)
    if meta.get("kind") != "toy":
        raise ConfigError(f"{path}: checkpoint kind {meta.get('kind')!r} is not usable here")
    det = teacher_student.ToyDetector(
        int(meta["n_interactions"]), int(meta["n_objects"]),
        canvas=tuple(meta.get("canvas", toyworld.TOY_CANVAS)),
        init_seed=int(meta.get("init_seed", 0)),
    )
    det.load(theta)
    return det


def _cmd_amf(res: _Resolver, argv) -> int:
    out = res.get("out")
    if out is None:
        raise ConfigError("--out is required")
    manifest_path = _require_file(res.get("manifest"), "virtual manifest")
    manifest = Manifest.load(manifest_path)
    kappa = float(res.get("kappa"))
    tau_nms = _check_unit("tau_nms", float(res.get("tau_nms")))
    use_pred_obj = bool(res.get("use_predicted_object"))
    run = _run_header("amf", res, argv)

    preds_path = res.get("preds")
    if preds_path is not None:
        _require_file(preds_path, "predictions file")
        from .dataio import load_predictions

        preds_by_image = load_predictions(preds_path)
    else:
        teacher_path = _require_file(res.get("teacher"), "teacher checkpoint")
        images_dir = res.get("images") or os.path.dirname(manifest_path)
        provider = FileImageProvider(images_dir)
        det = _detector_from_checkpoint(teacher_path)
        preds_by_image = {
            e.id: det.predict(provider.load(e)) for e in manifest.images
        }
        preds_out = res.get("preds_out")
        if preds_out is not None:
            save_predictions(preds_out, preds_by_image, run=run)

    pool = []
    for entry in manifest.images:
        if entry.id not in preds_by_image:
            raise ParseError(f"predictions are missing image {entry.id!r}")
        for e in preds_by_image[entry.id].entries:
            finite = e.s_a[np.isfinite(e.s_a)]
            if finite.size:
                pool.append(float(finite.max()))
    tau_bin = amf.select_threshold(pool, kappa, max(1, len(manifest.images)))

    labels = {}
    for entry in manifest.images:
        anns = manifest.annotations_for(entry.id)
        if len(anns) != 1:
            raise ParseError(
                f"virtual image {entry.id!r} has {len(anns)} annotations, expected 1"
            )
        a = anns[0]
        ann = amf.Annotation(c_a=a.c_a, c_o=a.c_o, b_h=a.b_h, b_o=a.b_o)
        corr = amf.correct_annotation(preds_by_image[entry.id], ann,
                                      (entry.width, entry.height))
        labels[entry.id] = amf.build_pseudo_labels(
            corr.predictions, corr.annotation, tau_bin, tau_nms,
            use_predicted_object=use_pred_obj,
        )
    save_pseudo_labels(out, labels, tau_bin, run=run)
    n_triplets = sum(len(v.triplets) for v in labels.values())
    print(f"tau_bin={tau_bin!r}; wrote {n_triplets} pseudo-label triplets "
          f"for {len(labels)} images to {out}")
    return 0


def _cmd_threshold(res: _Resolver, argv) -> int:
    preds_path = _require_file(res.get("preds"), "predictions file")
    kappa = float(res.get("kappa"))
    nv = res.get("nv")
    if nv is None:
        raise ConfigError("--nv is required")
    from .dataio import load_predictions

    preds_by_image = load_predictions(preds_path)
    pool = []
    for pset in preds_by_image.values():
        for e in pset.entries:
            finite = e.s_a[np.isfinite(e.s_a)]
            if finite.size:
                pool.append(float(finite.max()))
    tau_bin = amf.select_threshold(pool, kappa, int(nv))
    print(dumps_record({"kappa": kappa, "n_virtual": int(nv),
                        "pool_size": len(pool), "tau_bin": tau_bin}))
    return 0


def _load_split(res: _Resolver, manifest_key: str, images_key: str, what: str):
    path = _require_file(res.get(manifest_key), what)
    manifest = Manifest.load(path)
    images_dir = res.get(images_key) or os.path.dirname(path)
    return manifest, FileImageProvider(images_dir)


def _cmd_train_toy(res: _Resolver, argv) -> int:
    out_dir = res.get("out")
    if out_dir is None:
        raise ConfigError("--out is required")
    real_manifest, real_provider = _load_split(
        res, "manifest_real", "images_real", "real manifest"
    )
    epochs = int(res.get("epochs"))
    if epochs < 1:
        raise ConfigError(f"epochs must be >= 1, got {epochs}")
    seed = int(res.get("seed"))
    cfg = teacher_student.TrainConfig(
        epochs=epochs,
        alpha=float(res.get("alpha")),
        lr=float(res.get("lr")),
        batch_size=int(res.get("batch_size")),
        kappa=float(res.get("kappa")),
        tau_nms=_check_unit("tau_nms", float(res.get("tau_nms"))),
        freeze_heads=bool(res.get("freeze_heads")),
        seed=seed,
        use_predicted_object=bool(res.get("use_predicted_object")),
    )
    vocab = real_manifest.vocab
    real_samples = teacher_student.real_samples_from_manifest(
        real_manifest, real_provider, vocab.n_interactions
    )
    virtual_samples = []
    if res.get("manifest_virtual") is not None:
        v_manifest, v_provider = _load_split(
            res, "manifest_virtual", "images_virtual", "virtual manifest"
        )
        virtual_samples = teacher_student.virtual_samples_from_manifest(
            v_manifest, v_provider
        )

    student = teacher_student.ToyDetector(
        vocab.n_interactions, vocab.n_objects,
        canvas=toyworld.TOY_CANVAS, init_seed=seed,
    )
    pretrain_epochs = int(res.get("pretrain_epochs"))
    if pretrain_epochs < 0:
        raise ConfigError(f"pretrain epochs must be >= 0, got {pretrain_epochs}")
    if pretrain_epochs:
        warm = teacher_student.TrainConfig(
            epochs=pretrain_epochs, alpha=cfg.alpha, lr=cfg.lr,
            batch_size=cfg.batch_size, seed=seed,
        )
        student, _, _ = teacher_student.train(student, [], real_samples, warm)

    student, teacher, reports = teacher_student.train(
        student, virtual_samples, real_samples, cfg
    )

    os.makedirs(out_dir, exist_ok=True)
    run = _run_header("train-toy", res, argv)
    meta = {
        "kind": "toy", "n_interactions": vocab.n_interactions,
        "n_objects": vocab.n_objects, "canvas": list(toyworld.TOY_CANVAS),
        "alpha": cfg.alpha, "epoch": epochs, "init_seed": seed,
    }
    teacher_student.save_checkpoint(os.path.join(out_dir, "student.ckpt"),
                                    student.parameters(), meta)
    teacher_student.save_checkpoint(os.path.join(out_dir, "teacher.ckpt"),
                                    teacher.theta, meta)
    from .dataio import write_jsonl

    write_jsonl(
        os.path.join(out_dir, "reports.jsonl"), "train_report",
        [
            {"epoch": r.epoch, "tau_bin": r.tau_bin, "steps": r.steps,
             "mean_loss": r.mean_loss, "n_pseudo_triplets": r.n_pseudo_triplets}
            for r in reports
        ],
        run=run,
    )
    _write_run_file(out_dir, run)

    if res.get("eval_manifest") is not None:
        eval_manifest, eval_provider = _load_split(
            res, "eval_manifest", "eval_images", "evaluation manifest"
        )
        eval_samples = teacher_student.real_samples_from_manifest(
            eval_manifest, eval_provider, vocab.n_interactions
        )
        recall, hits, total = teacher_student.evaluate_recall(student, eval_samples)
        print(dumps_record({"recall": recall, "hits": hits, "total": total}))
    print(f"trained {epochs} epochs over {len(real_samples)} real / "
          f"{len(virtual_samples)} virtual images; checkpoints in {out_dir}")
    return 0


def _cmd_stats(res: _Resolver, argv) -> int:
    out_dir = res.get("out")
    if out_dir is None:
        raise ConfigError("--out is required")
    manifest_path = _require_file(res.get("manifest"), "real manifest")
    manifest = Manifest.load(manifest_path)
    freq = None
    if res.get("freq") is not None:
        freq = FrequencyTable.load(_require_file(res.get("freq"), "frequency file"))
    virtual_manifest = None
    if res.get("virtual") is not None:
        virtual_manifest = Manifest.load(_require_file(res.get("virtual"),
                                                       "virtual manifest"))
    dataset = res.get("dataset")
    budgets = None
    if freq is None:
        freq = FrequencyTable.from_manifest(manifest)
    if dataset is not None:
        budgets = music.generation_budget(freq, dataset)
    os.makedirs(out_dir, exist_ok=True)
    rows = reporting.category_rows(manifest, freq, virtual_manifest, budgets)
    paths = {
        "stats": os.path.join(out_dir, "stats.tsv"),
        "longtail": os.path.join(out_dir, "longtail.png"),
        "budget": os.path.join(out_dir, "budget_compliance.png"),
    }
    reporting.write_stats_tsv(paths["stats"], rows)
    reporting.render_longtail(paths["longtail"], rows)
    reporting.render_budget_compliance(paths["budget"], rows)
    run = _run_header("stats", res, argv)
    _write_run_file(out_dir, run)

    scene_map_out = res.get("scene_map_out")
    if scene_map_out is not None:
        images_dir = res.get("images") or os.path.dirname(manifest_path)
        provider = FileImageProvider(images_dir)
        backend = _make_backend(res)
        scene_map = toyworld.tally_scene_map(manifest, provider, backend)
        save_scene_map(scene_map_out, scene_map, run=run)
        print(f"tallied scene words for {len(scene_map)} categories "
              f"to {scene_map_out}")
    print(f"wrote stats for {len(rows)} categories to {out_dir}")
    return 0


def _cmd_toy_data(res: _Resolver, argv) -> int:
    out_dir = res.get("out")
    if out_dir is None:
        raise ConfigError("--out is required")
    seed = int(res.get("seed"))
    per_cat = int(res.get("test_per_category"))
    if per_cat < 1:
        raise ConfigError(f"--test-per-category must be >= 1, got {per_cat}")
    run = _run_header("toy-data", res, argv)
    train_manifest, train_provider = toyworld.build_real_dataset(seed)
    test_manifest, test_provider = toyworld.build_test_dataset(seed, per_cat)
    train_dir = os.path.join(out_dir, "train")
    test_dir = os.path.join(out_dir, "test")
    os.makedirs(train_dir, exist_ok=True)
    os.makedirs(test_dir, exist_ok=True)
    _persist_split(train_dir, train_manifest, train_provider, run)
    _persist_split(test_dir, test_manifest, test_provider, run)
    FrequencyTable.from_manifest(train_manifest).save(
        os.path.join(out_dir, "frequency.jsonl"), run=run
    )
    _write_run_file(out_dir, run)
    print(f"wrote {len(train_manifest.images)} train / "
          f"{len(test_manifest.images)} test images to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _add_backend_flags(p):
    p.add_argument("--backend", choices=["mock", "cache", "remote"])
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--url")


def _add_filter_flags(p):
    p.add_argument("--tau-scn", dest="tau_scn", type=float)
    p.add_argument("--tau-det", dest="tau_det", type=float)
    p.add_argument("--tau-inter", dest="tau_inter", type=float)
    p.add_argument("--manifest-real", dest="manifest_real")
    p.add_argument("--images-real", dest="images_real")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vil",
        description="Curate synthetic training images for long-tailed "
                    "interaction detection and train on them.",
    )
    parser.add_argument("--version", action="version", version=f"vil {__version__}")
    parser.add_argument("--config", help="JSON file with default flag values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prompts", help="render category prompts for audit")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--count", type=int)

    p = sub.add_parser("generate", help="generate and curate virtual images")
    p.add_argument("--out", required=True)
    p.add_argument("--dataset", choices=["hico", "vcoco"])
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--rare-budget", dest="rare_budget", type=int)
    p.add_argument("--common-budget", dest="common_budget", type=int)
    _add_backend_flags(p)
    _add_filter_flags(p)

    p = sub.add_parser("filter", help="re-run the filter cascade on candidates")
    p.add_argument("--manifest", required=True)
    p.add_argument("--images")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    _add_backend_flags(p)
    _add_filter_flags(p)

    p = sub.add_parser("amf", help="correct annotations into pseudo-labels")
    p.add_argument("--manifest", required=True)
    p.add_argument("--preds")
    p.add_argument("--teacher")
    p.add_argument("--images")
    p.add_argument("--preds-out", dest="preds_out")
    p.add_argument("--kappa", type=float)
    p.add_argument("--nms", dest="tau_nms", type=float)
    p.add_argument("--use-predicted-object", dest="use_predicted_object",
                   action=argparse.BooleanOptionalAction)
    p.add_argument("--out", required=True)

    p = sub.add_parser("threshold", help="compute the adaptive score threshold")
    p.add_argument("--preds", required=True)
    p.add_argument("--kappa", type=float)
    p.add_argument("--nv", type=int, required=True)

    p = sub.add_parser("train-toy", help="teacher-student training at desk scale")
    p.add_argument("--manifest-virtual", dest="manifest_virtual")
    p.add_argument("--images-virtual", dest="images_virtual")
    p.add_argument("--manifest-real", dest="manifest_real", required=True)
    p.add_argument("--images-real", dest="images_real")
    p.add_argument("--eval-manifest", dest="eval_manifest")
    p.add_argument("--eval-images", dest="eval_images")
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int)
    p.add_argument("--pretrain-epochs", dest="pretrain_epochs", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--kappa", type=float)
    p.add_argument("--nms", dest="tau_nms", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--freeze-heads", dest="freeze_heads",
                   action=argparse.BooleanOptionalAction)
    p.add_argument("--use-predicted-object", dest="use_predicted_object",
                   action=argparse.BooleanOptionalAction)

    p = sub.add_parser("stats", help="dataset report: counts, figures, scene tally")
    p.add_argument("--manifest", required=True)
    p.add_argument("--freq")
    p.add_argument("--virtual")
    p.add_argument("--dataset", choices=["hico", "vcoco"])
    p.add_argument("--out", required=True)
    p.add_argument("--scene-map-out", dest="scene_map_out")
    p.add_argument("--images")
    p.add_argument("--seed", type=int)
    _add_backend_flags(p)

    p = sub.add_parser("toy-data", help="synthesize the toy real train/test splits")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--test-per-category", dest="test_per_category", type=int)

    return parser


_HANDLERS = {
    "prompts": _cmd_prompts,
    "generate": _cmd_generate,
    "filter": _cmd_filter,
    "amf": _cmd_amf,
    "threshold": _cmd_threshold,
    "train-toy": _cmd_train_toy,
    "stats": _cmd_stats,
    "toy-data": _cmd_toy_data,
}


def _dispatch(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    file_config = _load_config_file(args.config)
    res = _Resolver(args, file_config)
    return _HANDLERS[args.command](res, argv)


def main(argv: Optional[list] = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    try:
        return _dispatch(argv)
    except ConfigError as exc:
        print(f"vil: invalid configuration: {exc}", file=sys.stderr)
        return 3
    except ParseError as exc:
        print(f"vil: unreadable input: {exc}", file=sys.stderr)
        return 4
    except FileNotFoundError as exc:
        print(f"vil: {exc}", file=sys.stderr)
        return 5
    except TransportError as exc:
        print(f"vil: transport failure: {exc}", file=sys.stderr)
        return 6
    except VILError as exc:
        print(f"vil: {exc}", file=sys.stderr)
        return 7


if __name__ == "__main__":
    sys.exit(main())
