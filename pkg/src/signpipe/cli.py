"""Command-line interface: dataset ingestion and statistics, fold splits,
baseline training, detection/classification/transliteration runs, the
evaluation and ablation harnesses, embedding analysis, synthetic corpus
generation, and the review service."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import __version__
from .backends import (
    Predictions,
    PredictedBox,
    save_predictions,
    train_centroid_classifier,
)
from .dataset import (
    load_dataset,
    relabel_numerals,
    filter_quality,
    save_dataset,
    split_by_tablet,
)
from .geometry import centroid
from .images import ImageStore
from .layout import LayoutPoint, LineConfig, render_layout_svg, sequential_ransac
from .pipeline import (
    PipelineConfig,
    build_classifier,
    build_detector,
    run_ablation,
    run_evaluate,
    run_transliterate,
    write_manifest,
)
from .stats import coverage_topn, fit_broken_power_law, fit_power_law, rank_frequency


def load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    text = Path(path).read_bytes()
    if path.endswith(".toml"):
        try:
            import tomllib  # py311+
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode("utf-8"))
    return json.loads(text)


def pipeline_config(args, cfg: dict) -> PipelineConfig:
    pc = PipelineConfig()
    for name in (
        "detector", "classifier", "score_threshold", "residual_threshold",
        "ridge_lambda", "max_abs_slope", "ransac_iterations", "folds", "cer_scope",
    ):
        if name in cfg:
            setattr(pc, name, cfg[name])
        if getattr(args, name.replace("-", "_"), None) is not None:
            setattr(pc, name, getattr(args, name.replace("-", "_")))
    if args.seed is not None:
        pc.seed = args.seed
    elif "seed" in cfg:
        pc.seed = cfg["seed"]
    return pc


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {path}")


def cmd_ingest(args, cfg):
    dataset = load_dataset(args.dataset)
    report = {"input_images": len(dataset.images), "input_annotations": dataset.total_annotations()}
    if args.relabel or cfg.get("numeral_mapping"):
        mapping = cfg.get("numeral_mapping", {"1": "DIŠ", "10": "U"})
        drop = set(cfg.get("composite_drop_set", []))
        dataset, rl = relabel_numerals(
            dataset, mapping, drop, prune_empty=cfg.get("prune_empty_classes", False)
        )
        report["relabeled"] = rl.relabeled
        report["dropped_composites"] = rl.dropped
    min_dim = args.min_dim if args.min_dim is not None else cfg.get("min_dim", 0)
    denylist = set(cfg.get("denylist", []))
    dataset, fq = filter_quality(dataset, min_dim=min_dim, denylist=denylist)
    report["removed_low_res"] = fq.removed_low_res
    report["removed_denylisted"] = fq.removed_denylisted
    out = _out_dir(args)
    if args.crop:
        if not args.images:
            raise ValueError("--crop needs --images to rewrite the pixel files")
        from .dataset import crop_to_annotations
        from .images import ImageStore, crop_pixels, save_grayscale

        store = ImageStore(root=args.images)
        (out / "images").mkdir(exist_ok=True)
        margin = cfg.get("crop_margin", 0.02)
        cropped_images = []
        skipped = 0
        for record in dataset.images:
            if not record.annotations:
                skipped += 1
                continue
            shifted, rect = crop_to_annotations(record, margin_frac=margin)
            pixels = crop_pixels(store.pixels(record), rect)
            new_name = f"{record.image_id}.png"
            save_grayscale(pixels, out / "images" / new_name)
            shifted.file_name = new_name
            shifted.width = pixels.shape[1]
            shifted.height = pixels.shape[0]
            cropped_images.append(shifted)
        dataset.images = cropped_images
        report["cropped"] = len(cropped_images)
        report["skipped_unannotated"] = skipped
    report["output_images"] = len(dataset.images)
    save_dataset(dataset, out / "dataset.json")
    _write_json(out / "ingest_report.json", report)
    write_manifest(out, "ingest", cfg, [args.dataset], args.seed)


def cmd_stats(args, cfg):
    dataset = load_dataset(args.dataset)
    rf = rank_frequency(dataset)
    single = fit_power_law(rf)
    broken = fit_broken_power_law(rf)
    n_classes = len(rf.entries)
    coverage = [
        {"n": n, "frac": coverage_topn(rf, n)}
        for n in sorted({min(n_classes, n) for n in (1, 5, 10, 25, 50, n_classes)})
    ]
    out = _out_dir(args)
    _write_json(
        out / "stats.json",
        {
            "rank_frequency": [{"class_id": c, "count": n} for c, n in rf.entries],
            "power_law": {"slope": single.slope, "intercept": single.intercept, "r2": single.r2},
            "broken_power_law": {
                "break_rank": broken.break_rank,
                "left": {"slope": broken.left.slope, "intercept": broken.left.intercept},
                "right": {"slope": broken.right.slope, "intercept": broken.right.intercept},
                "r2_total": broken.r2_total,
            },
            "coverage": coverage,
        },
    )
    if args.scatter_csv:
        with open(out / args.scatter_csv, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rank", "count"])
            for rank, (_, count) in enumerate(rf.entries, start=1):
                writer.writerow([rank, count])
        print(f"wrote {out / args.scatter_csv}")
    write_manifest(out, "stats", cfg, [args.dataset], args.seed)


def cmd_split(args, cfg):
    dataset = load_dataset(args.dataset)
    folds = split_by_tablet(dataset, k=args.k, seed=args.seed or 0)
    out = _out_dir(args)
    _write_json(
        out / "folds.json",
        {"k": folds.k, "seed": folds.seed, "tablet_to_fold": folds.tablet_to_fold},
    )
    write_manifest(out, "split", cfg, [args.dataset], args.seed)


def cmd_train_baseline(args, cfg):
    dataset = load_dataset(args.dataset)
    store = ImageStore(root=args.images)
    model = train_centroid_classifier(dataset, store)
    out = _out_dir(args)
    model.save(out / "centroid_model.npz")
    print(f"wrote {out / 'centroid_model.npz'} ({len(model.templates)} class templates)")
    write_manifest(out, "train-baseline", cfg, [args.dataset], args.seed)


def cmd_detect(args, cfg):
    dataset = load_dataset(args.dataset)
    store = ImageStore(root=args.images)
    pc = pipeline_config(args, cfg)
    detector = build_detector(pc.detector, dataset, store)
    preds = Predictions(images={})
    for record in dataset.images:
        boxes = detector.detect(record).boxes
        preds.images[record.image_id] = [
            PredictedBox(bbox=b.bbox, score=b.score) for b in boxes
        ]
    out = _out_dir(args)
    save_predictions(preds, out / "detections.json")
    print(f"wrote {out / 'detections.json'}")
    write_manifest(out, "detect", pc.to_dict(), [args.dataset], args.seed)


def cmd_classify(args, cfg):
    dataset = load_dataset(args.dataset)
    store = ImageStore(root=args.images) if args.images else ImageStore()
    pc = pipeline_config(args, cfg)
    classifier = build_classifier(pc.classifier, dataset, store)
    if args.predictions:
        from .backends import load_predictions

        source = load_predictions(args.predictions).images
    else:  # classify ground-truth hotspots
        source = {
            img.image_id: [PredictedBox(bbox=a.bbox, score=1.0) for a in img.annotations]
            for img in dataset.images
        }
    records = {img.image_id: img for img in dataset.images}
    preds = Predictions(images={})
    for image_id, boxes in source.items():
        record = records[image_id]
        out_boxes = []
        for b in boxes:
            vec = classifier.classify(record, b.bbox)
            out_boxes.append(
                PredictedBox(bbox=b.bbox, score=b.score, class_scores=[float(s) for s in vec.scores])
            )
        preds.images[image_id] = out_boxes
    out = _out_dir(args)
    save_predictions(preds, out / "classifications.json")
    print(f"wrote {out / 'classifications.json'}")
    write_manifest(out, "classify", pc.to_dict(), [args.dataset], args.seed)


def cmd_lines(args, cfg):
    pc = pipeline_config(args, cfg)
    if args.predictions:
        from .backends import load_predictions

        boxes_by_image = {
            image_id: [(b.bbox, b.score) for b in boxes]
            for image_id, boxes in load_predictions(args.predictions).images.items()
        }
    else:
        dataset = load_dataset(args.dataset)
        boxes_by_image = {
            img.image_id: [(a.bbox, 1.0) for a in img.annotations] for img in dataset.images
        }
    out = _out_dir(args)
    results = {}
    for image_id, boxes in boxes_by_image.items():
        if not boxes:
            results[image_id] = {"lines": [], "reading_sequence": []}
            continue
        points = [
            LayoutPoint(point_id=str(i), x=centroid(b)[0], y=centroid(b)[1])
            for i, (b, _) in enumerate(boxes)
        ]
        heights = [b.height for b, _ in boxes]
        threshold = pc.residual_threshold
        if threshold is None:
            from .layout import default_residual_threshold

            threshold = default_residual_threshold(heights)
        config = LineConfig(
            residual_threshold=threshold,
            ridge_lambda=pc.ridge_lambda,
            max_abs_slope=pc.max_abs_slope,
            ransac_iterations=pc.ransac_iterations,
            seed=pc.seed,
        )
        layout = sequential_ransac(points, config)
        results[image_id] = {
            "lines": [
                {"slope": ln.slope, "intercept": ln.intercept, "members": ln.members}
                for ln in layout.lines
            ],
            "reading_sequence": layout.reading_sequence,
        }
        if args.svg:
            xs = [p.x for p in points]
            ys = [p.y for p in points]
            svg = render_layout_svg(points, layout, max(xs) + 40, max(ys) + 40)
            svg_path = out / f"{image_id.replace('/', '_')}_lines.svg"
            svg_path.write_text(svg, encoding="utf-8")
    _write_json(out / "lines.json", results)
    inputs = [p for p in (args.predictions, args.dataset) if p]
    write_manifest(out, "lines", pc.to_dict(), inputs, args.seed)


def cmd_transliterate(args, cfg):
    dataset = load_dataset(args.dataset)
    store = ImageStore(root=args.images) if args.images else ImageStore()
    pc = pipeline_config(args, cfg)
    detector = build_detector(pc.detector, dataset, store)
    classifier = build_classifier(pc.classifier, dataset, store)
    out = _out_dir(args)
    results = []
    for record in dataset.images:
        result = run_transliterate(record, detector, classifier, pc)
        results.append(result.to_dict())
    _write_json(out / "transliteration.json", results)
    write_manifest(out, "transliterate", pc.to_dict(), [args.dataset], args.seed)


def cmd_evaluate(args, cfg):
    dataset = load_dataset(args.dataset)
    store = ImageStore(root=args.images) if args.images else ImageStore()
    pc = pipeline_config(args, cfg)
    folds = split_by_tablet(dataset, k=pc.folds, seed=pc.seed)
    report = run_evaluate(dataset, store, folds, pc)
    out = _out_dir(args)
    _write_json(out / "evaluation.json", report)
    names = {c.class_id: c.name for c in dataset.catalog}
    with open(out / "per_class.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fold", "class_id", "name", "train_count", "support", "precision", "recall"])
        for fold_report in report["folds"]:
            for row in fold_report["per_class"]:
                writer.writerow(
                    [
                        fold_report["fold"],
                        row["class_id"],
                        names.get(row["class_id"], ""),
                        row["train_count"],
                        row["support"],
                        "" if row["precision"] is None else f"{row['precision']:.6f}",
                        f"{row['recall']:.6f}",
                    ]
                )
    print(f"wrote {out / 'per_class.csv'}")
    write_manifest(out, "evaluate", pc.to_dict(), [args.dataset], args.seed)


def cmd_ablate(args, cfg):
    dataset = load_dataset(args.dataset)
    store = ImageStore(root=args.images) if args.images else ImageStore()
    pc = pipeline_config(args, cfg)
    fractions = [float(f) for f in args.fractions.split(",")]
    curve = run_ablation(dataset, store, fractions, args.repeats, pc, metric=args.metric)
    out = _out_dir(args)
    _write_json(out / "ablation.json", curve)
    write_manifest(out, "ablate", pc.to_dict(), [args.dataset], args.seed)


def cmd_embed(args, cfg):
    from .embedding import cluster_report, embed_logits, pca, tsne, TSNEConfig

    dataset = load_dataset(args.dataset)
    store = ImageStore(root=args.images) if args.images else ImageStore()
    pc = pipeline_config(args, cfg)
    classifier = build_classifier(pc.classifier, dataset, store)
    crops = [
        (img, ann.bbox, ann.class_id) for img in dataset.images for ann in img.annotations
    ]
    emb = embed_logits(classifier, crops)
    d = min(args.components, min(emb.matrix.shape))
    _, projected = pca(emb.matrix, d=d)
    result = tsne(
        projected,
        TSNEConfig(perplexity=args.perplexity, iterations=args.iterations, seed=pc.seed),
    )
    names = {c.class_id: c.name for c in dataset.catalog}
    report = cluster_report(result.coords, emb.labels, class_names=names)
    out = _out_dir(args)
    with open(out / "scatter.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "class_id", "class_name"])
        writer.writerows(report.scatter_rows)
    _write_json(
        out / "purity.json",
        {
            "mean_purity": report.mean_purity,
            "purity_by_class": {str(k): v for k, v in report.purity_by_class.items()},
            "kl_initial": result.kl_initial,
            "kl_final": result.kl_final,
        },
    )
    print(f"wrote {out / 'scatter.csv'}")
    write_manifest(out, "embed", pc.to_dict(), [args.dataset], args.seed)


def cmd_synth(args, cfg):
    from .synthetic import SynthConfig, generate_synthetic

    kwargs = dict(cfg.get("synth", {}))
    if args.tablets is not None:
        kwargs["tablets"] = args.tablets
    if args.classes is not None:
        kwargs["num_classes"] = args.classes
    config = SynthConfig(**kwargs)
    out = _out_dir(args)
    dataset, _ = generate_synthetic(config, seed=args.seed or 0, out_dir=out / "images")
    save_dataset(dataset, out / "dataset.json")
    print(f"wrote {out / 'dataset.json'} ({len(dataset.images)} images)")
    write_manifest(out, "synth", {"synth": kwargs}, [], args.seed)


def cmd_serve(args, cfg):
    from .server import create_app, serve

    out = _out_dir(args)
    app = create_app(
        dataset=args.dataset,
        predictions=args.predictions,
        images_root=args.images,
        sessions_dir=args.sessions or (out / "sessions"),
        static_dir=args.static,
    )
    serve(app, host=args.host, port=args.port)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="signpipe", description=__doc__)
    parser.add_argument("--version", action="version", version=f"signpipe {__version__}")
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--out", help="output directory (default: current)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, images=True, predictions=False):
        p.add_argument("dataset", help="dataset JSON path")
        if images:
            p.add_argument("--images", help="images root directory")
        if predictions:
            p.add_argument("--predictions", help="predictions JSON path")
        p.add_argument("--detector", default=None)
        p.add_argument("--classifier", default=None)
        p.add_argument("--score-threshold", dest="score_threshold", type=float, default=None)
        p.add_argument("--residual-threshold", dest="residual_threshold", type=float, default=None)

    p = sub.add_parser("ingest", help="validate/relabel/filter/crop a dataset export")
    p.add_argument("dataset")
    p.add_argument("--images", help="images root (needed for --crop)")
    p.add_argument("--relabel", action="store_true", help="apply numeral relabeling")
    p.add_argument("--min-dim", type=int, default=None)
    p.add_argument("--crop", action="store_true",
                   help="crop pixel files to the annotation extent (writes new PNGs)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="rank-frequency and power-law report")
    p.add_argument("dataset")
    p.add_argument("--scatter-csv", default=None, help="also write rank,count CSV")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="by-tablet cross-validation folds")
    p.add_argument("dataset")
    p.add_argument("--k", type=int, default=5)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train-baseline", help="train the template classifier")
    p.add_argument("dataset")
    p.add_argument("--images", required=True)
    p.set_defaults(func=cmd_train_baseline)

    p = sub.add_parser("detect", help="run the detector over a dataset")
    common(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("classify", help="classify gt or predicted boxes")
    common(p, predictions=True)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("lines", help="line layout from boxes")
    common(p, images=False, predictions=True)
    p.add_argument("--svg", action="store_true", help="write per-image SVG overlays")
    p.set_defaults(func=cmd_lines)

    p = sub.add_parser("transliterate", help="detect + classify + line layout")
    common(p)
    p.set_defaults(func=cmd_transliterate)

    p = sub.add_parser("evaluate", help="fold-based metric suite")
    common(p)
    p.add_argument("--folds", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="training-set-size ablation")
    common(p)
    p.add_argument("--fractions", default="0.1,0.25,0.5,1.0")
    p.add_argument("--repeats", type=int, default=10)
    p.add_argument("--metric", default="top1")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("embed", help="logit embeddings, PCA + t-SNE, purity")
    common(p)
    p.add_argument("--components", type=int, default=50)
    p.add_argument("--perplexity", type=float, default=30.0)
    p.add_argument("--iterations", type=int, default=1000)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--tablets", type=int, default=None)
    p.add_argument("--classes", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("serve", help="run the review service")
    p.add_argument("dataset")
    p.add_argument("--predictions", required=True)
    p.add_argument("--images")
    p.add_argument("--sessions")
    p.add_argument("--static", help="directory with the built review UI")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = load_config_file(args.config)
    try:
        args.func(args, cfg)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
