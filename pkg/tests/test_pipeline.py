import json

import numpy as np
import pytest

from signpipe.backends import (
    BaselineDetector,
    BaselineDetectorParams,
    CentroidClassifier,
    FixtureDetector,
    OracleClassifier,
    predictions_from_ground_truth,
    train_centroid_classifier,
)
from signpipe.dataset import Dataset, ImageRecord, select_fold, split_by_tablet
from signpipe.images import ImageStore
from signpipe.metrics import corpus_cer
from signpipe.pipeline import (
    PipelineConfig,
    ablation_point,
    build_classifier,
    build_detector,
    canonical_json,
    evaluate_split,
    reference_sequence,
    run_ablation,
    run_evaluate,
    run_transliterate,
    sha256_file,
    write_manifest,
    _split_train_test_by_image,
)
from signpipe.synthetic import SynthConfig, generate_synthetic


def oracle_backends(dataset):
    detector = FixtureDetector(predictions_from_ground_truth(dataset, with_class_scores=False))
    classifier = OracleClassifier(dataset)
    return detector, classifier


class TestTransliterate:
    def test_oracle_composition_matches_ground_truth(self, flat_corpus):
        dataset, _ = flat_corpus
        detector, classifier = oracle_backends(dataset)
        config = PipelineConfig(score_threshold=0.5)
        for record in dataset.images:
            result = run_transliterate(record, detector, classifier, config)
            assert result.top1_sequence == reference_sequence(record)

    def test_blank_image_empty_result(self, flat_corpus):
        dataset, _ = flat_corpus
        blank = ImageRecord("blank", "t-blank", "blank.png", 200, 100, [])
        store = ImageStore(arrays={"blank": np.full((100, 200), 200.0, dtype=np.float32)})
        detector = BaselineDetector(BaselineDetectorParams(), store)
        classifier = OracleClassifier(dataset)
        result = run_transliterate(blank, detector, classifier, PipelineConfig())
        assert result.items == [] and result.top1_sequence == []

    def test_backend_failure_names_stage(self, flat_corpus):
        dataset, _ = flat_corpus

        class Broken:
            def detect(self, record):
                raise RuntimeError("boom")

        with pytest.raises(RuntimeError, match="detect stage"):
            run_transliterate(
                dataset.images[0], Broken(), OracleClassifier(dataset), PipelineConfig()
            )

    def test_suggestions_are_ranked_topk(self, flat_corpus):
        dataset, _ = flat_corpus
        detector, classifier = oracle_backends(dataset)
        result = run_transliterate(
            dataset.images[0], detector, classifier, PipelineConfig(topk=(1, 3, 5))
        )
        for item in result.items:
            assert len(item.suggestions) == 5
            scores = [s for _, s in item.suggestions]
            assert scores == sorted(scores, reverse=True)

    def test_baseline_corpus_cer(self, flat_corpus):
        dataset, arrays = flat_corpus
        store = ImageStore(arrays=arrays)
        folds = split_by_tablet(dataset, k=4, seed=1)
        train = select_fold(dataset, folds, 0, train=True)
        test = select_fold(dataset, folds, 0, train=False)
        detector = BaselineDetector(BaselineDetectorParams(), store)
        classifier = CentroidClassifier(train_centroid_classifier(train, store), store)
        config = PipelineConfig(score_threshold=0.0)
        pairs = []
        for record in test.images:
            result = run_transliterate(record, detector, classifier, config)
            pairs.append((result.top1_sequence, reference_sequence(record)))
        assert corpus_cer(pairs) <= 0.05


class TestEvaluate:
    def test_oracle_backends_perfect_everywhere(self, flat_corpus):
        dataset, _ = flat_corpus
        store = ImageStore()
        config = PipelineConfig(detector="oracle", classifier="oracle", folds=3)
        folds = split_by_tablet(dataset, k=3, seed=0)
        report = run_evaluate(dataset, store, folds, config)
        assert len(report["folds"]) == 3
        for fold in report["folds"]:
            assert fold["ap50"] == pytest.approx(1.0)
            assert fold["ap75"] == pytest.approx(1.0)
            assert fold["recall50"] == pytest.approx(1.0)
            assert fold["top1"] == pytest.approx(1.0)
            assert fold["pred_top1"] == pytest.approx(1.0)
            assert fold["detector_fpr"] == 0.0
            assert fold["cer"] == 0.0
        agg = report["aggregate"]
        assert agg["ap50"]["mean"] == pytest.approx(1.0)
        assert agg["cer"]["formatted"] == "0.000 (0.000)"

    def test_report_shape(self, flat_corpus):
        dataset, _ = flat_corpus
        folds = split_by_tablet(dataset, k=3, seed=0)
        config = PipelineConfig(detector="oracle", classifier="oracle")
        report = run_evaluate(dataset, ImageStore(), folds, config)
        assert [f["fold"] for f in report["folds"]] == [0, 1, 2]
        for name in ("ap50", "recall75", "mean_recall", "cer", "pred_top5"):
            assert "mean" in report["aggregate"][name]
            assert "std" in report["aggregate"][name]

    def test_train_counts_come_from_train_split_only(self, flat_corpus):
        # fold hygiene: per-class train_count must equal the non-fold tally
        dataset, arrays = flat_corpus
        store = ImageStore(arrays=arrays)
        folds = split_by_tablet(dataset, k=3, seed=0)
        config = PipelineConfig(detector="oracle", classifier="oracle")
        report = run_evaluate(dataset, store, folds, config)
        for fold_report in report["folds"]:
            fold = fold_report["fold"]
            train = select_fold(dataset, folds, fold, train=True)
            expect = {}
            for img in train.images:
                for ann in img.annotations:
                    expect[ann.class_id] = expect.get(ann.class_id, 0) + 1
            got = {row["class_id"]: row["train_count"] for row in fold_report["per_class"]}
            assert {c: n for c, n in got.items() if n} == expect

    def test_determinism_byte_identical(self, flat_corpus):
        dataset, arrays = flat_corpus
        store = ImageStore(arrays=arrays)
        folds = split_by_tablet(dataset, k=3, seed=5)
        config = PipelineConfig(detector="baseline", classifier="centroid",
                                score_threshold=0.0)
        a = run_evaluate(dataset, store, folds, config)
        b = run_evaluate(dataset, store, folds, config)
        assert canonical_json(a) == canonical_json(b)

    def test_spearman_fields_present_with_centroid(self, flat_corpus):
        dataset, arrays = flat_corpus
        store = ImageStore(arrays=arrays)
        train, test = _split_train_test_by_image(dataset, seed=4)
        report = evaluate_split(
            train, test, store, PipelineConfig(detector="oracle", classifier="centroid",
                                               score_threshold=0.0)
        )
        assert report.spearman_recall is None or -1.0 <= report.spearman_recall <= 1.0


class TestAblation:
    def test_fraction_one_matches_non_ablated(self, flat_corpus):
        dataset, arrays = flat_corpus
        store = ImageStore(arrays=arrays)
        config = PipelineConfig(detector="oracle", classifier="centroid",
                                score_threshold=0.0, seed=3)
        train, test = _split_train_test_by_image(dataset, config.seed)
        ablated = ablation_point(train, test, store, config, 1.0, sample_seed=77)
        direct = evaluate_split(train, test, store, config)
        assert ablated["top1"] == direct.top1
        assert ablated["cer"] == direct.cer
        # byte-identical when serialized
        a = canonical_json({k: v for k, v in ablated.items() if k not in ("fraction", "sample_seed")})
        b = canonical_json(
            {"top1": direct.top1, "top5": direct.top5, "mean_recall": direct.mean_recall,
             "ap50": direct.ap50, "cer": direct.cer}
        )
        assert a == b

    def test_curve_shape_and_trend(self, flat_corpus):
        dataset, arrays = flat_corpus
        store = ImageStore(arrays=arrays)
        config = PipelineConfig(detector="oracle", classifier="centroid",
                                score_threshold=0.0, seed=1)
        result = run_ablation(dataset, store, [0.1, 1.0], repeats=3, config=config)
        assert len(result["curve"]) == 2
        for row in result["curve"]:
            assert {"fraction", "mean", "std", "points"} <= set(row)
            assert len(row["points"]) == 3
        by_fraction = {row["fraction"]: row["mean"] for row in result["curve"]}
        assert by_fraction[1.0] >= by_fraction[0.1]

    def test_invalid_fraction(self, flat_corpus):
        dataset, arrays = flat_corpus
        with pytest.raises(ValueError):
            run_ablation(dataset, ImageStore(arrays=arrays), [0.0], 1, PipelineConfig())


class TestOracleSubstitution:
    def test_oracle_stage_never_hurts(self):
        # replacing either stage with its oracle never increases CER
        worse = 0
        for seed in range(20):
            config = SynthConfig(num_classes=6, tablets=3, slope_range=(0.0, 0.0),
                                 lines_per_tablet=(3, 4), signs_per_line=(6, 8))
            dataset, arrays = generate_synthetic(config, seed=100 + seed)
            store = ImageStore(arrays=arrays)
            model = train_centroid_classifier(dataset, store)
            base_det = BaselineDetector(BaselineDetectorParams(), store)
            base_clf = CentroidClassifier(model, store)
            oracle_det, oracle_clf = oracle_backends(dataset)
            pc = PipelineConfig(score_threshold=0.0)

            def run_cer(det, clf):
                pairs = []
                for record in dataset.images:
                    result = run_transliterate(record, det, clf, pc)
                    pairs.append((result.top1_sequence, reference_sequence(record)))
                return corpus_cer(pairs)

            base = run_cer(base_det, base_clf)
            if run_cer(oracle_det, base_clf) > base + 1e-12:
                worse += 1
            if run_cer(base_det, oracle_clf) > base + 1e-12:
                worse += 1
        assert worse == 0


class TestBackendFactory:
    def test_specs(self, flat_corpus, tmp_path):
        dataset, arrays = flat_corpus
        store = ImageStore(arrays=arrays)
        assert build_detector("oracle", dataset, store).detect(dataset.images[0]).boxes
        assert build_detector("baseline", dataset, store)
        from signpipe.backends import save_predictions

        preds = predictions_from_ground_truth(dataset)
        save_predictions(preds, tmp_path / "p.json")
        fixture = build_detector(f"fixture:{tmp_path / 'p.json'}", dataset, store)
        assert fixture.detect(dataset.images[0]).boxes
        clf = build_classifier("oracle", dataset, store)
        record = dataset.images[0]
        assert clf.classify(record, record.annotations[0].bbox).top1() == record.annotations[0].class_id
        with pytest.raises(ValueError):
            build_detector("bogus", dataset, store)
        with pytest.raises(ValueError):
            build_classifier("bogus", dataset, store)


class TestManifest:
    def test_manifest_written_with_hashes(self, tmp_path, small_dataset):
        from signpipe.dataset import save_dataset

        data_path = tmp_path / "d.json"
        save_dataset(small_dataset, data_path)
        path = write_manifest(tmp_path, "stats", {"x": 1}, [data_path], seed=9)
        doc = json.loads(path.read_text())
        assert doc["command"] == "stats"
        assert doc["seed"] == 9
        assert doc["input_hashes"][str(data_path)] == sha256_file(data_path)
        assert "signpipe" in doc["versions"]
        assert doc["timestamp"]
