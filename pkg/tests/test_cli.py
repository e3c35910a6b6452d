import json

import pytest

from signpipe.cli import main


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Synthetic corpus generated through the CLI itself."""
    root = tmp_path_factory.mktemp("cliwork")
    code = main(
        ["--seed", "5", "--out", str(root / "corpus"), "synth", "--tablets", "6", "--classes", "6"]
    )
    assert code == 0
    return root


def corpus_args(workdir):
    return [str(workdir / "corpus" / "dataset.json"), "--images", str(workdir / "corpus" / "images")]


class TestSynthAndStats:
    def test_synth_outputs(self, workdir):
        corpus = workdir / "corpus"
        assert (corpus / "dataset.json").is_file()
        assert (corpus / "manifest.json").is_file()
        dataset = json.loads((corpus / "dataset.json").read_text())
        assert len(dataset["images"]) == 6
        for img in dataset["images"]:
            assert (corpus / "images" / img["file_name"]).is_file()

    def test_stats_report(self, workdir):
        out = workdir / "stats"
        code = main(
            ["--out", str(out), "stats", str(workdir / "corpus" / "dataset.json"),
             "--scatter-csv", "scatter.csv"]
        )
        assert code == 0
        doc = json.loads((out / "stats.json").read_text())
        assert {"rank_frequency", "power_law", "broken_power_law", "coverage"} <= set(doc)
        assert (out / "scatter.csv").read_text().startswith("rank,count")

    def test_split(self, workdir):
        out = workdir / "split"
        code = main(
            ["--seed", "3", "--out", str(out), "split",
             str(workdir / "corpus" / "dataset.json"), "--k", "3"]
        )
        assert code == 0
        doc = json.loads((out / "folds.json").read_text())
        assert doc["k"] == 3
        assert len(doc["tablet_to_fold"]) == 6


class TestPipelineCommands:
    def test_detect_then_lines(self, workdir):
        out = workdir / "det"
        code = main(
            ["--out", str(out), "detect", *corpus_args(workdir), "--detector", "baseline"]
        )
        assert code == 0
        preds = json.loads((out / "detections.json").read_text())
        assert preds["images"]
        lines_out = workdir / "lines"
        code = main(
            ["--out", str(lines_out), "lines", str(workdir / "corpus" / "dataset.json"),
             "--predictions", str(out / "detections.json"), "--svg"]
        )
        assert code == 0
        doc = json.loads((lines_out / "lines.json").read_text())
        first = next(iter(doc.values()))
        assert "reading_sequence" in first
        assert list(lines_out.glob("*_lines.svg"))

    def test_train_then_classify(self, workdir):
        model_out = workdir / "model"
        code = main(
            ["--out", str(model_out), "train-baseline", *corpus_args(workdir)]
        )
        assert code == 0
        assert (model_out / "centroid_model.npz").is_file()
        cls_out = workdir / "cls"
        code = main(
            ["--out", str(cls_out), "classify", *corpus_args(workdir),
             "--classifier", f"centroid:{model_out / 'centroid_model.npz'}"]
        )
        assert code == 0
        doc = json.loads((cls_out / "classifications.json").read_text())
        some_boxes = next(iter(doc["images"]))["boxes"]
        assert some_boxes[0]["class_scores"]

    def test_transliterate_oracle(self, workdir):
        out = workdir / "translit"
        code = main(
            ["--out", str(out), "transliterate", *corpus_args(workdir),
             "--detector", "oracle", "--classifier", "oracle"]
        )
        assert code == 0
        doc = json.loads((out / "transliteration.json").read_text())
        dataset = json.loads((workdir / "corpus" / "dataset.json").read_text())
        ref = [a["class_id"] for a in dataset["images"][0]["annotations"]]
        assert doc[0]["top1_sequence"] == ref

    def test_evaluate_oracle(self, workdir):
        out = workdir / "eval"
        code = main(
            ["--seed", "1", "--out", str(out), "evaluate", *corpus_args(workdir),
             "--detector", "oracle", "--classifier", "oracle", "--folds", "2"]
        )
        assert code == 0
        doc = json.loads((out / "evaluation.json").read_text())
        assert doc["aggregate"]["ap50"]["mean"] == pytest.approx(1.0)
        assert (out / "per_class.csv").read_text().splitlines()[0].startswith("fold,class_id")

    def test_embed_small(self, workdir):
        out = workdir / "embed"
        code = main(
            ["--seed", "2", "--out", str(out), "embed", *corpus_args(workdir),
             "--classifier", "oracle", "--components", "4",
             "--perplexity", "8", "--iterations", "60"]
        )
        assert code == 0
        doc = json.loads((out / "purity.json").read_text())
        assert doc["kl_final"] < doc["kl_initial"]
        rows = (out / "scatter.csv").read_text().splitlines()
        dataset = json.loads((workdir / "corpus" / "dataset.json").read_text())
        total = sum(len(i["annotations"]) for i in dataset["images"])
        assert len(rows) == total + 1  # header

    def test_config_file_toml(self, workdir, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text('detector = "oracle"\nclassifier = "oracle"\nscore_threshold = 0.25\n')
        out = workdir / "translit2"
        code = main(
            ["--config", str(config), "--out", str(out), "transliterate",
             *corpus_args(workdir)]
        )
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["config"]["detector"] == "oracle"
        assert manifest["config"]["score_threshold"] == 0.25

    def test_ingest_crop_rewrites_images(self, workdir, tmp_path):
        from signpipe.dataset import load_dataset
        from signpipe.images import load_grayscale

        out = tmp_path / "ingested"
        code = main(
            ["--out", str(out), "ingest", str(workdir / "corpus" / "dataset.json"),
             "--images", str(workdir / "corpus" / "images"), "--crop"]
        )
        assert code == 0
        cropped = load_dataset(out / "dataset.json")
        original = load_dataset(workdir / "corpus" / "dataset.json")
        for before, after in zip(original.images, cropped.images):
            assert after.width <= before.width and after.height <= before.height
            pixels = load_grayscale(out / "images" / after.file_name)
            assert pixels.shape == (after.height, after.width)
            for ann in after.annotations:
                assert 0 <= ann.bbox.x_min and ann.bbox.x_max <= after.width
                assert 0 <= ann.bbox.y_min and ann.bbox.y_max <= after.height

    def test_error_paths_return_1(self, tmp_path, capsys):
        assert main(["stats", str(tmp_path / "missing.json")]) == 1
        assert "error:" in capsys.readouterr().err
