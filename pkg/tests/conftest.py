import pytest

from signpipe.dataset import Annotation, BoundingBox, Dataset, ImageRecord, SignClass
from signpipe.synthetic import SynthConfig, generate_synthetic


def make_dataset():
    """Small hand-built 3-image fixture over 2 tablets."""
    catalog = [SignClass(0, "DIŠ"), SignClass(1, "U"), SignClass(2, "MEŠ")]
    images = [
        ImageRecord(
            image_id="img-a",
            tablet_id="tab-1",
            file_name="img-a.png",
            width=100,
            height=80,
            annotations=[
                Annotation("a1", BoundingBox(10, 20, 30, 40), 0),
                Annotation("a2", BoundingBox(50, 30, 70, 50), 2),
            ],
        ),
        ImageRecord(
            image_id="img-b",
            tablet_id="tab-1",
            file_name="img-b.png",
            width=60,
            height=60,
            annotations=[Annotation("b1", BoundingBox(5, 5, 25, 25), 1)],
        ),
        ImageRecord(
            image_id="img-c",
            tablet_id="tab-2",
            file_name="img-c.png",
            width=200,
            height=150,
            annotations=[],
        ),
    ]
    return Dataset(catalog=catalog, images=images)


@pytest.fixture
def small_dataset():
    return make_dataset()


@pytest.fixture(scope="session")
def flat_corpus():
    """Deterministic flat-line corpus with rendered pixels, shared across
    tests that exercise the baseline backends."""
    config = SynthConfig(num_classes=10, tablets=12, slope_range=(0.0, 0.0))
    dataset, arrays = generate_synthetic(config, seed=7)
    return dataset, arrays
