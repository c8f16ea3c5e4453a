from pathlib import Path

import pytest

from pipeline_util import run_pipeline


@pytest.fixture(scope="session")
def golden_vectors(tmp_path_factory) -> Path:
    """100 golden loss cases emitted by the data pipeline."""
    path = tmp_path_factory.mktemp("golden") / "golden_vectors.json"
    run_pipeline("loss", "golden", "-o", path, "--count", 100, "--vocab-size", 12,
                 "--seed", 29, "-q")
    return path
