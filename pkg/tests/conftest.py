import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import build_toy_dataset  # noqa: E402

from addpipe.coco import load_dataset  # noqa: E402


@pytest.fixture(scope="session")
def toy_dataset_files(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy_dataset")
    return build_toy_dataset(root)


@pytest.fixture(scope="session")
def toy_index(toy_dataset_files):
    return load_dataset(toy_dataset_files["annotations"])
