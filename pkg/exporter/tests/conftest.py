import pytest

import tinybert


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """A local miniature encoder checkpoint, built once per session."""
    return str(tinybert.build(tmp_path_factory.mktemp("model") / "tinybert"))
