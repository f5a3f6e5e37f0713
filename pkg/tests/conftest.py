import pytest

# Short protocol used by tests that run the full pipeline.
FAST = """
experiment.baseline = 0.8
experiment.training = 1.0
experiment.test = 0.8
experiment.silence = 0.2
"""


@pytest.fixture
def fast_config(tmp_path):
    path = tmp_path / "fast.cfg"
    path.write_text(FAST)
    return path
