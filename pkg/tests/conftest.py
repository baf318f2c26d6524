import numpy as np
import pytest

from dynslam.synthetic import SceneConfig, render_sequence


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def scene():
    return SceneConfig()


@pytest.fixture(scope="session")
def sequence_dir(tmp_path_factory, scene):
    """a rendered synthetic sequence shared by the slow tests"""
    return render_sequence(str(tmp_path_factory.mktemp("synthetic")), scene)
