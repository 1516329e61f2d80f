import pytest

from active_manip.config import PipelineConfig
from active_manip.env.demos import read_demos
from active_manip.viewgen.dataset import generate_dataset, read_dataset, write_dataset
from active_manip.world.camera import CameraState
from tests.factories import make_tiny_config, write_demo_set

TINY_VIEWS = 16


@pytest.fixture
def camera():
    return CameraState()


@pytest.fixture
def pipeline_config():
    return PipelineConfig()


@pytest.fixture
def tiny_config():
    """Small but complete configuration for fast end-to-end tests."""
    return make_tiny_config()


@pytest.fixture(scope="session")
def tiny_views_dir(tmp_path_factory):
    """A written view dataset matching ``tiny_config``."""
    out_dir = tmp_path_factory.mktemp("tiny_views")
    write_dataset(generate_dataset(TINY_VIEWS, make_tiny_config(), seed=1), out_dir)
    return out_dir


@pytest.fixture(scope="session")
def tiny_demos_dir(tmp_path_factory):
    """A written demonstration set matching ``tiny_config``."""
    return write_demo_set(make_tiny_config(), tmp_path_factory.mktemp("tiny_demos"))


@pytest.fixture
def tiny_views(tiny_views_dir):
    return read_dataset(tiny_views_dir)


@pytest.fixture
def tiny_demos(tiny_demos_dir):
    return read_demos(tiny_demos_dir)
