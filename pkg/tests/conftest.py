"""Shared test fixtures for pytest."""
import sys
import os
import pytest
import tempfile
import shutil

# Keep the debug log out of the working tree; must run before utils.config is imported.
os.environ.setdefault("CRLAB_LOG_PATH", os.path.join(tempfile.gettempdir(), "crlab_test_debug.log"))

# Add parent directory to path so we can import from project
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))


@pytest.fixture
def temp_dir():
    """Create a temporary directory for test files."""
    tmpdir = tempfile.mkdtemp()
    yield tmpdir
    shutil.rmtree(tmpdir, ignore_errors=True)


@pytest.fixture(scope="session")
def round_model():
    """Round unit-mass sphere, beta = (1, 1)."""
    from core.models import make_weighted_sphere
    return make_weighted_sphere(1.0, 1.0, 32)


@pytest.fixture(scope="session")
def weighted_model():
    """Weighted sphere with beta = (2, 3)."""
    from core.models import make_weighted_sphere
    return make_weighted_sphere(2.0, 3.0, 32)


@pytest.fixture(scope="session")
def bump():
    """Standard bump on (0.25, 0.75)."""
    from core.cutoff import make_bump
    return make_bump(0.25, 0.75)


@pytest.fixture(scope="session")
def round_samples(round_model):
    from core.models import sample_points
    return tuple(sample_points(round_model, "hopf-grid", 40))


@pytest.fixture
def small_config(temp_dir):
    """Raw RunConfig small enough for end-to-end runs."""
    return {
        "model": {"p": 1.0, "q": 1.0, "resolution": 16},
        "k_grid": [16, 32, 64, 128],
        "samples": {"scheme": "hopf-grid", "count": 24, "quasi_random_count": 8, "seed": 11},
        "continuation": {"epsilons": [0.05, 0.1, 0.5]},
        "output_dir": os.path.join(temp_dir, "out"),
    }
