import pytest
import numpy as np
import tempfile
import os

from src.services.dist import DiscreteDist
from src.services.neyman import discrete_pair
from src.services.tofcurve import alpha_grid


@pytest.fixture
def rng():
    """Seeded generator for reproducible random pairs."""
    return np.random.default_rng(42)


@pytest.fixture
def grid():
    """Coarse alpha grid for pointwise curve comparisons."""
    return alpha_grid(1e-3)


@pytest.fixture
def random_pair_factory(rng):
    """Build random discrete pairs on a few shared labels with full support."""

    def make(size=None):
        size = size or int(rng.integers(2, 6))
        labels = np.arange(size, dtype=float)
        p = rng.dirichlet(np.ones(size))
        q = rng.dirichlet(np.ones(size))
        return discrete_pair(
            DiscreteDist.from_atoms(labels, p, prune=0.0),
            DiscreteDist.from_atoms(labels, q, prune=0.0),
        )

    return make


@pytest.fixture
def temp_output_dir():
    """Create a temporary directory for CSV and JSON outputs."""
    with tempfile.TemporaryDirectory() as tmp_dir:
        out_dir = os.path.join(tmp_dir, "exports")
        os.makedirs(out_dir, exist_ok=True)
        yield out_dir


@pytest.fixture
def tight_params():
    """Mechanism calibrated on g in {0, 1} with baseline Poisson(1) vs Poisson(3)."""
    from src.services.mechanism import StatRange, calibrate

    return calibrate(1.0, 3.0, StatRange(0.0, 1.0, 1.0))
