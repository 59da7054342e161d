import numpy as np
import pytest

from aps_lab.losses import LevelLosses, LossField


def random_loss_field(rng, max_levels=5, max_points=200, instance_id=0, scale=1.0):
    """Loss field with 1..max_levels levels and at most max_points points in total."""
    n_levels = int(rng.integers(1, max_levels + 1))
    budget = int(rng.integers(1, max_points + 1))
    cuts = np.sort(rng.integers(0, budget + 1, size=n_levels - 1))
    counts = np.diff(np.concatenate([[0], cuts, [budget]]))
    levels = {}
    for lvl, n in enumerate(counts):
        width = int(rng.integers(1, 16))
        idx = np.arange(n)
        cells = np.stack([idx % width, idx // width], axis=1).astype(np.int64)
        cls = rng.exponential(scale, n)
        reg = rng.exponential(scale * 0.5, n)
        # occasional exact ties in the combined loss
        if n > 3 and rng.random() < 0.3:
            cls[1], reg[1] = cls[0], reg[0]
        levels[lvl] = LevelLosses(lvl, cells, cls, reg)
    return LossField(instance_id, levels)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
