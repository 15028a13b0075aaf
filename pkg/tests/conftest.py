import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import numpy as np
import pytest

from structcore.features import PatchFeatureSet


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_feature_set(image_id="img0", layer_ids=(-1, -3), p=4, dims=(3, 3),
                     grid=(2, 2), label="good", mask=None, rng=None):
    rng = rng or np.random.default_rng(0)
    layers = {
        lid: rng.standard_normal((p, d)).astype(np.float32)
        for lid, d in zip(layer_ids, dims)
    }
    return PatchFeatureSet(
        image_id=image_id,
        layer_ids=list(layer_ids),
        layers=layers,
        grid_h=grid[0],
        grid_w=grid[1],
        label=label,
        pixel_mask=mask,
    )
