import warnings

import numpy as np
import pytest

from smcae.datasets import load_optdigits, make_desk_dataset


@pytest.fixture(scope="session")
def desk_data_dir(tmp_path_factory):
    """Desk-scale optdigits directory built from the real bundled instances."""
    directory = tmp_path_factory.mktemp("deskdata")
    make_desk_dataset(directory, seed=0)
    return directory


@pytest.fixture(scope="session")
def desk_data(desk_data_dir):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # expected subset-size warning
        return load_optdigits(desk_data_dir)


def disk_image(h, w, cy, cx, r):
    yy, xx = np.mgrid[0:h, 0:w]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r ** 2
