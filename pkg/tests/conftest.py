import csv

import numpy as np
import pytest

from brforest.data import CONTINUOUS, Dataset


@pytest.fixture
def write_csv(tmp_path):
    def _write(rows, name="table.csv"):
        path = tmp_path / name
        with open(path, "w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        return str(path)
    return _write


def make_dataset(X, y, name="toy"):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    return Dataset(X, np.asarray(y), [CONTINUOUS] * X.shape[1], name=name)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
