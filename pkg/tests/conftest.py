import numpy as np
import pytest

from datavalue import (
    Dataset,
    ModelKind,
    SplitConfig,
    default_spec,
    filter_iris_2d,
    load_iris,
    train_test_split,
)


@pytest.fixture(scope="session")
def iris():
    return load_iris()


@pytest.fixture(scope="session")
def iris_2d(iris):
    return filter_iris_2d(iris)


@pytest.fixture(scope="session")
def iris_split(iris_2d):
    """The 80/20 experimental split at seed 0."""
    return train_test_split(iris_2d, SplitConfig(test_count=20, seed=0))


@pytest.fixture
def toy_pair():
    """Two separable points, one per class."""
    return Dataset([[0.0, 0.0], [1.0, 1.0]], [0, 1], [0, 1])


@pytest.fixture
def separable_quad():
    """Four points, cleanly separable by x1 + x2."""
    return Dataset(
        [[0.0, 0.0], [0.0, 1.0], [3.0, 3.0], [3.0, 4.0]],
        [0, 0, 1, 1],
        [0, 1, 2, 3],
    )


@pytest.fixture(params=[ModelKind.LOGISTIC, ModelKind.LINEAR_SVM])
def any_spec(request):
    return default_spec(request.param)
