"""Reference predictors: naive input average, zeros, and last-frame persistence."""

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import InvalidInputError, check_movie
from .grid import round_half_up
from .slots import INPUT_FRAMES, TRUTH_OFFSETS

HORIZON = len(TRUTH_OFFSETS)


def _inputs(x):
    x, batched = check_movie(x, frames=INPUT_FRAMES, name="input")
    return x, batched


def _repeat(frame, batched):
    axis = 1 if batched else 0
    return np.repeat(np.expand_dims(frame, axis), HORIZON, axis=axis)


def naive_average(x):
    """Every output frame is the rounded mean of the 12 input frames."""
    x, batched = _inputs(x)
    axis = 1 if batched else 0
    total = x.sum(axis=axis, dtype=np.int64)
    mean = round_half_up(total / INPUT_FRAMES).astype(np.uint8)
    return _repeat(mean, batched)


def zeros(x):
    x, batched = _inputs(x)
    shape = (x.shape[0], HORIZON) + x.shape[2:] if batched else (HORIZON,) + x.shape[1:]
    return np.zeros(shape, np.uint8)


def persistence(x):
    """Repeat the last input frame for all six horizons."""
    x, batched = _inputs(x)
    last = x[:, -1] if batched else x[-1]
    return _repeat(last, batched)


METHODS = {
    "naive-average": naive_average,
    "zeros": zeros,
    "persistence": persistence,
}


def predict(method, x):
    try:
        fn = METHODS[method]
    except KeyError:
        raise InvalidInputError(f"unknown baseline {method!r}; choose from {sorted(METHODS)}") from None
    return fn(x)


class BaselineForecaster(BaseEstimator):
    """Stateless forecaster over ``(n, 12, rows, cols, 8)`` inputs."""

    def __init__(self, method="naive-average"):
        self.method = method

    def fit(self, X=None, y=None):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown baseline {self.method!r}")
        return self

    def predict(self, X):
        return predict(self.method, X)
