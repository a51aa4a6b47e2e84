import numpy as np
import pytest

from trafficgrid import baselines
from trafficgrid._validation import InvalidInputError
from trafficgrid.baselines import BaselineForecaster, naive_average, persistence, predict, zeros
from trafficgrid.metrics import mse


def _inputs(rng, n=None, rows=5, cols=6):
    shape = (12, rows, cols, 8) if n is None else (n, 12, rows, cols, 8)
    return rng.integers(0, 256, shape, dtype=np.uint8)


def test_constant_input_reproduced():
    x = np.full((12, 4, 4, 8), 77, np.uint8)
    out = naive_average(x)
    assert out.shape == (6, 4, 4, 8) and out.dtype == np.uint8
    assert (out == 77).all()


def test_alternating_extremes_round_up():
    x = np.zeros((12, 3, 3, 8), np.uint8)
    x[1::2] = 255
    # mean 127.5 rounds half up
    assert (naive_average(x) == 128).all()


def test_naive_matches_float_mean(rng):
    x = _inputs(rng, n=3)
    expected = np.floor(x.astype(np.float64).mean(axis=1) + 0.5).astype(np.uint8)
    out = naive_average(x)
    assert out.shape == (3, 6, 5, 6, 8)
    for h in range(6):
        np.testing.assert_array_equal(out[:, h], expected)


def test_zeros_mse_is_mean_square_of_truth(rng):
    x = _inputs(rng, n=2)
    truth = _inputs(rng, n=2)[:, :6]
    rep = mse(zeros(x), truth)
    assert rep.mse_all == pytest.approx((truth.astype(np.float64) ** 2).mean(), rel=1e-12)


def test_persistence_repeats_last_frame(rng):
    x = _inputs(rng)
    out = persistence(x)
    assert out.shape == (6,) + x.shape[1:]
    assert all((out[h] == x[-1]).all() for h in range(6))


def test_ramp_naive_lags_more_than_persistence():
    # volume rising by 2 per bin: inputs 0..22, truth at offsets 12,13,14,17,20,23
    t = np.arange(24) * 2
    movie = np.broadcast_to(t[:, None, None, None], (24, 2, 2, 8)).astype(np.uint8)
    x = movie[:12]
    truth = movie[[12, 13, 14, 17, 20, 23]]
    target = np.array([24, 26, 28, 34, 40, 46], float)
    naive_err = ((target - 11) ** 2).mean()  # mean of 0..22 is 11
    pers_err = ((target - 22) ** 2).mean()
    assert mse(naive_average(x), truth).mse_all == pytest.approx(naive_err)
    assert mse(persistence(x), truth).mse_all == pytest.approx(pers_err)
    assert naive_err > pers_err


def test_predict_dispatch_and_unknown(rng):
    x = _inputs(rng)
    for name, fn in baselines.METHODS.items():
        np.testing.assert_array_equal(predict(name, x), fn(x))
    with pytest.raises(InvalidInputError):
        predict("oracle", x)


def test_wrong_frame_count_rejected():
    with pytest.raises(InvalidInputError):
        naive_average(np.zeros((11, 2, 2, 8), np.uint8))


def test_estimator_api(rng):
    est = BaselineForecaster(method="persistence")
    assert est.get_params() == {"method": "persistence"}
    x = _inputs(rng, n=2)
    np.testing.assert_array_equal(est.fit(x).predict(x), persistence(x))
    est.set_params(method="zeros")
    assert not est.predict(x).any()
    with pytest.raises(InvalidInputError):
        BaselineForecaster(method="nope").fit()
