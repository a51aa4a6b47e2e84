import datetime as dt
import json
from collections import Counter

import numpy as np
import pytest

from trafficgrid import InvalidInputError
from trafficgrid.slots import (
    MAX_START,
    RNG_ALGORITHM,
    TestSlot,
    sample_slots,
    slice_slot,
    split_test_file,
    write_test_files,
)
from trafficgrid.tensorio import read_tensor, write_tensor


def frame_day(rows=2, cols=3, tag=0):
    """Every voxel of frame t holds t (and a per-day tag in channel 7) so slices are traceable."""
    d = np.zeros((288, rows, cols, 8), np.uint8)
    d[..., :7] = (np.arange(288) % 256)[:, None, None, None]
    d[..., 7] = tag
    return d


def test_single_day_offsets():
    d = frame_day()
    (s,) = sample_slots([(dt.date(2020, 4, 7), d)], 1, seed=1)
    assert 0 <= s.start_bin <= 240
    assert np.array_equal(s.input[:, 0, 0, 0], (s.start_bin + np.arange(12)) % 256)
    assert list(s.truth[:, 0, 0, 0]) == [(s.start_bin + o) % 256 for o in (12, 13, 14, 17, 20, 23)]


def test_deterministic_seed():
    days = [(dt.date(2020, 4, 1), frame_day()), (dt.date(2020, 4, 2), frame_day(tag=1))]
    a = sample_slots(days, 30, seed=7)
    b = sample_slots(days, 30, seed=7)
    c = sample_slots(days, 30, seed=8)
    key = lambda slots: [(s.date, s.start_bin) for s in slots]
    assert key(a) == key(b) != key(c)


def test_exhaustive_draw():
    days = [(dt.date(2020, 4, 1), frame_day(tag=0)), (dt.date(2020, 4, 2), frame_day(tag=1))]
    slots = sample_slots(days, 482, seed=3)
    pairs = Counter((s.date, s.start_bin) for s in slots)
    expected = {(d, b) for d, _ in days for b in range(241)}
    assert set(pairs) == expected and set(pairs.values()) == {1}
    for s in slots:
        assert s.input[0, 0, 0, 7] == (s.date.day - 1)


def test_too_many():
    with pytest.raises(InvalidInputError):
        sample_slots([(dt.date(2020, 4, 1), frame_day())], 242, seed=0)
    with pytest.raises(InvalidInputError):
        sample_slots([(dt.date(2020, 4, 1), frame_day())], 0, seed=0)


def test_metadata_weekday():
    days = [(dt.date(2020, 4, 6) + dt.timedelta(days=i), frame_day()) for i in range(7)]
    for s in sample_slots(days, 50, seed=11):
        assert s.meta[0] == s.date.weekday() == s.day_of_week
        assert s.meta[1] == s.start_bin
    assert sample_slots([(dt.date(2020, 4, 6), frame_day())], 1, 0)[0].day_of_week == 0  # Monday


def test_start_bins_roughly_uniform():
    days = [(dt.date(2020, 4, 1) + dt.timedelta(days=i), frame_day(1, 1)) for i in range(40)]
    starts = np.array([s.start_bin for seed in range(10) for s in sample_slots(days, 400, seed)])
    counts = np.bincount(starts // 24, minlength=11)[:10]  # 10 buckets of 24 starts each
    expected = len(starts) * 24 / 241
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 27.9  # chi-square, 9 dof, p = 0.001
    assert starts.max() <= MAX_START


def test_split_shapes_default_grid():
    slots = [TestSlot("c", dt.date(2020, 4, 1), 0, np.zeros((12, 495, 436, 8), np.uint8),
                      np.zeros((6, 495, 436, 8), np.uint8))] * 100
    i, t, m = split_test_file(slots)
    assert i.shape == (100, 12, 495, 436, 8) and t.shape == (100, 6, 495, 436, 8) and m.shape == (100, 2)


def test_split_errors():
    with pytest.raises(InvalidInputError):
        split_test_file([])
    a = slice_slot(frame_day(2, 3), 0, "2020-04-01")
    b = slice_slot(frame_day(3, 3), 0, "2020-04-01")
    with pytest.raises(InvalidInputError):
        split_test_file([a, b])


def test_slice_bounds():
    with pytest.raises(InvalidInputError):
        slice_slot(frame_day(), 265, "2020-04-01")
    assert slice_slot(frame_day(), 264, "2020-04-01").truth[-1, 0, 0, 0] == 287 % 256


def test_write_read_back(tmp_path):
    days = [(dt.date(2020, 4, 1), frame_day(tag=5))]
    slots = sample_slots(days, 5, seed=2, city="x")
    paths = write_test_files(slots, tmp_path / "t", seed=2)
    i, t, m = split_test_file(slots)
    assert np.array_equal(read_tensor(paths["input"]), i)
    assert np.array_equal(read_tensor(paths["truth"]), t)
    assert np.array_equal(read_tensor(paths["meta"]), m)
    doc = json.loads(open(paths["slots"]).read())
    assert doc["rng"] == RNG_ALGORITHM and doc["seed"] == 2
    assert [s["start_bin"] for s in doc["slots"]] == [s.start_bin for s in slots]
    assert paths["truth"] != paths["input"]


def test_sample_from_files(tmp_path):
    write_tensor(tmp_path / "d.h5", frame_day())
    (s,) = sample_slots([("2020-04-01", tmp_path / "d.h5")], 1, seed=0)
    assert s.date == dt.date(2020, 4, 1)
