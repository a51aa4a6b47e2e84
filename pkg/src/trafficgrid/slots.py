"""Competition-style test slots: one hour of input, six future frames as truth."""

import datetime as dt
import json
from dataclasses import dataclass

import numpy as np

from ._validation import InvalidInputError, check_movie
from .grid import BINS_PER_DAY
from .tensorio import read_tensor, write_tensor

INPUT_FRAMES = 12
TRUTH_OFFSETS = (12, 13, 14, 17, 20, 23)  # 5, 10, 15, 30, 45, 60 min after the last input frame
MAX_START = 240
RNG_ALGORITHM = "numpy.random.Generator(PCG64).choice(replace=False)"


@dataclass
class TestSlot:
    __test__ = False  # keep pytest from collecting this class

    city: str
    date: dt.date
    start_bin: int
    input: np.ndarray
    truth: np.ndarray

    @property
    def day_of_week(self):
        return self.date.weekday()

    @property
    def meta(self):
        return np.array([self.day_of_week, self.start_bin], dtype=np.uint8)


def _as_date(d):
    if isinstance(d, dt.datetime):
        return d.date()
    if isinstance(d, dt.date):
        return d
    return dt.date.fromisoformat(str(d))


def slice_slot(day, start_bin, date, city=""):
    """Cut the input window and the six truth frames starting at ``start_bin``."""
    day, _ = check_movie(day, frames=BINS_PER_DAY, name="day", allow_batch=False)
    if not 0 <= start_bin <= BINS_PER_DAY - 1 - TRUTH_OFFSETS[-1]:
        raise InvalidInputError(f"start_bin {start_bin} leaves no room for a full slot")
    return TestSlot(
        city=city,
        date=_as_date(date),
        start_bin=int(start_bin),
        input=day[start_bin:start_bin + INPUT_FRAMES].copy(),
        truth=day[[start_bin + o for o in TRUTH_OFFSETS]].copy(),
    )


class _DayCache:
    def __init__(self, days):
        self.items = [(_as_date(d), src) for d, src in days]
        self._loaded = {}

    def __len__(self):
        return len(self.items)

    def get(self, i):
        if i not in self._loaded:
            src = self.items[i][1]
            self._loaded[i] = src if isinstance(src, np.ndarray) else read_tensor(src)
        return self._loaded[i]


def sample_slots(days, n, seed, city=""):
    """Draw ``n`` distinct (day, start_bin) pairs uniformly, start_bin in [0, 240].

    ``days`` is a sequence of ``(date, day)`` where ``day`` is a
    ``(288, rows, cols, 8)`` array or a tensor file path. Sampling order is
    the draw order and depends only on ``seed`` and ``len(days)``.
    """
    cache = _DayCache(days)
    n_starts = MAX_START + 1
    total = len(cache) * n_starts
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    if n > total:
        raise InvalidInputError(f"requested {n} slots but only {total} (day, start) pairs exist")
    rng = np.random.Generator(np.random.PCG64(seed))
    picks = rng.choice(total, size=n, replace=False)
    slots = []
    for p in picks.tolist():
        i, start = divmod(p, n_starts)
        slots.append(slice_slot(cache.get(i), start, cache.items[i][0], city))
    return slots


def split_test_file(slots):
    """Stack slots into ``(inputs, truths, meta)`` arrays, preserving order."""
    slots = list(slots)
    if not slots:
        raise InvalidInputError("no slots to split")
    grid = slots[0].input.shape[1:3]
    for s in slots:
        if s.input.shape[1:3] != grid or s.truth.shape[1:3] != grid:
            raise InvalidInputError(f"slot grid {s.input.shape[1:3]} differs from {grid}")
    inputs = np.stack([s.input for s in slots])
    truths = np.stack([s.truth for s in slots])
    meta = np.stack([s.meta for s in slots])
    return inputs, truths, meta


def write_test_files(slots, out_prefix, seed=None, compress=False, suffix=".h5"):
    """Write input, truth and meta tensors as separate files plus a JSON slot listing.

    Returns the dict of written paths.
    """
    inputs, truths, meta = split_test_file(slots)
    paths = {
        "input": f"{out_prefix}_input{suffix}",
        "truth": f"{out_prefix}_truth{suffix}",
        "meta": f"{out_prefix}_meta{suffix}",
        "slots": f"{out_prefix}_slots.json",
    }
    write_tensor(paths["input"], inputs, compress=compress)
    write_tensor(paths["truth"], truths, compress=compress)
    write_tensor(paths["meta"], meta)
    with open(paths["slots"], "w") as f:
        json.dump({
            "rng": RNG_ALGORITHM,
            "seed": seed,
            "slots": [
                {"city": s.city, "date": s.date.isoformat(), "start_bin": s.start_bin, "day_of_week": s.day_of_week}
                for s in slots
            ],
        }, f, indent=2)
    return paths
