"""Day-level analyses emitted as tables: daily volume curves and pixel time series."""

from dataclasses import dataclass

import numpy as np
import pandas as pd

from ._validation import InvalidInputError, check_movie
from .grid import BINS_PER_DAY, VOLUME_CHANNELS, HeadingQuadrant
from .tensorio import read_tensor


def _as_day(day):
    if isinstance(day, np.ndarray):
        x = day
    else:
        x = read_tensor(day)
    x, _ = check_movie(x, frames=BINS_PER_DAY, name="day", allow_batch=False)
    return x


@dataclass
class DailyVolumeCurve:
    values: np.ndarray
    label: str
    n_days: int

    def to_frame(self):
        return pd.DataFrame({"bin": np.arange(len(self.values)), "value": self.values, "label": self.label})

    def to_csv(self, path):
        self.to_frame().to_csv(path, index=False)


def daily_volume_curve(days, label=""):
    """Per-bin sum of the four volume channels over the grid, averaged over days."""
    days = list(days)
    if not days:
        raise InvalidInputError("daily_volume_curve needs at least one day")
    total = np.zeros(BINS_PER_DAY, np.int64)
    for d in days:
        x = _as_day(d)
        total += x[..., list(VOLUME_CHANNELS)].sum(axis=(1, 2, 3), dtype=np.int64)
    return DailyVolumeCurve(total / len(days), label, len(days))


def pixel_timeseries(days, row, col, heading):
    """288-bin (volume, speed) series for one directional pixel.

    With several days the table carries per-bin mean and population std
    across days instead of the raw values.
    """
    if isinstance(days, np.ndarray) and days.ndim == 4:
        days = [days]
    days = [_as_day(d) for d in days]
    if not days:
        raise InvalidInputError("pixel_timeseries needs at least one day")
    rows, cols = days[0].shape[1:3]
    if not (0 <= row < rows and 0 <= col < cols):
        raise InvalidInputError(f"pixel ({row}, {col}) outside grid {rows}x{cols}")
    q = HeadingQuadrant.parse(heading)
    vol = np.stack([d[:, row, col, q.volume_channel] for d in days]).astype(np.float64)
    spd = np.stack([d[:, row, col, q.speed_channel] for d in days]).astype(np.float64)
    bins = np.arange(BINS_PER_DAY)
    if len(days) == 1:
        return pd.DataFrame({"bin": bins, "volume": vol[0].astype(np.int64), "speed": spd[0].astype(np.int64)})
    return pd.DataFrame({
        "bin": bins,
        "volume_mean": vol.mean(axis=0),
        "volume_std": vol.std(axis=0),
        "speed_mean": spd.mean(axis=0),
        "speed_std": spd.std(axis=0),
    })
