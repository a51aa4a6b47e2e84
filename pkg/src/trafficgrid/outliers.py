"""Jam-like outlier detection at single directional pixels, and its scoring.

A bin is a candidate when, at one directional pixel, volume exceeds the
pixel's daily volume quantile and ``min_volume``, speed is below the daily
speed quantile, and the bin lies in the daytime window. Maximal candidate
runs of at least ``min_consecutive`` bins become events when the run's mean
volume is high and mean speed low relative to the trailing context window.
"""

import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator

from ._validation import InvalidInputError, check_movie
from .grid import BINS_PER_DAY, SPEED_CHANNELS, VOLUME_CHANNELS, HeadingQuadrant
from .slots import INPUT_FRAMES, TRUTH_OFFSETS, slice_slot

EVENT_COLUMNS = ("row", "col", "heading", "start_bin", "duration")


@dataclass(frozen=True)
class OutlierEvent:
    row: int
    col: int
    heading: HeadingQuadrant
    start_bin: int
    duration: int

    def __post_init__(self):
        if self.duration < 2:
            raise InvalidInputError("outlier duration must be >= 2 bins")
        object.__setattr__(self, "heading", HeadingQuadrant.parse(self.heading))

    @property
    def bins(self):
        return range(self.start_bin, self.start_bin + self.duration)


@dataclass(frozen=True)
class OutlierCriteria:
    vol_quantile: float = 0.90
    speed_quantile: float = 0.05
    min_volume: float = 5
    window: tuple = (96, 240)  # half-open bin range, 8AM to 8PM
    min_consecutive: int = 2
    vol_mean_factor: float = 1.5
    speed_mean_factor: float = 0.7
    context_bins: int = 24  # trailing 2h

    def __post_init__(self):
        for q in (self.vol_quantile, self.speed_quantile):
            if not 0 < q < 1:
                raise InvalidInputError(f"quantiles must lie in (0, 1), got {q}")
        if not (self.vol_mean_factor > 0 and self.speed_mean_factor > 0):
            raise InvalidInputError("mean factors must be positive")
        if self.min_consecutive < 2:
            raise InvalidInputError("min_consecutive must be >= 2")
        if self.context_bins < 1:
            raise InvalidInputError("context_bins must be >= 1")
        lo, hi = self.window
        object.__setattr__(self, "window", (int(lo), int(hi)))

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "context_hours" in d:
            d["context_bins"] = int(round(d.pop("context_hours") * 12))
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown outlier criteria fields: {sorted(unknown)}")
        if "window" in d:
            d["window"] = tuple(d["window"])
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self):
        return asdict(self)


def nearest_rank(values, q, axis=0):
    """Nearest-rank quantile: the ceil(q*N)-th smallest value along ``axis``."""
    values = np.asarray(values)
    n = values.shape[axis]
    k = min(max(math.ceil(q * n), 1), n) - 1
    return np.partition(values, k, axis=axis).take(k, axis=axis)


def channel_quantiles(day, q):
    """Per (row, col, heading) nearest-rank quantiles of volume and speed over the day.

    Returns ``(volume_q, speed_q)``, each ``(rows, cols, 4)``.
    """
    day, _ = check_movie(day, frames=BINS_PER_DAY, name="day", allow_batch=False)
    vq = nearest_rank(day[..., list(VOLUME_CHANNELS)], q)
    sq = nearest_rank(day[..., list(SPEED_CHANNELS)], q)
    return vq, sq


def _runs(flags):
    """Maximal True runs along axis 0 of a 2-d bool array -> (pixel, start, length)."""
    t, p = flags.shape
    pad = np.zeros((1, p), dtype=np.int8)
    edges = np.diff(np.concatenate([pad, flags.astype(np.int8), pad]), axis=0)
    sp, ss = np.nonzero(edges.T == 1)
    ep, es = np.nonzero(edges.T == -1)
    return sp, ss, es - ss


def candidate_bins(day, crit, quantiles=None):
    """Bool ``(288, rows, cols, 4)``: per-bin criteria (quantiles, min volume, window)."""
    if quantiles is None:
        vq, _ = channel_quantiles(day, crit.vol_quantile)
        _, sq = channel_quantiles(day, crit.speed_quantile)
    else:
        vq, sq = quantiles
    vol = day[..., list(VOLUME_CHANNELS)]
    spd = day[..., list(SPEED_CHANNELS)]
    flags = (vol > vq) & (spd < sq) & (vol > crit.min_volume)
    t = np.arange(BINS_PER_DAY)
    in_window = (t >= crit.window[0]) & (t < crit.window[1])
    flags &= in_window[:, None, None, None]
    return flags


def detect_outliers(day, crit=None, quantiles=None):
    """Find outlier events in a full-day movie. Events are sorted by (row, col, heading, start)."""
    crit = crit or OutlierCriteria()
    day, _ = check_movie(day, frames=BINS_PER_DAY, name="day", allow_batch=False)
    rows, cols = day.shape[1:3]
    flags = candidate_bins(day, crit, quantiles).reshape(BINS_PER_DAY, -1)
    pix, start, length = _runs(flags)
    keep = length >= crit.min_consecutive
    pix, start, length = pix[keep], start[keep], length[keep]
    if not len(pix):
        return []

    vol = day[..., list(VOLUME_CHANNELS)].reshape(BINS_PER_DAY, -1).astype(np.int64)
    spd = day[..., list(SPEED_CHANNELS)].reshape(BINS_PER_DAY, -1).astype(np.int64)
    cv = np.vstack([np.zeros((1, vol.shape[1]), np.int64), np.cumsum(vol, axis=0)])
    cs = np.vstack([np.zeros((1, spd.shape[1]), np.int64), np.cumsum(spd, axis=0)])
    end = start + length
    run_vol = (cv[end, pix] - cv[start, pix]) / length
    run_spd = (cs[end, pix] - cs[start, pix]) / length
    ctx_lo = np.maximum(start - crit.context_bins, 0)
    ctx_n = start - ctx_lo
    has_ctx = ctx_n > 0
    ctx_n = np.maximum(ctx_n, 1)
    ctx_vol = (cv[start, pix] - cv[ctx_lo, pix]) / ctx_n
    ctx_spd = (cs[start, pix] - cs[ctx_lo, pix]) / ctx_n
    ok = has_ctx & (run_vol > crit.vol_mean_factor * ctx_vol) & (run_spd < crit.speed_mean_factor * ctx_spd)

    events = []
    for p, s, n in zip(pix[ok].tolist(), start[ok].tolist(), length[ok].tolist()):
        r, rem = divmod(p, cols * 4)
        c, h = divmod(rem, 4)
        events.append(OutlierEvent(r, c, HeadingQuadrant(h), s, n))
    events.sort(key=lambda e: (e.row, e.col, e.heading, e.start_bin))
    return events


def outlier_mask_score(pred, truth, events):
    """MSE restricted to each test's event pixel: its volume and speed channel over all frames.

    Returns a dict with ``mse``, ``mse_volume``, ``mse_speed`` and ``n_values``
    (``n_tests * frames * 2``).
    """
    pred, pb = check_movie(pred, name="pred")
    truth, tb = check_movie(truth, name="truth")
    if pred.shape != truth.shape:
        raise InvalidInputError(f"pred shape {pred.shape} != truth shape {truth.shape}")
    if not pb:
        pred, truth = pred[None], truth[None]
    events = list(events)
    if len(events) != pred.shape[0]:
        raise InvalidInputError(f"{len(events)} events for {pred.shape[0]} tests")
    rows, cols = pred.shape[2:4]
    sv = ss = 0
    for i, e in enumerate(events):
        if not (0 <= e.row < rows and 0 <= e.col < cols):
            raise InvalidInputError(f"event pixel ({e.row}, {e.col}) outside grid")
        h = HeadingQuadrant.parse(e.heading)
        dv = pred[i, :, e.row, e.col, h.volume_channel].astype(np.int64) - truth[i, :, e.row, e.col, h.volume_channel]
        ds = pred[i, :, e.row, e.col, h.speed_channel].astype(np.int64) - truth[i, :, e.row, e.col, h.speed_channel]
        sv += int((dv * dv).sum())
        ss += int((ds * ds).sum())
    per_channel = pred.shape[0] * pred.shape[1]
    return {
        "mse": (sv + ss) / (2 * per_channel),
        "mse_volume": sv / per_channel,
        "mse_speed": ss / per_channel,
        "n_values": 2 * per_channel,
    }


def make_outlier_tests(day, date, events, city=""):
    """Build one test slot per event whose last input frame is the event's first bin.

    Returns ``(slots, kept_events, skipped)``; events without a full input
    window or truth horizon inside the day are skipped.
    """
    slots, kept, skipped = [], [], 0
    for e in events:
        start = e.start_bin - (INPUT_FRAMES - 1)
        if start < 0 or start + TRUTH_OFFSETS[-1] >= BINS_PER_DAY:
            skipped += 1
            continue
        slots.append(slice_slot(day, start, date, city))
        kept.append(e)
    return slots, kept, skipped


def events_to_frame(events):
    return pd.DataFrame(
        [(e.row, e.col, e.heading.name, e.start_bin, e.duration) for e in events],
        columns=list(EVENT_COLUMNS),
    )


def read_events(path):
    df = pd.read_csv(path)
    missing = set(EVENT_COLUMNS) - set(df.columns)
    if missing:
        raise InvalidInputError(f"{path}: missing event columns {sorted(missing)}")
    return [
        OutlierEvent(int(r.row), int(r.col), HeadingQuadrant.parse(r.heading), int(r.start_bin), int(r.duration))
        for r in df.itertuples(index=False)
    ]


class OutlierDetector(BaseEstimator):
    """Estimator wrapper: ``fit`` learns the day's per-pixel quantiles, ``predict`` returns events.

    Quantiles are full-day statistics, so ``fit_predict`` on one day is the
    usual call.
    """

    def __init__(self, vol_quantile=0.90, speed_quantile=0.05, min_volume=5, window=(96, 240),
                 min_consecutive=2, vol_mean_factor=1.5, speed_mean_factor=0.7, context_bins=24):
        self.vol_quantile = vol_quantile
        self.speed_quantile = speed_quantile
        self.min_volume = min_volume
        self.window = window
        self.min_consecutive = min_consecutive
        self.vol_mean_factor = vol_mean_factor
        self.speed_mean_factor = speed_mean_factor
        self.context_bins = context_bins

    @property
    def criteria(self):
        return OutlierCriteria(**self.get_params())

    def fit(self, X, y=None):
        crit = self.criteria
        self.volume_quantiles_ = channel_quantiles(X, crit.vol_quantile)[0]
        self.speed_quantiles_ = channel_quantiles(X, crit.speed_quantile)[1]
        return self

    def predict(self, X):
        return detect_outliers(X, self.criteria, (self.volume_quantiles_, self.speed_quantiles_))

    def fit_predict(self, X, y=None):
        return self.fit(X).predict(X)
