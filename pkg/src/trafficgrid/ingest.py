"""Aggregate GPS probes into daily traffic map movies.

Probes are binned by 5-minute bin, grid cell and heading quadrant into a
sparse :class:`DayAccumulator`. Accumulators from disjoint shards merge by
element-wise addition, so any partition of the input yields the same movie.
Speeds are accumulated as integer milli-km/h, which keeps the merge exact
regardless of summation order.
"""

import datetime as dt
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import pyarrow as pa
import pyarrow.csv as pacsv
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import InvalidInputError
from .grid import BINS_PER_DAY, CityConfig, bin_of, cell_of, cells_of, quadrant_of, quadrants_of, round_half_up

log = logging.getLogger(__name__)

PROBE_COLUMNS = ("lat", "lon", "timestamp", "speed", "heading")
SPEED_SCALE = 1000  # accumulator speed unit: 1/1000 km/h
SHARD_BYTES = 64 << 20


@dataclass(frozen=True)
class ProbeRecord:
    lat: float
    lon: float
    timestamp: dt.datetime
    speed: float
    heading: float


@dataclass(frozen=True)
class CellAccumulator:
    count: int = 0
    speed_sum: float = 0.0


@dataclass
class IngestStats:
    records: int = 0
    in_bounds: int = 0
    out_of_bounds: int = 0
    rejected: int = 0

    def __add__(self, other):
        return IngestStats(
            self.records + other.records,
            self.in_bounds + other.in_bounds,
            self.out_of_bounds + other.out_of_bounds,
            self.rejected + other.rejected,
        )

    def to_dict(self):
        return {
            "records": self.records,
            "in_bounds": self.in_bounds,
            "out_of_bounds": self.out_of_bounds,
            "rejected": self.rejected,
        }


@dataclass
class DayAccumulator:
    """Sparse per-(frame, row, col, quadrant) probe counts and speed sums.

    ``index`` holds sorted, unique flat indices into the dense
    ``(288, rows, cols, 4)`` layout; ``count`` and ``speed_sum`` (milli-km/h)
    are aligned with it.
    """

    shape: tuple
    index: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    count: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    speed_sum: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    stats: IngestStats = field(default_factory=IngestStats)

    @classmethod
    def zeros(cls, cfg):
        return cls(shape=(BINS_PER_DAY, cfg.rows, cfg.cols, 4))

    def __add__(self, other):
        return merge([self, other])

    def __eq__(self, other):
        return (
            isinstance(other, DayAccumulator)
            and tuple(self.shape) == tuple(other.shape)
            and np.array_equal(self.index, other.index)
            and np.array_equal(self.count, other.count)
            and np.array_equal(self.speed_sum, other.speed_sum)
        )

    def __getitem__(self, key):
        flat = np.ravel_multi_index(key, self.shape)
        i = np.searchsorted(self.index, flat)
        if i < len(self.index) and self.index[i] == flat:
            return CellAccumulator(int(self.count[i]), self.speed_sum[i] / SPEED_SCALE)
        return CellAccumulator()

    @property
    def nnz(self):
        return len(self.index)

    def dense(self):
        """Dense ``(count, speed_sum_kmh)`` arrays; memory heavy on full grids."""
        n = int(np.prod(self.shape))
        count = np.zeros(n, np.int64)
        speed = np.zeros(n, np.float64)
        count[self.index] = self.count
        speed[self.index] = self.speed_sum / SPEED_SCALE
        return count.reshape(self.shape), speed.reshape(self.shape)


def _reduce(shape, index, count, speed_sum, stats):
    if len(index) == 0:
        return DayAccumulator(shape, stats=stats)
    order = np.argsort(index, kind="stable")
    index = index[order]
    starts = np.flatnonzero(np.r_[True, index[1:] != index[:-1]])
    return DayAccumulator(
        shape=shape,
        index=index[starts],
        count=np.add.reduceat(count[order], starts),
        speed_sum=np.add.reduceat(speed_sum[order], starts),
        stats=stats,
    )


def merge(accs):
    """Element-wise sum of accumulators. Associative, commutative, zero-identity."""
    accs = list(accs)
    if not accs:
        raise InvalidInputError("nothing to merge")
    shape = tuple(accs[0].shape)
    for a in accs[1:]:
        if tuple(a.shape) != shape:
            raise InvalidInputError(f"accumulator shapes differ: {shape} vs {tuple(a.shape)}")
    stats = IngestStats()
    for a in accs:
        stats = stats + a.stats
    return _reduce(
        shape,
        np.concatenate([a.index for a in accs]),
        np.concatenate([a.count for a in accs]),
        np.concatenate([a.speed_sum for a in accs]),
        stats,
    )


def _columns_from(probes):
    if isinstance(probes, pd.DataFrame):
        return {c: probes[c].to_numpy() for c in PROBE_COLUMNS}
    if isinstance(probes, dict):
        return {c: np.asarray(probes[c]) for c in PROBE_COLUMNS}
    cols = {c: [] for c in PROBE_COLUMNS}
    for p in probes:
        for c in PROBE_COLUMNS:
            cols[c].append(getattr(p, c))
    return {c: np.asarray(v) for c, v in cols.items()}


def _to_datetime64(ts):
    ts = np.asarray(ts)
    if np.issubdtype(ts.dtype, np.datetime64):
        return ts.astype("datetime64[us]")
    return pd.to_datetime(pd.Series(ts), errors="coerce", format="ISO8601").to_numpy("datetime64[us]")


def _to_float(x):
    x = np.asarray(x)
    if x.dtype.kind == "f":
        return x.astype(np.float64, copy=False)
    return pd.to_numeric(pd.Series(x), errors="coerce").to_numpy(np.float64)


def accumulate(probes, cfg, date=None, extra_rejects=0):
    """Bin probes into a :class:`DayAccumulator`.

    ``probes`` is a DataFrame, a dict of columns, or an iterable of
    :class:`ProbeRecord`. Malformed records are tallied as rejected. When
    ``date`` is given, probes from other days count as out of bounds.
    """
    cols = _columns_from(probes)
    lat = _to_float(cols["lat"])
    lon = _to_float(cols["lon"])
    speed = _to_float(cols["speed"])
    heading = _to_float(cols["heading"])
    ts = _to_datetime64(cols["timestamp"])
    n = len(lat)

    valid = (
        np.isfinite(lat) & np.isfinite(lon) & np.isfinite(speed) & np.isfinite(heading)
        & (speed >= 0) & ~np.isnat(ts)
    )
    row, col, inside = cells_of(lat, lon, cfg)
    day = ts.astype("datetime64[D]")
    if date is not None:
        inside &= day == np.datetime64(date, "D")
    keep = valid & inside

    minutes = ((ts[keep] - day[keep]) // np.timedelta64(1, "m")).astype(np.int64)
    frame = minutes // cfg.bin_minutes
    flat = ((frame * cfg.rows + row[keep]) * cfg.cols + col[keep]) * 4 + quadrants_of(heading[keep])
    milli = np.rint(speed[keep] * SPEED_SCALE).astype(np.int64)

    n_in = int(keep.sum())
    n_rej = int((~valid).sum())
    stats = IngestStats(n + extra_rejects, n_in, n - n_in - n_rej, n_rej + extra_rejects)
    return _reduce(
        (BINS_PER_DAY, cfg.rows, cfg.cols, 4),
        flat, np.ones(n_in, np.int64), milli, stats,
    )


def accumulate_reference(records, cfg, date=None):
    """Per-probe loop over :class:`ProbeRecord` with no vectorization or sharding.

    Returns ``(counts, speed_sums, stats)`` as dicts keyed by
    ``(frame, row, col, quadrant)``; speed sums are in milli-km/h.
    """
    counts, sums = {}, {}
    stats = IngestStats()
    for p in records:
        stats.records += 1
        vals = (p.lat, p.lon, p.speed, p.heading)
        if p.timestamp is None or not all(np.isfinite(v) for v in vals) or p.speed < 0:
            stats.rejected += 1
            continue
        cell = cell_of(p.lat, p.lon, cfg)
        if cell is None or (date is not None and p.timestamp.date() != date):
            stats.out_of_bounds += 1
            continue
        stats.in_bounds += 1
        key = (bin_of(p.timestamp), cell[0], cell[1], int(quadrant_of(p.heading)))
        counts[key] = counts.get(key, 0) + 1
        sums[key] = sums.get(key, 0) + int(round(p.speed * SPEED_SCALE))
    return counts, sums, stats


def encode_volume(count, cfg):
    """Encode probe counts into volume bytes (vectorized)."""
    c = np.asarray(count, dtype=np.float64)
    v = round_half_up(255.0 * np.minimum(c, cfg.volume_cap) / cfg.volume_cap)
    v = np.clip(v, 0, 255)
    v = np.where(c > 0, np.maximum(v, 1), v)
    v = np.where(c < cfg.privacy_threshold, 0, v)
    return v.astype(np.uint8) if v.ndim else np.uint8(v)


def encode_speed(speed_sum, count, cfg):
    """Encode a km/h speed sum over ``count`` probes into a speed byte (vectorized)."""
    c = np.asarray(count, dtype=np.float64)
    s = np.asarray(speed_sum, dtype=np.float64)
    has = (c > 0) & (c >= cfg.privacy_threshold)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(has, s / np.where(c > 0, c, 1), 0.0)
    v = np.clip(round_half_up(255.0 * np.minimum(mean, cfg.speed_cap) / cfg.speed_cap), 1, 255)
    v = np.where(has, v, 0)
    return v.astype(np.uint8) if v.ndim else np.uint8(v)


def finalize(acc, cfg):
    """Encode an accumulator into a ``(288, rows, cols, 8)`` uint8 movie."""
    expected = (BINS_PER_DAY, cfg.rows, cfg.cols, 4)
    if tuple(acc.shape) != expected:
        raise InvalidInputError(f"accumulator shape {tuple(acc.shape)} does not match config {expected}")
    movie = np.zeros(expected[:3] + (8,), np.uint8)
    if acc.nnz == 0:
        return movie
    flat_cell, quad = np.divmod(acc.index, 4)
    vol = encode_volume(acc.count, cfg)
    spd = encode_speed(acc.speed_sum / SPEED_SCALE, acc.count, cfg)
    out = movie.reshape(-1)
    out[flat_cell * 8 + 2 * quad] = vol
    out[flat_cell * 8 + 2 * quad + 1] = spd
    return movie


# --- CSV streaming and sharding ---------------------------------------------

_CSV_TYPES = {
    "lat": pa.float64(),
    "lon": pa.float64(),
    "speed": pa.float64(),
    "heading": pa.float64(),
    "timestamp": pa.timestamp("us"),
}


def plan_shards(paths, n_shards=1, max_bytes=SHARD_BYTES):
    """Split CSV files into ``(path, start, end)`` byte ranges aligned by the reader."""
    shards = []
    for path in paths:
        size = os.path.getsize(path)
        k = max(1, n_shards, -(-size // max_bytes))
        edges = np.linspace(0, size, k + 1).astype(np.int64)
        shards.extend((str(path), int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a)
    return shards


def _read_shard_bytes(path, start, end):
    """Return ``(header, body)``; body holds every line whose first byte is in [start, end)."""
    with open(path, "rb") as f:
        header = f.readline()
        if start < len(header):
            start = len(header)
        else:
            f.seek(start - 1)
            f.readline()
        pos = f.tell()
        if pos >= end:
            return header, b""
        body = f.read(end - pos)
        if body and not body.endswith(b"\n"):
            body += f.readline()
    return header, body


def _parse_csv(header, body):
    """Parse probe CSV bytes into a column dict plus a count of unparseable rows."""
    bad = [0]

    def skip(row):
        bad[0] += 1
        return "skip"

    data = header + body
    try:
        table = pacsv.read_csv(
            io.BytesIO(data),
            parse_options=pacsv.ParseOptions(invalid_row_handler=skip),
            convert_options=pacsv.ConvertOptions(column_types=_CSV_TYPES, include_columns=list(PROBE_COLUMNS)),
        )
    except pa.ArrowInvalid:
        # a field failed typed conversion; coerce per value so only that record is rejected
        bad[0] = 0
        table = pacsv.read_csv(
            io.BytesIO(data),
            parse_options=pacsv.ParseOptions(invalid_row_handler=skip),
            convert_options=pacsv.ConvertOptions(
                column_types={c: pa.string() for c in PROBE_COLUMNS}, include_columns=list(PROBE_COLUMNS)
            ),
        )
    cols = {}
    for c in PROBE_COLUMNS:
        arr = table.column(c)
        if pa.types.is_string(arr.type):
            cols[c] = np.asarray(arr.to_pylist(), dtype=object)
        elif pa.types.is_timestamp(arr.type):
            cols[c] = arr.to_numpy().astype("datetime64[us]")
        else:
            cols[c] = arr.to_numpy(zero_copy_only=False).astype(np.float64)
    return cols, bad[0]


def accumulate_shard(shard, cfg, date=None):
    header, body = _read_shard_bytes(*shard)
    if not body.strip():
        return DayAccumulator.zeros(cfg)
    cols, bad = _parse_csv(header, body)
    return accumulate(cols, cfg, date=date, extra_rejects=bad)


def _shard_job(args):
    return accumulate_shard(*args)


def ingest_files(paths, cfg, date=None, workers=1, n_shards=None):
    """Accumulate CSV probe files with ``workers`` processes and merge the shards."""
    paths = [str(p) for p in paths]
    if not paths:
        raise InvalidInputError("no probe files given")
    shards = plan_shards(paths, n_shards or workers)
    log.info("ingesting %d shard(s) from %d file(s) with %d worker(s)", len(shards), len(paths), workers)
    jobs = [(s, cfg, date) for s in shards]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_shard_job, jobs))
    else:
        parts = [_shard_job(j) for j in jobs]
    return merge(parts)


def write_probes_csv(path, probes):
    """Write probes in the canonical CSV layout (ISO-8601 local timestamps)."""
    cols = _columns_from(probes)
    df = pd.DataFrame(cols, columns=list(PROBE_COLUMNS))
    ts = pd.to_datetime(df["timestamp"])
    df["timestamp"] = ts.dt.strftime("%Y-%m-%dT%H:%M:%S")
    df.to_csv(path, index=False)


class ProbeAggregator(TransformerMixin, BaseEstimator):
    """Estimator wrapper: probes in, ``(288, rows, cols, 8)`` movie out.

    ``partial_fit`` accumulates batches into ``accumulator_``;
    :meth:`to_movie` encodes what has been seen so far. ``transform`` is
    stateless.
    """

    def __init__(self, config=None, date=None):
        self.config = config
        self.date = date

    def _cfg(self):
        return self.config if self.config is not None else CityConfig()

    def fit(self, X, y=None):
        self.accumulator_ = accumulate(X, self._cfg(), date=self.date)
        return self

    def partial_fit(self, X, y=None):
        acc = accumulate(X, self._cfg(), date=self.date)
        self.accumulator_ = acc if not hasattr(self, "accumulator_") else self.accumulator_ + acc
        return self

    def to_movie(self):
        return finalize(self.accumulator_, self._cfg())

    def transform(self, X):
        return finalize(accumulate(X, self._cfg(), date=self.date), self._cfg())
