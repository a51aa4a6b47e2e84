"""Grid geometry, heading quadrants, and time binning for traffic map movies.

A city is a regular lat/lon grid of 0.001 degree cells. Row 0 is the
northernmost band, matching image conventions. A day is 288 bins of
5 minutes. Each cell carries 8 channels: a (volume, speed) pair for each of
the four heading quadrants NE, SE, SW, NW.
"""

import datetime as dt
import enum
import json
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ._validation import InvalidInputError

CELL_SIZE = 0.001
BINS_PER_DAY = 288
BIN_MINUTES = 5
N_CHANNELS = 8
VOLUME_CHANNELS = (0, 2, 4, 6)
SPEED_CHANNELS = (1, 3, 5, 7)


class HeadingQuadrant(enum.IntEnum):
    NE = 0
    SE = 1
    SW = 2
    NW = 3

    @property
    def volume_channel(self):
        return 2 * int(self)

    @property
    def speed_channel(self):
        return 2 * int(self) + 1

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                pass
            if value.strip().isdigit():
                value = int(value)
        if isinstance(value, (int, np.integer)) and 0 <= int(value) < 4:
            return cls(int(value))
        raise InvalidInputError(f"unknown heading quadrant {value!r}")


@dataclass(frozen=True)
class CityConfig:
    """Grid anchor, size and encoding caps for one city.

    ``rows``/``cols`` describe the output tensor. With ``rotate_90`` the
    geographic grid is ``cols`` latitude bands by ``rows`` longitude bands and
    is rotated counter-clockwise (``np.rot90``) into the output frame.
    """

    name: str = "synthetic"
    lat_min: float = 0.0
    lon_min: float = 0.0
    rows: int = 495
    cols: int = 436
    cell_size: float = CELL_SIZE
    bins_per_day: int = BINS_PER_DAY
    bin_minutes: int = BIN_MINUTES
    volume_cap: float = 255
    speed_cap: float = 120.0
    privacy_threshold: int = 0
    rotate_90: bool = False

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise InvalidInputError("rows and cols must be positive")
        if self.cell_size != CELL_SIZE:
            raise InvalidInputError(f"cell_size is fixed at {CELL_SIZE}")
        if self.bins_per_day != BINS_PER_DAY or self.bin_minutes != BIN_MINUTES:
            raise InvalidInputError("time discretization is fixed at 288 bins of 5 minutes")
        if not self.volume_cap >= 1:
            raise InvalidInputError("volume_cap must be >= 1")
        if not self.speed_cap > 0:
            raise InvalidInputError("speed_cap must be > 0")
        if self.privacy_threshold < 0:
            raise InvalidInputError("privacy_threshold must be >= 0")

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def geo_shape(self):
        """(latitude bands, longitude bands) of the un-rotated binning grid."""
        return (self.cols, self.rows) if self.rotate_90 else (self.rows, self.cols)

    @property
    def lat_max(self):
        return self.lat_min + self.geo_shape[0] * self.cell_size

    def to_json(self):
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown CityConfig fields: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(f.read())

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json())


def round_half_up(x):
    """Round non-negative values to the nearest integer, ties upward."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def cells_of(lat, lon, cfg):
    """Vectorized :func:`cell_of`. Returns (row, col, in_bounds) arrays."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    n_lat, n_lon = cfg.geo_shape
    with np.errstate(invalid="ignore"):
        r = np.floor((cfg.lat_max - lat) / cfg.cell_size)
        c = np.floor((lon - cfg.lon_min) / cfg.cell_size)
        ok = (r >= 0) & (r < n_lat) & (c >= 0) & (c < n_lon)
    r = np.where(ok, r, 0).astype(np.int64)
    c = np.where(ok, c, 0).astype(np.int64)
    if cfg.rotate_90:
        r, c = n_lon - 1 - c, r
    return r, c, ok


def cell_of(lat, lon, cfg):
    """Return ``(row, col)`` of the cell containing the point, or None if off-grid."""
    n_lat, n_lon = cfg.geo_shape
    if not (math.isfinite(lat) and math.isfinite(lon)):
        return None
    r = math.floor((cfg.lat_max - lat) / cfg.cell_size)
    c = math.floor((lon - cfg.lon_min) / cfg.cell_size)
    if not (0 <= r < n_lat and 0 <= c < n_lon):
        return None
    if cfg.rotate_90:
        return (n_lon - 1 - c, r)
    return (r, c)


def cell_bounds(row, col, cfg):
    """Bounding box ``(lat_lo, lat_hi, lon_lo, lon_hi)`` of an output cell."""
    if cfg.rotate_90:
        n_lon = cfg.geo_shape[1]
        row, col = col, n_lon - 1 - row
    lat_hi = cfg.lat_max - row * cfg.cell_size
    lon_lo = cfg.lon_min + col * cfg.cell_size
    return (lat_hi - cfg.cell_size, lat_hi, lon_lo, lon_lo + cfg.cell_size)


def quadrants_of(heading):
    """Vectorized :func:`quadrant_of` returning integer quadrant indices."""
    h = np.mod(np.asarray(heading, dtype=np.float64), 360.0)
    q = (h // 90.0).astype(np.int64)
    # fmod of a tiny negative can round up to exactly 360
    return np.where(q >= 4, 0, q)


def quadrant_of(heading):
    if not math.isfinite(heading):
        raise InvalidInputError(f"heading must be finite, got {heading}")
    q = int((heading % 360.0) // 90.0)
    return HeadingQuadrant(0 if q >= 4 else q)


def bin_of(timestamp):
    """5-minute bin index of a local wall-clock time (datetime or time)."""
    if isinstance(timestamp, str):
        timestamp = dt.datetime.fromisoformat(timestamp)
    return (timestamp.hour * 60 + timestamp.minute) // BIN_MINUTES


def directional_pixel_count(cfg):
    return cfg.rows * cfg.cols * 4
