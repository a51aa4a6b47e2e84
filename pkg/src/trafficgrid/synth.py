"""Synthetic probe corpora for tests, demos and the ingest benchmark."""

import datetime as dt

import numpy as np
import pandas as pd

from .grid import CityConfig


def random_probes(n, cfg, date, seed=0, outside=0.0):
    """Uniform probes over the city's bounding box on ``date``.

    A fraction ``outside`` is pushed north of the grid to exercise the
    out-of-bounds path.
    """
    rng = np.random.default_rng(seed)
    n_lat, n_lon = cfg.geo_shape
    lat = cfg.lat_min + rng.random(n) * n_lat * cfg.cell_size
    lon = cfg.lon_min + rng.random(n) * n_lon * cfg.cell_size
    if outside:
        off = rng.random(n) < outside
        lat[off] = cfg.lat_max + 0.01 + rng.random(off.sum())
    midnight = np.datetime64(dt.date.fromisoformat(str(date)), "s")
    ts = midnight + rng.integers(0, 86400, n).astype("timedelta64[s]")
    return pd.DataFrame({
        "lat": lat.round(6),
        "lon": lon.round(6),
        "timestamp": ts,
        "speed": (rng.random(n) * 140).round(2),
        "heading": (rng.random(n) * 360).round(1),
    })


def write_probe_csv(path, n, cfg=None, date="2020-04-01", seed=0, outside=0.0):
    cfg = cfg or CityConfig()
    df = random_probes(n, cfg, date, seed, outside)
    df["timestamp"] = pd.to_datetime(df["timestamp"]).dt.strftime("%Y-%m-%dT%H:%M:%S")
    df.to_csv(path, index=False)
    return path
