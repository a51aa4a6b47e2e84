"""Competition scoring: pixel-wise MSE, masked variants and the MSE-vs-std diagnostic.

Squared errors of uint8 tensors are integers, so sums are accumulated in
int64 and are exact and order independent; floats only appear in the final
division.
"""

import enum
import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd

from ._validation import InvalidInputError, check_movie, check_same_shape
from .grid import SPEED_CHANNELS, VOLUME_CHANNELS, HeadingQuadrant

_SLAB_BYTES = 256 << 20


@dataclass
class ScoreReport:
    mse_all: float
    mse_volume: float
    mse_speed: float
    per_channel: list
    per_horizon: list
    n_tests: int

    def to_dict(self):
        return asdict(self)


class MaskMode(str, enum.Enum):
    BOTH = "both"
    PRED_ONLY = "pred-only"


@dataclass
class Mask:
    grid: np.ndarray
    mode: MaskMode = MaskMode.BOTH

    def __post_init__(self):
        g = np.asarray(self.grid)
        if g.ndim != 2:
            raise InvalidInputError(f"mask must be 2-d, got shape {g.shape}")
        if not np.isin(g, (0, 1)).all():
            raise InvalidInputError("mask values must be 0 or 1")
        self.grid = g.astype(np.uint8)
        self.mode = MaskMode(self.mode)


def _batched(pred, truth):
    pred, pb = check_movie(pred, name="pred")
    truth, tb = check_movie(truth, name="truth")
    check_same_shape(pred, truth)
    if not pb:
        pred, truth = pred[None], truth[None]
    return pred, truth


def _sse(pred, truth):
    """Per (frame, channel) sum of squared errors, int64, summed over tests and pixels."""
    sse = np.zeros(pred.shape[1:2] + pred.shape[-1:], dtype=np.int64)
    for p, t in zip(pred, truth):
        d = p.astype(np.int32) - t.astype(np.int32)
        sse += (d * d).sum(axis=(1, 2), dtype=np.int64)
    return sse


def _report(sse, n_tests, n_pixels):
    n_frames = sse.shape[0]
    per_cell = n_tests * n_pixels
    total = sse.sum()
    vol = sse[:, list(VOLUME_CHANNELS)].sum()
    spd = sse[:, list(SPEED_CHANNELS)].sum()
    return ScoreReport(
        mse_all=float(total / (per_cell * n_frames * 8)),
        mse_volume=float(vol / (per_cell * n_frames * 4)),
        mse_speed=float(spd / (per_cell * n_frames * 4)),
        per_channel=[float(v) for v in sse.sum(axis=0) / (per_cell * n_frames)],
        per_horizon=[float(v) for v in sse.sum(axis=1) / (per_cell * 8)],
        n_tests=int(n_tests),
    )


def mse(pred, truth):
    """Pooled pixel-wise MSE of ``(n, T, rows, cols, 8)`` (or unbatched) predictions."""
    pred, truth = _batched(pred, truth)
    return _report(_sse(pred, truth), pred.shape[0], pred.shape[2] * pred.shape[3])


def _apply_mask(x, m):
    return x * m[None, None, :, :, None]


def masked_mse(pred, truth, mask):
    """MSE after zeroing unmasked pixels; the denominator is always all elements.

    ``BOTH`` masks prediction and truth, ``PRED_ONLY`` only the prediction.
    """
    pred, truth = _batched(pred, truth)
    if not isinstance(mask, Mask):
        mask = Mask(mask)
    if mask.grid.shape != pred.shape[2:4]:
        raise InvalidInputError(f"mask shape {mask.grid.shape} != grid {pred.shape[2:4]}")
    p = _apply_mask(pred, mask.grid)
    t = _apply_mask(truth, mask.grid) if mask.mode is MaskMode.BOTH else truth
    return _report(_sse(p, t), pred.shape[0], pred.shape[2] * pred.shape[3])


def road_mask(static, mode=MaskMode.BOTH):
    """1 where the static map shows road density or any connectivity bit."""
    s = np.asarray(static)
    if s.ndim != 3 or s.shape[0] != 9:
        raise InvalidInputError(f"static tensor must be (9, rows, cols), got {s.shape}")
    return Mask(((s[0] > 0) | (s[1:] > 0).any(axis=0)).astype(np.uint8), mode)


# --- MSE vs std --------------------------------------------------------------


@dataclass
class StdBinReport:
    bin_width: float
    bin_edges: np.ndarray
    counts: np.ndarray
    mean_mse: np.ndarray
    summed_mse: np.ndarray
    cumulative: np.ndarray
    total_mse: float  # sum of per-directional-pixel MSE, computed independently of the bins

    @property
    def n_pixels(self):
        return int(self.counts.sum())

    def to_frame(self):
        return pd.DataFrame({
            "std_lo": self.bin_edges[:-1],
            "std_hi": self.bin_edges[1:],
            "count": self.counts,
            "mean_mse": self.mean_mse,
            "summed_mse": self.summed_mse,
            "cumulative_mse": self.cumulative,
        })


def _channels(kind):
    kind = str(kind).lower()
    if kind == "volume":
        return list(VOLUME_CHANNELS)
    if kind == "speed":
        return list(SPEED_CHANNELS)
    raise InvalidInputError(f"channel kind must be 'volume' or 'speed', got {kind!r}")


def _row_slabs(rows, bytes_per_row):
    step = max(1, int(_SLAB_BYTES // max(bytes_per_row, 1)))
    for r0 in range(0, rows, step):
        yield slice(r0, min(rows, r0 + step))


def per_pixel_std_mse(pred, truth, channel_kind="speed", inputs=None):
    """Per directional pixel: population std of the truth series and MSE of the prediction.

    ``truth`` holds the 12 input frames followed by the 6 target frames per
    test, unless ``inputs`` is given separately. Returns two
    ``(rows, cols, 4)`` float arrays.
    """
    pred, _ = check_movie(pred, name="pred")
    truth, _ = check_movie(truth, name="truth")
    if pred.ndim == 4:
        pred, truth = pred[None], truth[None]
        if inputs is not None:
            inputs = np.asarray(inputs)[None]
    if inputs is not None:
        inputs, _ = check_movie(inputs, name="inputs")
        truth = np.concatenate([inputs, truth], axis=1)
    n, t_all = truth.shape[:2]
    t_pred = pred.shape[1]
    if pred.shape[0] != n or pred.shape[2:] != truth.shape[2:] or t_all < t_pred:
        raise InvalidInputError(f"pred {pred.shape} incompatible with truth {truth.shape}")
    ch = _channels(channel_kind)
    rows, cols = truth.shape[2:4]
    std = np.empty((rows, cols, 4))
    err = np.empty((rows, cols, 4))
    for sl in _row_slabs(rows, n * t_all * cols * 4 * 8 * 3):
        tr = truth[:, :, sl][..., ch].astype(np.float64)
        std[sl] = tr.std(axis=(0, 1))
        d = pred[:, :, sl][..., ch].astype(np.float64) - tr[:, t_all - t_pred:]
        err[sl] = (d * d).mean(axis=(0, 1))
    return std, err


def mse_vs_std(pred, truth, channel_kind="speed", bin_width=1.0, inputs=None):
    """Bin directional pixels by truth std into ``[k*w, (k+1)*w)`` and sum their MSE per bin."""
    if not bin_width > 0:
        raise InvalidInputError("bin_width must be positive")
    std, err = per_pixel_std_mse(pred, truth, channel_kind, inputs)
    std, err = std.ravel(), err.ravel()
    idx = np.floor(std / bin_width).astype(np.int64)
    nb = int(idx.max()) + 1 if idx.size else 1
    counts = np.bincount(idx, minlength=nb)
    summed = np.bincount(idx, weights=err, minlength=nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, summed / np.maximum(counts, 1), np.nan)
    return StdBinReport(
        bin_width=float(bin_width),
        bin_edges=np.arange(nb + 1) * float(bin_width),
        counts=counts,
        mean_mse=mean,
        summed_mse=summed,
        cumulative=np.cumsum(summed),
        total_mse=math.fsum(err.tolist()),
    )


def pixel_stats(truth):
    """Per directional pixel mean and population std of volume and speed over all frames."""
    truth, batched = check_movie(truth, name="truth")
    if batched:
        truth = truth.reshape((-1,) + truth.shape[2:])
    _, rows, cols, _ = truth.shape
    stats = np.empty((rows, cols, 8, 2))
    for sl in _row_slabs(rows, truth.shape[0] * cols * 8 * 8 * 2):
        x = truth[:, sl].astype(np.float64)
        stats[sl, :, :, 0] = x.mean(axis=0)
        stats[sl, :, :, 1] = x.std(axis=0)
    r, c, h = np.meshgrid(np.arange(rows), np.arange(cols), np.arange(4), indexing="ij")
    names = np.array([q.name for q in HeadingQuadrant])
    vol = stats[:, :, list(VOLUME_CHANNELS)]
    spd = stats[:, :, list(SPEED_CHANNELS)]
    return pd.DataFrame({
        "row": r.ravel(),
        "col": c.ravel(),
        "heading": names[h.ravel()],
        "vol_mean": vol[..., 0].ravel(),
        "vol_std": vol[..., 1].ravel(),
        "speed_mean": spd[..., 0].ravel(),
        "speed_std": spd[..., 1].ravel(),
    })
