"""Input validation helpers shared by the estimators and the functional API."""

import numpy as np

N_CHANNELS = 8


class InvalidInputError(ValueError):
    """Raised when an array or argument violates an operation's contract."""


def check_uint8(x, name="X"):
    x = np.asarray(x)
    if x.dtype != np.uint8:
        if not np.issubdtype(x.dtype, np.integer) or (x.size and (x.min() < 0 or x.max() > 255)):
            raise InvalidInputError(f"{name} must hold uint8 values, got dtype {x.dtype}")
        x = x.astype(np.uint8)
    return x


def check_movie(x, frames=None, name="X", allow_batch=True):
    """Validate a movie tensor of shape (T, rows, cols, 8) or (n, T, rows, cols, 8).

    Returns the array as uint8 and a flag telling whether it carried a batch axis.
    """
    x = check_uint8(x, name)
    if x.ndim == 4:
        batched = False
    elif x.ndim == 5 and allow_batch:
        batched = True
    else:
        raise InvalidInputError(f"{name} must be 4-d (T, rows, cols, 8){' or 5-d' if allow_batch else ''}, got shape {x.shape}")
    if x.shape[-1] != N_CHANNELS:
        raise InvalidInputError(f"{name} must have {N_CHANNELS} channels, got {x.shape[-1]}")
    t = x.shape[-4]
    if frames is not None and t != frames:
        raise InvalidInputError(f"{name} must have {frames} frames, got {t}")
    return x, batched


def check_same_shape(a, b, names=("pred", "truth")):
    if a.shape != b.shape:
        raise InvalidInputError(f"{names[0]} shape {a.shape} != {names[1]} shape {b.shape}")
