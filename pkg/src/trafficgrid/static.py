"""Derive the 9-channel static tensor from a high-resolution road raster.

The raster is 10x the movie grid in each dimension, with 255 meaning "no
road". Channel 0 of the result is the block-averaged road darkness; channels
1-8 are binary connectivity bits toward the N, NE, E, SE, S, SW, W, NW
neighbours.

Two low-res cells are connected when a pixel-graph edge (8-neighbourhood
between non-white pixels) crosses from one block into the other. Diagonal
neighbours are additionally connected when a short path through the pixel
graph links their blocks around the shared corner (a detour).
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import InvalidInputError
from .grid import round_half_up

SCALE = 10
WHITE = 255
MAX_DETOUR = 7

DIRECTIONS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
OFFSETS = ((-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1))
DIAGONALS = (1, 3, 5, 7)


def opposite(d):
    return (d + 4) % 8


def _check_raster(raster, shape=None):
    r = np.asarray(raster)
    if r.ndim != 2:
        raise InvalidInputError(f"raster must be 2-d, got shape {r.shape}")
    if r.dtype != np.uint8:
        raise InvalidInputError(f"raster must be uint8, got {r.dtype}")
    if r.shape[0] % SCALE or r.shape[1] % SCALE:
        raise InvalidInputError(f"raster shape {r.shape} is not a multiple of {SCALE}")
    if shape is not None and r.shape != (shape[0] * SCALE, shape[1] * SCALE):
        raise InvalidInputError(f"raster shape {r.shape} does not match grid {shape} x{SCALE}")
    return r


def downsample_grayscale(raster, cfg=None):
    """Block-mean darkness (255 - pixel) per 10x10 block, rounded half up."""
    r = _check_raster(raster, cfg and (cfg.rows, cfg.cols))
    rows, cols = r.shape[0] // SCALE, r.shape[1] // SCALE
    dark = (WHITE - r.astype(np.int64)).reshape(rows, SCALE, cols, SCALE).sum(axis=(1, 3))
    return round_half_up(dark / (SCALE * SCALE)).astype(np.uint8)


@dataclass(frozen=True)
class PixelGraph:
    """Moore-neighbourhood graph over the non-white pixels of a raster.

    Edges are implicit: every pair of 8-adjacent nodes is joined.
    """

    nodes: np.ndarray  # bool mask, True where the pixel is a node

    @property
    def shape(self):
        return self.nodes.shape

    @property
    def n_nodes(self):
        return int(self.nodes.sum())

    def _pairs(self):
        m = self.nodes
        h, w = m.shape
        for dr, dc in ((0, 1), (1, 0), (1, 1), (1, -1)):
            a = m[: h - dr, max(0, -dc): w - max(0, dc)]
            b = m[dr:, max(0, dc): w - max(0, -dc)]
            yield (dr, dc), a & b

    @property
    def n_edges(self):
        return int(sum(both.sum() for _, both in self._pairs()))

    def edges(self):
        """Yield ``((r1, c1), (r2, c2))`` for every undirected edge."""
        for (dr, dc), both in self._pairs():
            rs, cs = np.nonzero(both)
            cs = cs + max(0, -dc)
            for r, c in zip(rs.tolist(), cs.tolist()):
                yield (r, c), (r + dr, c + dc)


def build_pixel_graph(raster):
    r = np.asarray(raster)
    if r.ndim != 2:
        raise InvalidInputError(f"raster must be 2-d, got shape {r.shape}")
    return PixelGraph(r < WHITE)


def _direct_links(nodes, rows, cols):
    conn = np.zeros((8, rows, cols), dtype=bool)
    g = PixelGraph(nodes)
    for (dr, dc), both in g._pairs():
        rs, cs = np.nonzero(both)
        if not len(rs):
            continue
        cs = cs + max(0, -dc)
        br1, bc1 = rs // SCALE, cs // SCALE
        br2, bc2 = (rs + dr) // SCALE, (cs + dc) // SCALE
        ddr, ddc = br2 - br1, bc2 - bc1
        cross = (ddr != 0) | (ddc != 0)
        for d, (odr, odc) in enumerate(OFFSETS):
            sel = cross & (ddr == odr) & (ddc == odc)
            if sel.any():
                conn[d, br1[sel], bc1[sel]] = True
                conn[opposite(d), br2[sel], bc2[sel]] = True
    return conn


def _dilate(m):
    out = m.copy()
    out[:, 1:, :] |= m[:, :-1, :]
    out[:, :-1, :] |= m[:, 1:, :]
    tmp = out.copy()
    out[:, :, 1:] |= tmp[:, :, :-1]
    out[:, :, :-1] |= tmp[:, :, 1:]
    return out


def _detour_links(nodes, rows, cols, max_len=MAX_DETOUR):
    """Diagonal links between blocks joined by a pixel path of <= ``max_len`` edges.

    Every such path between two diagonal blocks stays inside the
    ``2*max_len`` square centred on their shared corner, so a bounded BFS
    (iterated dilation) over that window is exact.
    """
    conn = np.zeros((8, rows, cols), dtype=bool)
    if rows < 2 or cols < 2:
        return conn
    k = max_len
    if k >= SCALE:
        raise InvalidInputError(f"max detour length must be < {SCALE}")
    # interior corners (R, C) at high-res (10R, 10C), R in 1..rows-1, C in 1..cols-1
    R, C = np.meshgrid(np.arange(1, rows), np.arange(1, cols), indexing="ij")
    R, C = R.ravel(), C.ravel()
    blocks = nodes.reshape(rows, SCALE, cols, SCALE)
    corner_tl = blocks[:-1, SCALE - k:, :-1, SCALE - k:].any(axis=(1, 3))
    corner_tr = blocks[:-1, SCALE - k:, 1:, :k].any(axis=(1, 3))
    corner_bl = blocks[1:, :k, :-1, SCALE - k:].any(axis=(1, 3))
    corner_br = blocks[1:, :k, 1:, :k].any(axis=(1, 3))
    need_main = (corner_tl & corner_br)[R - 1, C - 1]
    need_anti = (corner_tr & corner_bl)[R - 1, C - 1]
    need = need_main | need_anti
    if not need.any():
        return conn
    R, C, need_main, need_anti = R[need], C[need], need_main[need], need_anti[need]
    dr, dc = np.meshgrid(np.arange(-k, k), np.arange(-k, k), indexing="ij")
    win = nodes[R[:, None, None] * SCALE + dr, C[:, None, None] * SCALE + dc]

    for main, sel in ((True, need_main), (False, need_anti)):
        if not sel.any():
            continue
        w = win[sel]
        src = np.zeros_like(w)
        dst = np.zeros_like(w)
        if main:
            src[:, :k, :k] = w[:, :k, :k]
            dst[:, k:, k:] = w[:, k:, k:]
        else:
            src[:, :k, k:] = w[:, :k, k:]
            dst[:, k:, :k] = w[:, k:, :k]
        reach = src
        for _ in range(max_len):
            reach = _dilate(reach) & w
        hit = (reach & dst).any(axis=(1, 2))
        r, c = R[sel][hit], C[sel][hit]
        if main:  # top-left block (r-1, c-1) <-> bottom-right block (r, c)
            conn[3, r - 1, c - 1] = True
            conn[7, r, c] = True
        else:  # top-right block (r-1, c) <-> bottom-left block (r, c-1)
            conn[5, r - 1, c] = True
            conn[1, r, c - 1] = True
    return conn


def derive_connectivity(graph, cfg=None, max_detour=MAX_DETOUR):
    """Connectivity bits ``(8, rows, cols)`` uint8 in N, NE, E, SE, S, SW, W, NW order."""
    nodes = graph.nodes if isinstance(graph, PixelGraph) else np.asarray(graph, dtype=bool)
    if nodes.shape[0] % SCALE or nodes.shape[1] % SCALE:
        raise InvalidInputError(f"pixel graph shape {nodes.shape} is not a multiple of {SCALE}")
    rows, cols = nodes.shape[0] // SCALE, nodes.shape[1] // SCALE
    if cfg is not None and (rows, cols) != (cfg.rows, cfg.cols):
        raise InvalidInputError(f"pixel graph grid {(rows, cols)} does not match config {(cfg.rows, cfg.cols)}")
    conn = _direct_links(nodes, rows, cols)
    if max_detour:
        conn |= _detour_links(nodes, rows, cols, max_detour)
    return conn.astype(np.uint8)


def build_static(raster, cfg=None, max_detour=MAX_DETOUR):
    """Full ``(9, rows, cols)`` static tensor: gray-scale density then 8 connectivity bits."""
    r = _check_raster(raster, cfg and (cfg.rows, cfg.cols))
    gray = downsample_grayscale(r)
    conn = derive_connectivity(build_pixel_graph(r), cfg, max_detour)
    return np.concatenate([gray[None], conn], axis=0)


def read_raster(path):
    """Load a gray-scale raster from a binary PGM or a tensor container file."""
    with open(path, "rb") as f:
        magic = f.read(2)
    if magic == b"P5":
        from PIL import Image

        with Image.open(path) as im:
            if im.mode != "L":
                raise InvalidInputError(f"{path}: PGM must be 8-bit gray-scale, got mode {im.mode}")
            return np.asarray(im, dtype=np.uint8).copy()
    from .tensorio import read_tensor

    return read_tensor(path)


def write_pgm(path, raster):
    from PIL import Image

    Image.fromarray(np.asarray(raster, dtype=np.uint8), mode="L").save(path, format="PPM")


class StaticGraphBuilder(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`build_static`; stateless."""

    def __init__(self, max_detour=MAX_DETOUR):
        self.max_detour = max_detour

    def fit(self, X, y=None):
        return self

    def transform(self, X):
        return build_static(X, max_detour=self.max_detour)
