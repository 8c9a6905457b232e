"""Partitioning-adaptive warping.

The dense flow is averaged over square blocks of side ``2**(7-k)`` (k = 0..3,
i.e. 128 down to 16 pixels), and each pixel blends the two block sizes that
bracket its (possibly fractional) QT depth ``q``::

    V_p = (k + 1 - q) * V[k] + (q - k) * V[k + 1],   k = floor(q)

Depths are clamped to ``[0, 3 - 1e-6]`` first, so the deepest blend uses the
16-pixel field.  The reference frame is then backward-warped with bilinear
sampling and clamp-to-edge borders.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .partition import CELL, CTU_SIZE

DEPTH_EPS = 1e-6
MAX_BLEND_DEPTH = 3.0 - DEPTH_EPS


class FlowField(NamedTuple):
    u: np.ndarray
    v: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.u.shape

    @classmethod
    def uniform(cls, height: int, width: int, du: float, dv: float) -> "FlowField":
        return cls(np.full((height, width), float(du)), np.full((height, width), float(dv)))


def _block_mean(a: np.ndarray, block: int) -> np.ndarray:
    h, w = a.shape
    means = a.reshape(h // block, block, w // block, block).mean(axis=(1, 3))
    return np.repeat(np.repeat(means, block, axis=0), block, axis=1)


def pool_flow(flow: FlowField, k: int) -> FlowField:
    """Block-average the flow over ``2**(7-k)`` pixel blocks, nearest-upsampled."""
    if not 0 <= k <= 3:
        raise ValueError("k must be in 0..3")
    h, w = flow.shape
    if h % CTU_SIZE or w % CTU_SIZE:
        raise ValueError(f"flow dimensions {w}x{h} are not multiples of {CTU_SIZE}")
    block = 2 ** (7 - k)
    return FlowField(_block_mean(np.asarray(flow.u, float), block),
                     _block_mean(np.asarray(flow.v, float), block))


def depth_to_pixels(depth: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbour upsample a per-cell depth grid to pixel resolution."""
    depth = np.asarray(depth, dtype=float)
    if depth.shape == shape:
        return depth
    if (depth.shape[0] * CELL, depth.shape[1] * CELL) != shape:
        raise ValueError(f"depth grid {depth.shape} does not match pixel shape {shape}")
    return np.repeat(np.repeat(depth, CELL, axis=0), CELL, axis=1)


def adaptive_flow(flow: FlowField, depth: np.ndarray) -> FlowField:
    """Partitioning-adaptive flow for a per-cell (or per-pixel) QT depth field."""
    q = np.clip(depth_to_pixels(depth, flow.shape), 0.0, MAX_BLEND_DEPTH)
    k = np.floor(q).astype(int)
    pooled = [pool_flow(flow, i) for i in range(4)]
    u = np.zeros(flow.shape)
    v = np.zeros(flow.shape)
    for i in range(3):
        sel = k == i
        lo_w = (i + 1 - q)[sel]
        hi_w = (q - i)[sel]
        u[sel] = lo_w * pooled[i].u[sel] + hi_w * pooled[i + 1].u[sel]
        v[sel] = lo_w * pooled[i].v[sel] + hi_w * pooled[i + 1].v[sel]
    return FlowField(u, v)


def warp(ref: np.ndarray, flow: FlowField) -> np.ndarray:
    """Backward warp: ``out[y, x] = ref(x + u, y + v)``, bilinear, edge-clamped."""
    ref = np.asarray(ref, dtype=float)
    h, w = ref.shape
    if flow.shape != ref.shape:
        raise ValueError("flow and raster dimensions differ")
    ys, xs = np.mgrid[0:h, 0:w]
    sx = np.clip(xs + np.asarray(flow.u, float), 0, w - 1)
    sy = np.clip(ys + np.asarray(flow.v, float), 0, h - 1)
    x0 = np.floor(sx).astype(int)
    y0 = np.floor(sy).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = sx - x0
    ay = sy - y0
    top = ref[y0, x0] * (1 - ax) + ref[y0, x1] * ax
    bottom = ref[y1, x0] * (1 - ax) + ref[y1, x1] * ax
    return top * (1 - ay) + bottom * ay


def pwarp_residual(cur: np.ndarray, ref: np.ndarray, flow: FlowField, depth: np.ndarray) -> np.ndarray:
    """Signed residual between ``cur`` and ``ref`` aligned by the adaptive flow."""
    cur = np.asarray(cur, dtype=float)
    if cur.shape != np.shape(ref):
        raise ValueError("current and reference rasters differ in size")
    return cur - warp(ref, adaptive_flow(flow, depth))


def pad_to_ctu(a: np.ndarray) -> np.ndarray:
    """Replicate-pad a 2-D array up to multiples of the CTU size."""
    h, w = a.shape
    ph = -h % CTU_SIZE
    pw = -w % CTU_SIZE
    return np.pad(a, ((0, ph), (0, pw)), mode="edge")


def pad_depth(depth: np.ndarray, height: int, width: int) -> np.ndarray:
    """Replicate-pad a per-cell depth grid to cover the CTU-padded frame."""
    gh = -(-height // CTU_SIZE) * CTU_SIZE // CELL
    gw = -(-width // CTU_SIZE) * CTU_SIZE // CELL
    depth = np.asarray(depth, dtype=float)
    return np.pad(depth, ((0, gh - depth.shape[0]), (0, gw - depth.shape[1])), mode="edge")


def pwarp_frame(cur: np.ndarray, ref: np.ndarray, flow: FlowField, depth: np.ndarray):
    """P-warp arbitrary-size frames: pad to CTU multiples, process, crop.

    Returns ``(residual, adaptive_flow)`` cropped to the input size.
    """
    h, w = np.shape(cur)
    if np.shape(ref) != (h, w) or flow.shape != (h, w):
        raise ValueError("input dimensions differ")
    padded = FlowField(pad_to_ctu(np.asarray(flow.u, float)), pad_to_ctu(np.asarray(flow.v, float)))
    d = pad_depth(depth, h, w)
    vp = adaptive_flow(padded, d)
    vp = FlowField(vp.u[:h, :w], vp.v[:h, :w])
    res = np.asarray(cur, dtype=float) - warp(ref, vp)
    return res, vp
