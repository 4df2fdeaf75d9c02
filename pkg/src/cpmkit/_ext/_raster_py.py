"""Numpy fallback for the compiled pixel kernels (same signatures, same bits)."""

import numpy as np


def box_blur(src: np.ndarray, radius: int) -> np.ndarray:
    h, w = src.shape
    k = 2 * radius + 1
    n = k * k
    padded = np.pad(src.astype(np.int64), radius, mode="edge")
    # integral image with a zero row/column in front
    integral = np.zeros((h + k, w + k), dtype=np.int64)
    integral[1:, 1:] = padded.cumsum(axis=0).cumsum(axis=1)
    s = integral[k:, k:] - integral[:-k, k:] - integral[k:, :-k] + integral[:-k, :-k]
    return ((2 * s + n) // (2 * n)).astype(np.uint8)


def laplacian_sums(src: np.ndarray) -> tuple[int, int, int]:
    p = src.astype(np.int64)
    lap = 4 * p[1:-1, 1:-1] - p[1:-1, :-2] - p[1:-1, 2:] - p[:-2, 1:-1] - p[2:, 1:-1]
    return int(lap.sum()), int((lap * lap).sum()), lap.size


def warp_nearest(src: np.ndarray, out_h: int, out_w: int,
                 a: float, b: float, c: float, d: float, e: float, f: float) -> np.ndarray:
    h, w = src.shape
    u = (np.arange(out_w, dtype=np.float64) + 0.5) / out_w
    v = (np.arange(out_h, dtype=np.float64) + 0.5) / out_h
    uu, vv = np.meshgrid(u, v)
    x = a * uu + b * vv + c
    y = d * uu + e * vv + f
    col = np.floor(x * w)
    row = np.floor(y * h)
    inside = (col >= 0) & (col < w) & (row >= 0) & (row < h)
    out = np.zeros((out_h, out_w), dtype=np.uint8)
    out[inside] = src[row[inside].astype(np.intp), col[inside].astype(np.intp)]
    return out
