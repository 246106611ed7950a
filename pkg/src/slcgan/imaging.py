"""Raster export: sample grids, panel strips, and point scatters.

Pixel values in [-1, 1] map to bytes by the affine [0, 255] map with
round-half-even; grid padding is 2px of mid-gray.
"""

import numpy as np
from PIL import Image

GRID_PAD = 2
PAD_VALUE = 128  # mid-gray: the byte image of pixel value 0.0

# ColorBrewer-style categorical palette for cluster scatters
_PALETTE = np.array([
    [228, 26, 28], [55, 126, 184], [77, 175, 74], [152, 78, 163],
    [255, 127, 0], [166, 86, 40], [247, 129, 191], [0, 120, 120],
    [120, 120, 0], [60, 60, 60], [0, 0, 200], [200, 0, 200],
], dtype=np.uint8)


def to_uint8(images: np.ndarray) -> np.ndarray:
    """Map (N, C, H, W) floats in [-1, 1] to (N, H, W, C) uint8."""
    arr = np.asarray(images, dtype=np.float64)
    bytes_ = np.rint((arr + 1.0) * 0.5 * 255.0)
    return np.clip(bytes_, 0, 255).astype(np.uint8).transpose(0, 2, 3, 1)


def image_grid(images: np.ndarray, rows: int, cols: int, pad: int = GRID_PAD) -> np.ndarray:
    """Compose rows x cols images into one raster with padding on all sides.

    Output size is (rows*H + (rows+1)*pad, cols*W + (cols+1)*pad).
    """
    if len(images) != rows * cols:
        raise ValueError(f"grid needs {rows * cols} images, got {len(images)}")
    tiles = to_uint8(images)
    _, h, w, c = tiles.shape
    canvas = np.full((rows * h + (rows + 1) * pad, cols * w + (cols + 1) * pad, c),
                     PAD_VALUE, dtype=np.uint8)
    for r in range(rows):
        for col in range(cols):
            top = pad + r * (h + pad)
            left = pad + col * (w + pad)
            canvas[top:top + h, left:left + w] = tiles[r * cols + col]
    return canvas


def image_strip(images: np.ndarray, pad: int = GRID_PAD) -> np.ndarray:
    return image_grid(images, rows=1, cols=len(images), pad=pad)


def save_png(array: np.ndarray, path: str) -> None:
    """Write an (H, W, C) or (H, W) uint8 array as PNG."""
    arr = np.asarray(array, dtype=np.uint8)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    Image.fromarray(arr).save(path, format="PNG")


def point_scatter(points: np.ndarray, labels: np.ndarray | None = None,
                  size: int = 256, extent: float = 1.5) -> np.ndarray:
    """Render 2D points into an RGB raster (white background, 3x3 dots).

    Points are clipped to the square [-extent, extent]^2; colors follow the
    cluster palette when labels are given, black otherwise.
    """
    canvas = np.full((size, size, 3), 255, dtype=np.uint8)
    pts = np.asarray(points, dtype=np.float64)
    cols = np.clip(((pts[:, 0] + extent) / (2 * extent) * (size - 1)).round().astype(int),
                   0, size - 1)
    rows = np.clip(((extent - pts[:, 1]) / (2 * extent) * (size - 1)).round().astype(int),
                   0, size - 1)
    for i in range(len(pts)):
        color = (_PALETTE[int(labels[i]) % len(_PALETTE)] if labels is not None
                 else np.zeros(3, dtype=np.uint8))
        r0, r1 = max(rows[i] - 1, 0), min(rows[i] + 2, size)
        c0, c1 = max(cols[i] - 1, 0), min(cols[i] + 2, size)
        canvas[r0:r1, c0:c1] = color
    return canvas
