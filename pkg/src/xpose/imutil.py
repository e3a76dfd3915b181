"""Small shared image operations: grayscale, resizing, masked NCC."""

from __future__ import annotations

import numpy as np

_LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


def to_gray(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float32)
    if arr.ndim == 2:
        return arr
    return arr @ _LUMA


def resize(image: np.ndarray, size: int) -> np.ndarray:
    """Resize a square image to size x size.

    Uses exact block averaging when the ratio is integral (the common 256->64
    path), bilinear sampling otherwise.
    """
    arr = np.asarray(image, dtype=np.float32)
    h = arr.shape[0]
    if h == size:
        return arr.copy()
    if h % size == 0:
        k = h // size
        if arr.ndim == 3:
            return arr.reshape(size, k, size, k, -1).mean(axis=(1, 3))
        return arr.reshape(size, k, size, k).mean(axis=(1, 3))
    scale = h / size
    c = np.clip((np.arange(size) + 0.5) * scale - 0.5, 0, h - 1)
    i0 = np.floor(c).astype(np.intp)
    i1 = np.minimum(i0 + 1, h - 1)
    f = (c - i0).astype(np.float32)
    shape0 = (size,) + (1,) * (arr.ndim - 1)
    rows = arr[i0] * (1 - f).reshape(shape0) + arr[i1] * f.reshape(shape0)
    shape1 = (1, size) + (1,) * (arr.ndim - 2)
    out = rows[:, i0] * (1 - f).reshape(shape1) + rows[:, i1] * f.reshape(shape1)
    return out


def resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    """Downsample a boolean mask, keeping a pixel set if any source pixel in
    its block is set."""
    m = np.asarray(mask, dtype=bool)
    h = m.shape[0]
    if h == size:
        return m.copy()
    if h % size == 0:
        k = h // size
        return m.reshape(size, k, size, k).any(axis=(1, 3))
    return resize(m.astype(np.float32), size) > 0.25


def disk_mask(size: int, radius_frac: float = 0.48) -> np.ndarray:
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    return (xx - c) ** 2 + (yy - c) ** 2 <= (radius_frac * size) ** 2


def masked_ncc(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    """Zero-mean normalized cross correlation over ``mask``; 0.0 when either
    signal is constant."""
    av = a[mask] if mask is not None else a.ravel()
    bv = b[mask] if mask is not None else b.ravel()
    if av.size == 0:
        return 0.0
    av = av - av.mean()
    bv = bv - bv.mean()
    na = float(np.linalg.norm(av))
    nb = float(np.linalg.norm(bv))
    if na < 1e-6 or nb < 1e-6:
        return 0.0
    return float(np.dot(av, bv) / (na * nb))


def bbox_normalize(image: np.ndarray, out_size: int, background: int = 248) -> np.ndarray:
    """Crop the tight square around non-background content and rescale it to
    out_size x out_size (white fill).  Returns a white image when nothing is
    below the background threshold."""
    arr = np.asarray(image)
    fg = np.any(arr < background, axis=-1) if arr.ndim == 3 else arr < background
    rows = np.flatnonzero(fg.any(axis=1))
    cols = np.flatnonzero(fg.any(axis=0))
    out_shape = (out_size, out_size, 3) if arr.ndim == 3 else (out_size, out_size)
    if rows.size == 0:
        return np.full(out_shape, 255, dtype=np.uint8)
    cy = (rows[0] + rows[-1] + 1) / 2.0
    cx = (cols[0] + cols[-1] + 1) / 2.0
    side = float(max(rows[-1] - rows[0] + 1, cols[-1] - cols[0] + 1))
    scale = side / out_size
    xs = (np.arange(out_size) + 0.5) * scale + (cx - side / 2.0)
    ys = (np.arange(out_size) + 0.5) * scale + (cy - side / 2.0)
    xg, yg = np.meshgrid(xs, ys)
    from .geom import _bilinear_sample  # local import to avoid a cycle

    fill = (255, 255, 255) if arr.ndim == 3 else 255
    out = _bilinear_sample(arr, xg, yg, fill)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def centroid_normalize(
    image: np.ndarray, out_size: int, background: int = 248, span: float = 2.9
) -> np.ndarray:
    """Recenter on the foreground centroid and rescale by sqrt(area).

    Centroid and area are invariant under content rotation, so two images of
    the same object differing by an in-plane rotation map to crops that are
    exact rotations of each other, unlike bbox-based normalization.  The crop
    side is span * sqrt(area / pi).
    """
    arr = np.asarray(image)
    fg = np.any(arr < background, axis=-1) if arr.ndim == 3 else arr < background
    area = float(fg.sum())
    out_shape = (out_size, out_size, 3) if arr.ndim == 3 else (out_size, out_size)
    if area < 4:
        return np.full(out_shape, 255, dtype=np.uint8)
    ys, xs = np.nonzero(fg)
    cy = ys.mean() + 0.5
    cx = xs.mean() + 0.5
    side = span * np.sqrt(area / np.pi)
    scale = side / out_size
    gx = (np.arange(out_size) + 0.5) * scale + (cx - side / 2.0)
    gy = (np.arange(out_size) + 0.5) * scale + (cy - side / 2.0)
    xg, yg = np.meshgrid(gx, gy)
    from .geom import _bilinear_sample  # local import to avoid a cycle

    fill = (255, 255, 255) if arr.ndim == 3 else 255
    out = _bilinear_sample(arr, xg, yg, fill)
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def normalized_feature(image: np.ndarray, size: int = 64, mask: np.ndarray | None = None) -> np.ndarray:
    """Downsampled, grayscale, zero-mean, unit-norm feature vector used for
    fast appearance comparison."""
    g = resize(to_gray(image), size)
    if mask is None:
        v = g.ravel()
    else:
        v = g[mask]
    v = v - v.mean()
    n = np.linalg.norm(v)
    if n < 1e-6:
        return np.zeros_like(v)
    return v / n
