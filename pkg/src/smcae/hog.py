"""Histogram-of-oriented-gradients features and the image/feature plumbing
around them: bilinear resizing and the fixed-range feature scaler that keeps
descriptors inside the sigmoid reconstruction range.

Images are 2-D float arrays in [0, 1], indexed [row, col].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class HogConfig:
    cell_size: int = 3
    orientation_bins: int = 9
    block_size: int = 2       # cells per block side
    block_stride: int = 1     # cells
    signed: bool = False      # False: orientations folded into [0, 180)
    clip: float = 0.2         # L2-hys clipping threshold

    def __post_init__(self):
        if self.cell_size < 1:
            raise ValueError("cell_size must be >= 1")
        if self.orientation_bins < 2:
            raise ValueError("orientation_bins must be >= 2")
        if self.block_size < 1 or self.block_stride < 1:
            raise ValueError("block geometry must be positive")


def _check_image(img):
    img = np.asarray(img, dtype=float)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a nonempty 2-D image, got shape {img.shape}")
    return img


def resize(img, width: int, height: int) -> np.ndarray:
    """Bilinear resize using the pixel-center convention
    ``src = (dst + 0.5) * scale - 0.5`` with edge clamping."""
    img = _check_image(img)
    if width < 1 or height < 1:
        raise ValueError(f"target dimensions must be >= 1, got {width}x{height}")
    h, w = img.shape
    if (w, h) == (width, height):
        return img.copy()
    sy = (np.arange(height) + 0.5) * (h / height) - 0.5
    sx = (np.arange(width) + 0.5) * (w / width) - 0.5
    y0 = np.clip(np.floor(sy), 0, h - 1).astype(int)
    x0 = np.clip(np.floor(sx), 0, w - 1).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = np.clip(sy - y0, 0.0, 1.0)[:, None]
    fx = np.clip(sx - x0, 0.0, 1.0)[None, :]
    top = img[np.ix_(y0, x0)] * (1 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1 - fx) + img[np.ix_(y1, x1)] * fx
    return top * (1 - fy) + bot * fy


def hog_length(width: int, height: int, cfg: HogConfig = HogConfig()) -> int:
    """Descriptor length for an image of the given size; trailing pixels past
    the last full cell are dropped."""
    cy = height // cfg.cell_size
    cx = width // cfg.cell_size
    by = (cy - cfg.block_size) // cfg.block_stride + 1
    bx = (cx - cfg.block_size) // cfg.block_stride + 1
    if by < 1 or bx < 1:
        return 0
    return by * bx * cfg.block_size * cfg.block_size * cfg.orientation_bins


def hog(img, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """HOG descriptor: centered-difference gradients, per-cell orientation
    histograms with linear bin interpolation, and L2-hys block normalization,
    concatenated in row-major block order."""
    img = _check_image(img)
    h, w = img.shape
    cy = h // cfg.cell_size
    cx = w // cfg.cell_size
    if cy < cfg.block_size or cx < cfg.block_size:
        raise ValueError(
            f"image {h}x{w} too small for {cfg.block_size}x{cfg.block_size} blocks "
            f"of {cfg.cell_size}px cells")

    # [-1, 0, 1] gradients with replicated edges.
    padded_x = np.pad(img, ((0, 0), (1, 1)), mode="edge")
    padded_y = np.pad(img, ((1, 1), (0, 0)), mode="edge")
    gx = padded_x[:, 2:] - padded_x[:, :-2]
    gy = padded_y[2:, :] - padded_y[:-2, :]
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    if cfg.signed:
        period = 2.0 * np.pi
        ang = np.mod(ang, period)
    else:
        period = np.pi
        ang = np.mod(ang, period)

    nb = cfg.orientation_bins
    coord = ang * (nb / period)
    lo = np.floor(coord).astype(int) % nb
    frac = coord - np.floor(coord)
    hi = (lo + 1) % nb

    # Per-cell histograms, trailing pixels dropped.
    hpix, wpix = cy * cfg.cell_size, cx * cfg.cell_size
    cells = np.zeros((cy, cx, nb))
    rows = np.repeat(np.arange(cy), cfg.cell_size)
    cols = np.repeat(np.arange(cx), cfg.cell_size)
    cell_r = rows[:, None] * np.ones(wpix, dtype=int)
    cell_c = np.ones(hpix, dtype=int)[:, None] * cols[None, :]
    flat_cell = (cell_r * cx + cell_c).ravel()
    m_crop = mag[:hpix, :wpix].ravel()
    lo_crop = lo[:hpix, :wpix].ravel()
    hi_crop = hi[:hpix, :wpix].ravel()
    f_crop = frac[:hpix, :wpix].ravel()
    np.add.at(cells.reshape(-1, nb), (flat_cell, lo_crop), m_crop * (1.0 - f_crop))
    np.add.at(cells.reshape(-1, nb), (flat_cell, hi_crop), m_crop * f_crop)

    # L2-hys over sliding blocks.
    bs, stride = cfg.block_size, cfg.block_stride
    blocks = []
    for by in range(0, cy - bs + 1, stride):
        for bx in range(0, cx - bs + 1, stride):
            v = cells[by:by + bs, bx:bx + bs, :].ravel()
            norm = np.sqrt(np.sum(v * v))
            if norm > 0.0:
                v = np.minimum(v / norm, cfg.clip)
                norm2 = np.sqrt(np.sum(v * v))
                if norm2 > 0.0:
                    v = v / norm2
            blocks.append(v)
    return np.concatenate(blocks)


def hog_stack(images, cfg: HogConfig = HogConfig()) -> np.ndarray:
    """Descriptor matrix, one row per image."""
    return np.array([hog(img, cfg) for img in images])


@dataclass
class FeatureScaler:
    """Per-dimension min-max rescaling into [lo, hi], fit on training data and
    persisted alongside models. Transformed values are clipped into the target
    range; constant dimensions map to the range midpoint."""

    lo: float = 0.1
    hi: float = 0.9
    mins: np.ndarray | None = None
    maxs: np.ndarray | None = None

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        self.mins = X.min(axis=0)
        self.maxs = X.max(axis=0)
        return self

    def transform(self, X):
        if self.mins is None:
            raise ValueError("scaler must be fit before transform")
        X = np.asarray(X, dtype=float)
        span = self.maxs - self.mins
        mid = 0.5 * (self.lo + self.hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = self.lo + (self.hi - self.lo) * (X - self.mins) / span
        out = np.where(span > 0.0, out, mid)
        return np.clip(out, self.lo, self.hi)

    def fit_transform(self, X):
        return self.fit(X).transform(X)

    def to_arrays(self):
        return {"scaler_lo": np.array(self.lo), "scaler_hi": np.array(self.hi),
                "scaler_mins": self.mins, "scaler_maxs": self.maxs}

    @classmethod
    def from_arrays(cls, arrays):
        return cls(lo=float(arrays["scaler_lo"]), hi=float(arrays["scaler_hi"]),
                   mins=np.asarray(arrays["scaler_mins"]),
                   maxs=np.asarray(arrays["scaler_maxs"]))
