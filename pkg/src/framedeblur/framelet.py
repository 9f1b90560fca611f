"""Piecewise linear B-spline tight frame with reflective boundaries.

The 1-D masks are the low-pass ``[1, 2, 1] / 4``, the first difference
``sqrt(2) [1, 0, -1] / 4`` and the second difference ``[-1, 2, -1] / 4``,
each turned into an ``n x n`` matrix ``B_0, B_1, B_2`` by reflecting the
signal about its ends (edge sample repeated). The 2-D channels are
``B_{i,j} = B_i (x) B_j``: ``B_i`` acts along rows of the image array
(axis 0) and ``B_j`` along columns (axis 1).

The multilevel transform is undecimated and reuses the same filters at every
level, recursing on the ``(0, 0)`` channel, so ``W^T W = I`` holds exactly.

Coefficients are stored as an array of shape ``(8 * levels + 1, n, n)``.
Level ``l < levels`` contributes its 8 high-pass channels in lexicographic
``(i, j)`` order; the last level contributes all 9 channels, ``(0, 0)``
first. Flattening this array row-major gives the coefficient vector ``x``.
"""
from __future__ import annotations

import math

import numpy as np

__all__ = ["FrameOperator", "soft_threshold", "filter_matrices", "CHANNELS", "HIGHPASS"]

_S2 = math.sqrt(2.0) / 4.0
# taps applied to (x[i-1], x[i], x[i+1])
_TAPS = (
    (0.25, 0.5, 0.25),
    (_S2, 0.0, -_S2),
    (-0.25, 0.5, -0.25),
)
CHANNELS = [(i, j) for i in range(3) for j in range(3)]
HIGHPASS = CHANNELS[1:]


def _filt(x, taps, axis):
    a, b, c = taps
    x = np.moveaxis(x, axis, 0)
    ext = np.concatenate([x[:1], x, x[-1:]], axis=0)
    y = a * ext[:-2] + b * ext[1:-1] + c * ext[2:]
    return np.moveaxis(y, 0, axis)


def _filt_t(y, taps, axis):
    a, b, c = taps
    y = np.moveaxis(y, axis, 0)
    u = np.zeros((y.shape[0] + 2,) + y.shape[1:])
    u[:-2] += a * y
    u[1:-1] += b * y
    u[2:] += c * y
    x = u[1:-1]
    x[0] += u[0]
    x[-1] += u[-1]
    return np.moveaxis(x, 0, axis)


def filter_matrices(n: int):
    """Dense ``B_0, B_1, B_2`` of size ``n x n`` (for inspection and tests)."""
    eye = np.eye(n)
    return tuple(_filt(eye, taps, 0) for taps in _TAPS)


class FrameOperator:
    """Analysis ``W`` and synthesis ``W^T`` for ``n x n`` images.

    Parameters
    ----------
    n : int
        Image side.
    levels : int
        Decomposition depth, ``n >= 2**levels``.
    """

    def __init__(self, n: int, levels: int = 4):
        if levels < 1:
            raise ValueError("levels must be >= 1")
        if n < 2**levels:
            raise ValueError(f"n={n} too small for {levels} levels (need n >= {2**levels})")
        self.n = int(n)
        self.levels = int(levels)

    def __repr__(self):
        return f"FrameOperator(n={self.n}, levels={self.levels})"

    @property
    def coeff_shape(self):
        return (8 * self.levels + 1, self.n, self.n)

    @property
    def size(self) -> int:
        return (8 * self.levels + 1) * self.n * self.n

    def low_index(self) -> int:
        return 8 * (self.levels - 1)

    def channel_index(self, level: int, i: int, j: int) -> int:
        """Position of channel ``(i, j)`` of 1-based ``level`` in the coefficient array."""
        if not 1 <= level <= self.levels:
            raise ValueError(f"level {level} out of range")
        if (i, j) == (0, 0):
            if level != self.levels:
                raise ValueError("the (0,0) channel is only stored at the last level")
            return self.low_index()
        base = 8 * (level - 1) + (1 if level == self.levels else 0)
        return base + HIGHPASS.index((i, j))

    def _check_image(self, image):
        img = np.asarray(image, dtype=np.float64)
        if img.ndim == 1 and img.size == self.n * self.n:
            img = img.reshape(self.n, self.n)
        if img.shape != (self.n, self.n):
            raise ValueError(f"expected a {self.n}x{self.n} image, got shape {img.shape}")
        return img

    def analyze(self, image) -> np.ndarray:
        """``W f``: frame coefficients of an image."""
        low = self._check_image(image)
        out = np.empty(self.coeff_shape)
        k = 0
        for level in range(1, self.levels + 1):
            rows = [_filt(low, t, 0) for t in _TAPS]
            chans = {(i, j): _filt(rows[i], _TAPS[j], 1) for i, j in CHANNELS}
            if level == self.levels:
                out[k] = chans[0, 0]
                k += 1
            for ij in HIGHPASS:
                out[k] = chans[ij]
                k += 1
            low = chans[0, 0]
        return out

    def synthesize(self, coeffs) -> np.ndarray:
        """``W^T x``: image from frame coefficients."""
        x = np.asarray(coeffs, dtype=np.float64)
        if x.ndim == 1 and x.size == self.size:
            x = x.reshape(self.coeff_shape)
        if x.shape != self.coeff_shape:
            raise ValueError(f"expected coefficients of shape {self.coeff_shape}, got {x.shape}")
        L = self.levels
        low = x[self.low_index()]
        for level in range(L, 0, -1):
            start = 8 * (level - 1) + (1 if level == L else 0)
            chans = {ij: x[start + k] for k, ij in enumerate(HIGHPASS)}
            chans[0, 0] = low
            img = np.zeros((self.n, self.n))
            for i in range(3):
                row = sum(_filt_t(chans[i, j], _TAPS[j], 1) for j in range(3))
                img += _filt_t(row, _TAPS[i], 0)
            low = img
        return low


def soft_threshold(coeffs, mu: float) -> np.ndarray:
    """Componentwise shrinkage ``sgn(x) max(|x| - mu, 0)``."""
    if mu < 0:
        raise ValueError(f"threshold must be >= 0, got {mu!r}")
    x = np.asarray(coeffs, dtype=np.float64)
    if mu == 0:
        return x.copy()
    return x - np.clip(x, -mu, mu)
