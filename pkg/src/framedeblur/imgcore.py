"""Image and PSF value types, noise injection and quality metrics.

Images are plain 2-D ``float64`` numpy arrays in the ``[0, 255]`` intensity
convention. Whenever an image is treated as a vector it is stacked row-major
(``image.ravel()``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

__all__ = [
    "Psf",
    "NoiseSpec",
    "as_image",
    "add_gaussian_noise",
    "psnr",
    "symmetrize_psf",
    "is_quadrantally_symmetric",
    "gaussian_psf",
    "motion_psf",
    "delta_psf",
]

_SUM_TOL = 1e-12


def as_image(data) -> np.ndarray:
    """Return ``data`` as a finite, nonempty 2-D float64 array."""
    img = np.asarray(data, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"expected a nonempty 2-D image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("image contains non-finite values")
    return img


@dataclass(frozen=True, eq=False)
class Psf:
    """Nonnegative, unit-sum blur kernel with a designated center pixel.

    Parameters
    ----------
    weights : array_like
        2-D kernel. Must be nonnegative and sum to one.
    center : tuple of int, optional
        Zero-based ``(row, col)`` of the kernel origin. Defaults to
        ``(rows // 2, cols // 2)``.
    normalize : bool
        Rescale ``weights`` to unit sum before validation.
    """

    weights: np.ndarray
    center: Tuple[int, int] = None  # type: ignore[assignment]
    normalize: bool = field(default=False, repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.size == 0:
            raise ValueError(f"PSF must be a nonempty 2-D array, got shape {w.shape}")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("PSF weights must be finite and nonnegative")
        if self.normalize:
            total = w.sum()
            if total <= 0:
                raise ValueError("cannot normalize an all-zero PSF")
            w = w / total
        if abs(w.sum() - 1.0) > _SUM_TOL:
            raise ValueError(f"PSF weights must sum to 1 (got {w.sum()!r})")
        center = self.center
        if center is None:
            center = (w.shape[0] // 2, w.shape[1] // 2)
        center = (int(center[0]), int(center[1]))
        if not (0 <= center[0] < w.shape[0] and 0 <= center[1] < w.shape[1]):
            raise ValueError(f"PSF center {center} outside kernel of shape {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "center", center)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.weights.shape

    def rotated(self) -> "Psf":
        """The PSF rotated by 180 degrees (used for reblurring)."""
        p, q = self.weights.shape
        return Psf(self.weights[::-1, ::-1], (p - 1 - self.center[0], q - 1 - self.center[1]))

    def reach(self) -> int:
        """Largest distance from the center to a kernel edge, over all four sides."""
        p, q = self.weights.shape
        r, c = self.center
        return max(r, c, p - 1 - r, q - 1 - c)

    def centered(self) -> np.ndarray:
        """Embed the kernel in an odd ``(2R+1, 2R+1)`` array with the center in the middle."""
        R = self.reach()
        out = np.zeros((2 * R + 1, 2 * R + 1))
        r, c = self.center
        p, q = self.weights.shape
        out[R - r:R - r + p, R - c:R - c + q] = self.weights
        return out


@dataclass(frozen=True)
class NoiseSpec:
    """Relative Gaussian noise level (``0.01`` means 1%) and PRNG seed."""

    level: float
    seed: Optional[int] = 0

    def __post_init__(self):
        if not (self.level >= 0 and math.isfinite(self.level)):
            raise ValueError(f"noise level must be >= 0, got {self.level!r}")


def add_gaussian_noise(clean, spec: NoiseSpec) -> Tuple[np.ndarray, float]:
    """Add white Gaussian noise scaled to ``level * ||clean||``.

    The Gaussian draw is renormalized so the noise norm is exactly
    ``delta = level * ||clean||``, which is returned alongside the noisy image.
    """
    clean = as_image(clean)
    norm = float(np.linalg.norm(clean))
    delta = spec.level * norm
    if spec.level == 0 or norm == 0:
        return clean.copy(), 0.0
    rng = np.random.default_rng(spec.seed)
    w = rng.standard_normal(clean.shape)
    noisy = clean + (delta / np.linalg.norm(w)) * w
    return noisy, delta


def psnr(reference, candidate) -> float:
    """Peak signal-to-noise ratio ``20 log10(255 n / ||f - f~||)`` of a square image.

    Returns ``math.inf`` when the images are identical.
    """
    f = as_image(reference)
    g = as_image(candidate)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch: {f.shape} vs {g.shape}")
    if f.shape[0] != f.shape[1]:
        raise ValueError(f"PSNR expects square images, got {f.shape}")
    err = float(np.linalg.norm(f - g))
    if err == 0.0:
        return math.inf
    return 20.0 * math.log10(255.0 * f.shape[0] / err)


def symmetrize_psf(h: Psf) -> Psf:
    """Closest quadrantally symmetric PSF in the Frobenius norm.

    Averages the kernel with its reflections about the center row and the
    center column. The result lives on an odd ``(2R+1)``-square support with
    the center in the middle, so a quadrantally symmetric input with a
    central center is returned unchanged.
    """
    H = h.centered()
    Hs = (H + H[::-1, :] + H[:, ::-1] + H[::-1, ::-1]) / 4.0
    # averaging can drift the sum by an ulp
    Hs = Hs / Hs.sum()
    R = H.shape[0] // 2
    return Psf(Hs, (R, R))


def is_quadrantally_symmetric(h: Psf, tol: float = 1e-12) -> bool:
    H = h.centered()
    return bool(
        np.max(np.abs(H - H[::-1, :])) <= tol and np.max(np.abs(H - H[:, ::-1])) <= tol
    )


def gaussian_psf(size: int, sigma: float) -> Psf:
    """Isotropic ``size x size`` Gaussian kernel (MATLAB ``fspecial`` layout)."""
    if size < 1 or sigma <= 0:
        raise ValueError("gaussian_psf needs size >= 1 and sigma > 0")
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (2.0 * sigma**2))
    return Psf(g / g.sum())


def motion_psf(length: int, angle_deg: float = 0.0) -> Psf:
    """Linear motion blur of ``length`` pixels along ``angle_deg``, on an odd support."""
    if length < 1:
        raise ValueError("motion length must be >= 1")
    size = length if length % 2 else length + 1
    k = np.zeros((size, size))
    c = size // 2
    theta = math.radians(angle_deg)
    # supersample the segment and splat onto the grid
    for t in np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, 8 * length + 1):
        i = int(round(c - t * math.sin(theta)))
        j = int(round(c + t * math.cos(theta)))
        k[i, j] += 1.0
    return Psf(k / k.sum())


def delta_psf() -> Psf:
    return Psf(np.ones((1, 1)))
