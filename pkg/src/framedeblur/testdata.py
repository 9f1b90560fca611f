"""Bundled test images and synthetic PSF generators."""
from __future__ import annotations

from importlib import resources

import numpy as np

from .imgcore import Psf

__all__ = ["cameraman", "satellite", "perturbed_gaussian_psf", "load_builtin"]


def cameraman() -> np.ndarray:
    """256 x 256 cameraman photograph (public domain), intensities in [0, 255]."""
    from .pgm import read_pgm

    with resources.as_file(resources.files(__package__) / "data" / "cameraman.pgm") as path:
        return read_pgm(path)


def satellite(size: int = 128) -> np.ndarray:
    """Sparse bright satellite-like object on a black background."""
    img = np.zeros((size, size))
    s = size / 128.0
    yy, xx = np.mgrid[:size, :size] / s

    def box(r0, r1, c0, c1, val):
        img[(yy >= r0) & (yy < r1) & (xx >= c0) & (xx < c1)] = val

    box(56, 72, 54, 74, 200.0)   # body
    box(60, 68, 22, 52, 120.0)   # left panel
    box(60, 68, 76, 106, 120.0)  # right panel
    box(40, 56, 61, 67, 160.0)   # mast
    img[(yy - 36) ** 2 + (xx - 64) ** 2 < 16] = 255.0  # dish
    box(72, 80, 58, 70, 90.0)    # engine
    # stripe texture on the panels
    panels = ((yy >= 60) & (yy < 68)) & (((xx >= 22) & (xx < 52)) | ((xx >= 76) & (xx < 106)))
    img[panels & (np.floor(xx) % 4 == 0)] = 60.0
    return img


def perturbed_gaussian_psf(size: int = 15, sigma=(2.0, 3.0), tilt: float = 0.6,
                           noise: float = 0.15, seed: int = 3) -> Psf:
    """Oblique Gaussian with a multiplicative random perturbation (not quadrantally symmetric).

    Mimics an experimentally measured, slightly irregular blur.
    """
    rng = np.random.default_rng(seed)
    x = np.arange(size) - size // 2
    X, Y = np.meshgrid(x, x, indexing="ij")
    s1, s2 = sigma
    cov = np.array([[s1**2, tilt * s1 * s2], [tilt * s1 * s2, s2**2]])
    icov = np.linalg.inv(cov)
    g = np.exp(-0.5 * (icov[0, 0] * X**2 + 2 * icov[0, 1] * X * Y + icov[1, 1] * Y**2))
    g *= 1.0 + noise * rng.random(g.shape)
    return Psf(g / g.sum())


def load_builtin(name: str) -> np.ndarray:
    key = name.lower()
    if key == "cameraman":
        return cameraman()
    if key == "satellite":
        return satellite(128)
    raise ValueError(f"unknown builtin image {name!r}")
