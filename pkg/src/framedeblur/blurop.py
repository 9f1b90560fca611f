"""The blurring operator ``A`` under boundary conditions or the rectangular model.

Two models are supported:

* ``"bc"`` -- square ``n^2 x n^2`` matrix obtained by imposing a boundary
  condition. Products are computed by padding, FFT convolution on the padded
  grid and cropping the interior.
* ``"rect"`` -- rectangular ``n^2 x m^2`` matrix ``M A_big`` with ``A_big`` the
  periodic convolution on the ``m x m`` grid and ``M`` the FOV selection.

``transpose`` always applies the reblurring operator (BC matrix of the PSF
rotated by 180 degrees). For zero and periodic BCs and for the rectangular
model this coincides with the true adjoint.
"""
from __future__ import annotations

import logging
from typing import Optional

import numpy as np
from scipy import fft as sfft

from .boundary import BoundaryCondition, FovMask, mask_select, pad, zero_insert
from .imgcore import Psf

__all__ = ["BlurOperator", "estimate_norm", "psf_otf", "DENSE_LIMIT"]

log = logging.getLogger(__name__)

DENSE_LIMIT = 32


def psf_otf(psf: Psf, shape) -> np.ndarray:
    """Real-FFT transfer function of ``psf`` circularly centered on a grid of ``shape``."""
    p, q = psf.shape
    if p > shape[0] or q > shape[1]:
        raise ValueError(f"PSF {psf.shape} larger than grid {tuple(shape)}")
    big = np.zeros(shape)
    big[:p, :q] = psf.weights
    big = np.roll(big, (-psf.center[0], -psf.center[1]), axis=(0, 1))
    return sfft.rfft2(big)


def _as_grid(x, shape, what):
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1 and arr.size == shape[0] * shape[1]:
        return arr.reshape(shape), True
    if arr.shape != tuple(shape):
        raise ValueError(f"{what}: expected shape {tuple(shape)} (or its stacked vector), got {arr.shape}")
    return arr, False


class BlurOperator:
    """Spatially invariant blur ``A`` mapping ``m x m`` images to ``n x n`` observations.

    Parameters
    ----------
    psf : Psf
    n : int
        Side of the observed image (field of view).
    model : {"bc", "rect"}
    bc : BoundaryCondition or str
        Boundary condition for the ``"bc"`` model; ignored for ``"rect"``.
    """

    def __init__(self, psf: Psf, n: int, model: str = "bc", bc="zero"):
        self.psf = psf
        self.n = int(n)
        self.model = model
        if model == "bc":
            self.bc = BoundaryCondition.parse(bc)
            self.m = self.n
            self.margin = psf.reach()
            limit = self.n - 1 if self.bc is BoundaryCondition.ANTIREFLECTIVE else self.n
            if self.margin > limit:
                raise ValueError(f"PSF reach {self.margin} too large for n={self.n} with {self.bc.value} BCs")
            N = self.n + 2 * self.margin
            self._grid = (N, N)
            self.mask = None
        elif model == "rect":
            p, q = psf.shape
            if p != q:
                raise ValueError("the rectangular model needs a square PSF")
            self.bc = None
            self.m = self.n + p - 1
            self.margin = 0
            self._grid = (self.m, self.m)
            offset = (p - 1 - psf.center[0], q - 1 - psf.center[1])
            self.mask = FovMask((self.n, self.n), (self.m, self.m), offset)
        else:
            raise ValueError(f"unknown model {model!r}; expected 'bc' or 'rect'")
        self._otf = psf_otf(psf, self._grid)

    def __repr__(self):
        kind = self.bc.value if self.bc else "rect"
        return f"BlurOperator(n={self.n}, m={self.m}, model={kind!r}, psf={self.psf.shape})"

    @property
    def in_shape(self):
        return (self.m, self.m)

    @property
    def out_shape(self):
        return (self.n, self.n)

    def _convolve(self, img, conj=False):
        otf = np.conj(self._otf) if conj else self._otf
        return sfft.irfft2(sfft.rfft2(img) * otf, s=self._grid)

    def _extend(self, f):
        if self.margin == 0:
            return f
        return pad(f, self.bc, self.margin)

    def _crop(self, big):
        q = self.margin
        return big[q:q + self.n, q:q + self.n]

    def forward(self, f):
        """``A f``."""
        f, flat = _as_grid(f, self.in_shape, "forward")
        if self.model == "rect":
            out = mask_select(self._convolve(f), self.mask)
        else:
            out = self._crop(self._convolve(self._extend(f))).copy()
        return out.ravel() if flat else out

    def transpose(self, r):
        """``A^T r`` (reblurring ``A' r`` for reflective and antireflective BCs)."""
        r, flat = _as_grid(r, self.out_shape, "transpose")
        if self.model == "rect":
            out = self._convolve(zero_insert(r, self.mask), conj=True)
        else:
            out = self._crop(self._convolve(self._extend(r), conj=True)).copy()
        return out.ravel() if flat else out

    def normal(self, v):
        """``A A^T v`` on the observation grid."""
        return self.forward(self.transpose(v))

    def materialize_dense(self) -> np.ndarray:
        """Dense ``n^2 x m^2`` matrix, column ``j`` = ``A e_j``. Test-sized operators only."""
        if self.m > DENSE_LIMIT:
            raise ValueError(f"refusing to materialize m={self.m} > {DENSE_LIMIT}")
        size = self.m * self.m
        cols = np.empty((self.n * self.n, size))
        e = np.zeros(size)
        for j in range(size):
            e[j] = 1.0
            cols[:, j] = self.forward(e)
            e[j] = 0.0
        return cols


def estimate_norm(A: BlurOperator, precond, alpha: float, frame, iters: int = 20,
                  seed: Optional[int] = 0) -> float:
    """Power-iteration lower estimate of ``||K^T P K||`` with ``K = A W^T``.

    ``P`` is the shifted inverse ``(C C^T + alpha I)^{-1}`` of the spectral
    operator ``precond``. The returned value is the running maximum of the
    Rayleigh quotients, hence nondecreasing in ``iters``.
    """
    from .spectral import solve_shifted

    if iters < 1:
        raise ValueError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(frame.coeff_shape)
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        Kv = A.forward(frame.synthesize(v))
        w = frame.analyze(A.transpose(solve_shifted(precond, alpha, Kv)))
        est = max(est, float(np.vdot(v, w)))
        nw = np.linalg.norm(w)
        if nw == 0:
            break
        v = w / nw
    if est >= 1.0:
        log.warning("||K^T P K|| estimate %.4g >= 1: unit step may not converge; increase alpha", est)
    return est
