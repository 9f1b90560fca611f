"""Fast-transform diagonalization of structured blur matrices.

``C = T diag(lambda) T^{-1}`` where ``T`` is

* the unitary 2-D DFT (periodic BCs, any PSF),
* the orthonormal 2-D DCT-II (reflective BCs, quadrantally symmetric PSF),
* the antireflective transform (antireflective BCs, quadrantally symmetric PSF).

The antireflective transform is not unitary. In one dimension its columns
are the constant vector, the DST-I sine vectors supported on the interior
points ``1..n-2``, and the linear ramp ``i / (n - 1)``. The 2-D transform is
the tensor product. Wherever ``C^T`` appears for the real transforms, the
reblurring matrix ``C'`` is meant, which equals ``C`` for symmetric PSFs, so
the shifted operator is ``T diag(lambda^2 + alpha) T^{-1}``.
"""
from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass

import numpy as np
from scipy import fft as sfft

from .imgcore import Psf, is_quadrantally_symmetric

__all__ = [
    "TransformKind",
    "SpectralOperator",
    "build_spectral",
    "solve_shifted",
    "apply_filtered",
    "phi_alpha",
    "forward_transform",
    "inverse_transform",
]


class TransformKind(enum.Enum):
    FOURIER = "fourier"
    COSINE = "cosine"
    ANTIREFLECTIVE = "antireflective"

    @classmethod
    def parse(cls, value) -> "TransformKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"dft": "fourier", "fft": "fourier", "dct": "cosine", "ar": "antireflective"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown transform kind {value!r}") from None


def _ar_analysis_1d(x, axis):
    """``T^{-1}`` along one axis."""
    x = np.moveaxis(x, axis, 0)
    n = x.shape[0]
    c0 = x[0]
    cl = x[-1] - x[0]
    ramp = (np.arange(1, n - 1) / (n - 1)).reshape((-1,) + (1,) * (x.ndim - 1))
    mid = sfft.dst(x[1:-1] - c0 - ramp * cl, type=1, norm="ortho", axis=0)
    out = np.concatenate([c0[None], mid, cl[None]], axis=0)
    return np.moveaxis(out, 0, axis)


def _ar_synthesis_1d(c, axis):
    """``T`` along one axis."""
    c = np.moveaxis(c, axis, 0)
    n = c.shape[0]
    ramp = (np.arange(n) / (n - 1)).reshape((-1,) + (1,) * (c.ndim - 1))
    x = c[0] + ramp * c[-1]
    x[1:-1] += sfft.idst(c[1:-1], type=1, norm="ortho", axis=0)
    return np.moveaxis(x, 0, axis)


def forward_transform(kind, x) -> np.ndarray:
    """``T^{-1} x`` for a 2-D array."""
    kind = TransformKind.parse(kind)
    x = np.asarray(x)
    if kind is TransformKind.FOURIER:
        return sfft.fft2(x, norm="ortho")
    if kind is TransformKind.COSINE:
        return sfft.dctn(x, type=2, norm="ortho")
    return _ar_analysis_1d(_ar_analysis_1d(np.asarray(x, dtype=np.float64), 0), 1)


def inverse_transform(kind, c) -> np.ndarray:
    """``T c`` for a 2-D array of transform coefficients."""
    kind = TransformKind.parse(kind)
    if kind is TransformKind.FOURIER:
        return sfft.ifft2(c, norm="ortho")
    if kind is TransformKind.COSINE:
        return sfft.idctn(c, type=2, norm="ortho")
    return _ar_synthesis_1d(_ar_synthesis_1d(np.asarray(c, dtype=np.float64), 0), 1)


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """A BC blur matrix of size ``n^2`` stored by its eigenvalues in the ``kind`` transform domain."""

    kind: TransformKind
    n: int
    eigenvalues: np.ndarray
    psf_hash: str

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def spectrum_sq(self) -> np.ndarray:
        """``|lambda|^2``, the spectrum of ``C C^T``."""
        return np.abs(self.eigenvalues) ** 2

    def _grid(self, x):
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim == 1 and arr.size == self.n * self.n:
            return arr.reshape(self.shape), True
        if arr.shape != self.shape:
            raise ValueError(f"expected shape {self.shape}, got {arr.shape}")
        return arr, False

    def apply_diag(self, x, diag) -> np.ndarray:
        """``T diag(d) T^{-1} x`` for a real result."""
        x, flat = self._grid(x)
        y = inverse_transform(self.kind, forward_transform(self.kind, x) * diag)
        y = np.real(y) if self.kind is TransformKind.FOURIER else y
        return y.ravel() if flat else y

    def matvec(self, x) -> np.ndarray:
        """``C x``."""
        return self.apply_diag(x, self.eigenvalues)

    def rmatvec(self, x) -> np.ndarray:
        """``C^T x`` (reblurring for the real transforms)."""
        return self.apply_diag(x, np.conj(self.eigenvalues))

    def weights(self, r):
        """``(|T^{-1} r|^2, |lambda|^2)`` for the unitary kinds, used by the alpha solver."""
        if self.kind is TransformKind.ANTIREFLECTIVE:
            raise ValueError("the antireflective transform is not unitary")
        r, _ = self._grid(r)
        return np.abs(forward_transform(self.kind, r)) ** 2, self.spectrum_sq


def _psf_hash(psf: Psf) -> str:
    h = hashlib.sha1(psf.weights.tobytes())
    h.update(repr((psf.weights.shape, psf.center)).encode())
    return h.hexdigest()[:16]


def _fourier_eigs(psf: Psf, n: int) -> np.ndarray:
    p, q = psf.shape
    if p > n or q > n:
        raise ValueError(f"PSF {psf.shape} larger than n={n}")
    big = np.zeros((n, n))
    big[:p, :q] = psf.weights
    big = np.roll(big, (-psf.center[0], -psf.center[1]), axis=(0, 1))
    return sfft.fft2(big)


def _cosine_eigs(psf: Psf, n: int) -> np.ndarray:
    H = psf.centered()
    R = H.shape[0] // 2
    if R > n - 1:
        raise ValueError(f"PSF reach {R} too large for n={n}")
    # first column of the reflective BC matrix: center quadrant folded once
    Q = np.zeros((n + 1, n + 1))
    Q[:R + 1, :R + 1] = H[R:, R:]
    col = Q[:n, :n] + Q[1:, :n] + Q[:n, 1:] + Q[1:, 1:]
    e1 = np.zeros((n, n))
    e1[0, 0] = 1.0
    return sfft.dctn(col, norm="ortho") / sfft.dctn(e1, norm="ortho")


def _antireflective_eigs(psf: Psf, n: int) -> np.ndarray:
    H = psf.centered()
    R = H.shape[0] // 2
    if n < 3 or R > n - 1:
        raise ValueError(f"antireflective transform needs n >= 3 and PSF reach <= n-1 (n={n}, reach={R})")
    theta = np.zeros(n)
    theta[1:-1] = np.pi * np.arange(1, n - 1) / (n - 1)
    cosm = np.cos(np.outer(theta, np.arange(-R, R + 1)))
    return cosm @ H @ cosm.T


def build_spectral(psf: Psf, n: int, kind) -> SpectralOperator:
    """Eigen-decomposition of the ``n^2 x n^2`` blur matrix of ``psf`` for ``kind``."""
    kind = TransformKind.parse(kind)
    if kind is not TransformKind.FOURIER and not is_quadrantally_symmetric(psf):
        raise ValueError(f"{kind.value} transform requires a quadrantally symmetric PSF")
    builder = {
        TransformKind.FOURIER: _fourier_eigs,
        TransformKind.COSINE: _cosine_eigs,
        TransformKind.ANTIREFLECTIVE: _antireflective_eigs,
    }[kind]
    eigs = builder(psf, int(n))
    eigs.setflags(write=False)
    return SpectralOperator(kind, int(n), eigs, _psf_hash(psf))


def _check_alpha(alpha):
    if not alpha > 0:
        raise ValueError(f"alpha must be > 0, got {alpha!r}")


def solve_shifted(op: SpectralOperator, alpha: float, rhs) -> np.ndarray:
    """``(C C^T + alpha I)^{-1} rhs``."""
    _check_alpha(alpha)
    return op.apply_diag(rhs, 1.0 / (op.spectrum_sq + alpha))


def apply_filtered(op: SpectralOperator, alpha: float, rhs) -> np.ndarray:
    """Tikhonov filter ``C^T (C C^T + alpha I)^{-1} rhs``."""
    _check_alpha(alpha)
    return op.apply_diag(rhs, np.conj(op.eigenvalues) / (op.spectrum_sq + alpha))


def phi_alpha(op: SpectralOperator, alpha: float, rhs) -> float:
    """``alpha * ||(C C^T + alpha I)^{-1} rhs||``, increasing from 0 to ``||rhs||``."""
    _check_alpha(alpha)
    if not np.any(rhs):
        raise ValueError("phi_alpha needs a nonzero right-hand side")
    if op.kind is TransformKind.ANTIREFLECTIVE:
        return float(alpha * np.linalg.norm(solve_shifted(op, alpha, rhs)))
    w, s = op.weights(rhs)
    return float(np.sqrt(np.sum(w * (alpha / (s + alpha)) ** 2)))
