"""Boundary-condition padding and field-of-view selection."""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .imgcore import as_image

__all__ = ["BoundaryCondition", "FovMask", "pad", "mask_select", "zero_insert"]


class BoundaryCondition(enum.Enum):
    ZERO = "zero"
    PERIODIC = "periodic"
    REFLECTIVE = "reflective"
    ANTIREFLECTIVE = "antireflective"

    @classmethod
    def parse(cls, value) -> "BoundaryCondition":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"ar": "antireflective", "reflexive": "reflective", "neumann": "reflective",
                   "dirichlet": "zero", "circular": "periodic"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown boundary condition {value!r}") from None


# numpy's odd reflection about the edge sample is exactly the antireflective
# rule F(1-i) = 2F(1) - F(1+i); applied axis by axis it gives the corner formulas.
_NP_MODES = {
    BoundaryCondition.ZERO: dict(mode="constant"),
    BoundaryCondition.PERIODIC: dict(mode="wrap"),
    BoundaryCondition.REFLECTIVE: dict(mode="symmetric"),
    BoundaryCondition.ANTIREFLECTIVE: dict(mode="reflect", reflect_type="odd"),
}


def pad(image, bc, margin: int) -> np.ndarray:
    """Extend an ``n x n`` image by ``margin`` pixels on every side.

    Reflective padding repeats the edge pixel (``fliplr``/``flipud``). The
    antireflective extension needs ``margin <= n - 1``; the other models
    accept ``margin <= n``.
    """
    img = as_image(image)
    bc = BoundaryCondition.parse(bc)
    n = min(img.shape)
    limit = n - 1 if bc is BoundaryCondition.ANTIREFLECTIVE else n
    if not 1 <= margin <= limit:
        raise ValueError(f"margin {margin} out of range [1, {limit}] for {bc.value} padding")
    return np.pad(img, margin, **_NP_MODES[bc])


@dataclass(frozen=True)
class FovMask:
    """Placement of an ``inner`` field of view inside an ``outer`` grid."""

    inner: Tuple[int, int]
    outer: Tuple[int, int]
    offset: Tuple[int, int] = (0, 0)

    def __post_init__(self):
        for k in range(2):
            if self.inner[k] < 1 or self.offset[k] < 0 or self.offset[k] + self.inner[k] > self.outer[k]:
                raise ValueError(f"FOV {self.inner} at {self.offset} does not fit in {self.outer}")

    @property
    def slices(self) -> Tuple[slice, slice]:
        (r, c), (h, w) = self.offset, self.inner
        return slice(r, r + h), slice(c, c + w)


def mask_select(big, mask: FovMask) -> np.ndarray:
    """``M``: keep only the FOV block of an outer-grid image."""
    big = np.asarray(big, dtype=np.float64)
    if big.shape != tuple(mask.outer):
        raise ValueError(f"expected outer shape {mask.outer}, got {big.shape}")
    return big[mask.slices].copy()


def zero_insert(small, mask: FovMask) -> np.ndarray:
    """``M^T``: place an FOV image in a zero outer grid."""
    small = np.asarray(small, dtype=np.float64)
    if small.shape != tuple(mask.inner):
        raise ValueError(f"expected inner shape {mask.inner}, got {small.shape}")
    out = np.zeros(mask.outer)
    out[mask.slices] = small
    return out
