"""Orthonormal bases built by nearest-neighbour upsampling.

A basis maps low-dimensional coefficients ``xi`` (length ``d``) to vectors of
length ``D``. Each basis vector is an upsampled standard basis vector scaled
to unit norm; supports are disjoint, so the columns are exactly orthonormal.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

BLOCK = "block"
IMAGE = "image"


@dataclass(frozen=True)
class SubspaceBasis:
    """Implicit ``D x d`` matrix ``V`` with orthonormal columns.

    ``mode == "block"`` replicates each coordinate ``D // d`` times.
    ``mode == "image"`` treats vectors as ``H x W x C`` arrays (channels last)
    and upsamples an ``h x w x C`` grid by nearest neighbour.
    """

    D: int
    d: int
    mode: str = BLOCK
    image_shape: tuple = None
    low_shape: tuple = None

    @property
    def factor(self):
        return self.D // self.d

    def apply(self, xi):
        """``V @ xi``; ``xi`` may be ``(d,)`` or ``(n, d)``."""
        xi = np.asarray(xi, dtype=np.float64)
        lead = xi.shape[:-1]
        if xi.shape[-1] != self.d:
            raise ConfigurationError(f"expected coefficients of length {self.d}, got {xi.shape[-1]}")
        scale = 1.0 / np.sqrt(self.factor)
        if self.mode == BLOCK:
            out = np.repeat(xi, self.factor, axis=-1)
        else:
            H, W, C = self.image_shape
            h, w, _ = self.low_shape
            grid = xi.reshape(lead + (h, w, C))
            grid = np.repeat(grid, H // h, axis=-3)
            grid = np.repeat(grid, W // w, axis=-2)
            out = grid.reshape(lead + (self.D,))
        return out * scale

    def adjoint(self, x):
        """``V^T @ x``; ``x`` may be ``(D,)`` or ``(n, D)``."""
        x = np.asarray(x, dtype=np.float64)
        lead = x.shape[:-1]
        scale = 1.0 / np.sqrt(self.factor)
        if self.mode == BLOCK:
            out = x.reshape(lead + (self.d, self.factor)).sum(axis=-1)
        else:
            H, W, C = self.image_shape
            h, w, _ = self.low_shape
            grid = x.reshape(lead + (h, H // h, w, W // w, C))
            out = grid.sum(axis=(-4, -2)).reshape(lead + (self.d,))
        return out * scale

    def project(self, x):
        """Orthogonal projection ``V V^T x`` onto the subspace."""
        return self.apply(self.adjoint(x))

    def column(self, j):
        e = np.zeros(self.d)
        e[j] = 1.0
        return self.apply(e)

    def matrix(self):
        """Dense ``D x d`` matrix. Only for tests and small problems."""
        return self.apply(np.eye(self.d)).T


def make_subspace(D, d, mode=BLOCK, image_shape=None, low_shape=None):
    """Build a nearest-neighbour upsampling basis.

    Block mode requires ``d`` to divide ``D``. Image mode requires
    ``image_shape = (H, W, C)`` and ``low_shape = (h, w, C)`` with ``h | H``
    and ``w | W``; ``D`` and ``d`` must match the shape products.
    """
    D, d = int(D), int(d)
    if D < 1 or d < 1:
        raise ConfigurationError("subspace dimensions must be positive")
    if d > D:
        raise ConfigurationError(f"subspace dimension {d} exceeds ambient dimension {D}")
    if mode == BLOCK:
        if D % d:
            raise ConfigurationError(f"block mode needs d | D, got D={D}, d={d}")
        return SubspaceBasis(D, d, BLOCK)
    if mode == IMAGE:
        if image_shape is None or low_shape is None:
            raise ConfigurationError("image mode needs image_shape and low_shape")
        H, W, C = (int(s) for s in image_shape)
        h, w, c = (int(s) for s in low_shape)
        if c != C:
            raise ConfigurationError("channel counts of image_shape and low_shape differ")
        if H * W * C != D or h * w * C != d:
            raise ConfigurationError("shape products do not match D and d")
        if H % h or W % w:
            raise ConfigurationError(f"image mode needs h | H and w | W, got {low_shape} vs {image_shape}")
        return SubspaceBasis(D, d, IMAGE, (H, W, C), (h, w, C))
    raise ConfigurationError(f"unknown subspace mode {mode!r}")
