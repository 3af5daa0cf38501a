"""Vector helpers, seeded random streams, and direction samplers.

Vectors are plain 1-D float64 numpy arrays throughout the package.
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, DegenerateSampleError, InvalidDimensionError
from .subspace import SubspaceBasis

UNIT_TOL = 1e-9


def make_rng(seed, stream_id=0):
    """Independent generator for ``(seed, stream_id)``; equal pairs give equal sequences."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream_id),))
    return np.random.Generator(np.random.PCG64(ss))


def as_vector(x, dim=None, name="x"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InvalidDimensionError(f"{name} must be one-dimensional, got shape {x.shape}")
    if dim is not None and x.shape[0] != dim:
        raise InvalidDimensionError(f"{name} has dimension {x.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(x)):
        raise ConfigurationError(f"{name} has non-finite entries")
    return x


def normalize(x):
    n = np.linalg.norm(x)
    if n == 0.0:
        raise DegenerateSampleError("cannot normalise a zero vector")
    return x / n


def cosine(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(a @ b / (na * nb))


def project_orthogonal(x, v):
    """``(I - v v^T) x`` for a unit vector ``v``."""
    x = np.asarray(x, dtype=np.float64)
    return x - (x @ v) * v


def sample_unit_sphere(dim, rng, size=None):
    """Uniform draw(s) from the unit sphere in ``R^dim`` (normalised Gaussians)."""
    dim = int(dim)
    if dim < 1:
        raise InvalidDimensionError("dim must be at least 1")
    n = 1 if size is None else int(size)
    U, norms = kernels.normalize_rows(rng.standard_normal((n, dim)))
    bad = norms == 0.0
    if np.any(bad):
        U[bad], norms2 = kernels.normalize_rows(rng.standard_normal((int(bad.sum()), dim)))
        if np.any(norms2 == 0.0):
            raise DegenerateSampleError("zero Gaussian draw twice in a row")
    return U[0] if size is None else U


@dataclass(frozen=True)
class SamplerSpec:
    """Target distribution ``lambda v v^T + (1 - lambda) * (rest)`` for unit directions.

    Without ``subspace`` the remainder is spread evenly over the complement of
    ``v``. With ``subspace`` the remainder is drawn from the subspace and then
    projected off ``v``, which only approximates the mixed covariance.
    """

    dim: int
    bias_direction: np.ndarray = None
    bias_coefficient: float = 0.0
    subspace: SubspaceBasis = None

    def __post_init__(self):
        if int(self.dim) < 1:
            raise InvalidDimensionError("dim must be at least 1")
        if not 0.0 <= self.bias_coefficient <= 1.0:
            raise ConfigurationError(f"bias coefficient {self.bias_coefficient} outside [0, 1]")
        if self.bias_direction is not None:
            v = as_vector(self.bias_direction, self.dim, "bias_direction")
            if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
                raise ConfigurationError("bias_direction must have unit norm")
            object.__setattr__(self, "bias_direction", v)
        if self.subspace is not None and self.subspace.D != self.dim:
            raise ConfigurationError("subspace ambient dimension does not match dim")


def _raw_directions(spec, rng, n):
    if spec.subspace is None:
        return rng.standard_normal((n, spec.dim))
    return spec.subspace.apply(rng.standard_normal((n, spec.subspace.d)))


def sample_biased(spec, rng, size=None):
    """Draw unit direction(s) following ``spec``.

    With a bias direction ``v`` each draw is
    ``sqrt(lam) v + sqrt(1 - lam) unit((I - v v^T) w)``, where ``w`` is a
    Gaussian in the full space or inside the subspace. A vanishing projection
    is redrawn once; a second failure raises ``DegenerateSampleError``.
    """
    n = 1 if size is None else int(size)
    v, lam = spec.bias_direction, float(spec.bias_coefficient)
    if v is None:
        U, norms = kernels.normalize_rows(_raw_directions(spec, rng, n))
    elif lam == 1.0:
        U, norms = np.tile(v, (n, 1)), np.ones(n)
    else:
        U, norms = kernels.combine_biased(_raw_directions(spec, rng, n), v, lam)
    bad = norms <= 0.0
    if np.any(bad):
        W = _raw_directions(spec, rng, int(bad.sum()))
        if v is None:
            redo, norms2 = kernels.normalize_rows(W)
        else:
            redo, norms2 = kernels.combine_biased(W, v, lam)
        if np.any(norms2 <= 0.0):
            raise DegenerateSampleError("projection onto the complement of v vanished after a resample")
        U[bad] = redo
    return U[0] if size is None else U


def target_covariance(spec):
    """Dense covariance the sampler aims for: ``lam v v^T + (1-lam)/(D-1) (I - v v^T)``,
    or ``lam v v^T + (1-lam)/d V V^T`` with a subspace. Small problems only."""
    D = spec.dim
    if spec.subspace is None:
        rest = np.eye(D)
        k = D
    else:
        V = spec.subspace.matrix()
        rest = V @ V.T
        k = spec.subspace.d
    v = spec.bias_direction
    if v is None:
        return rest / k
    lam = spec.bias_coefficient
    vv = np.outer(v, v)
    if spec.subspace is None:
        return lam * vv + (1.0 - lam) / (D - 1) * (np.eye(D) - vv)
    return lam * vv + (1.0 - lam) / k * rest
