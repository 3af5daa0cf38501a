"""Transfer priors and the query-based estimates of their quality.

Every estimator here takes an optional ``f_x`` (the loss at ``x``). When it
is supplied the baseline query is shared and not repeated, which is how the
estimators in ``prgf.estimator`` keep one baseline per iteration.
"""
from dataclasses import dataclass, field

import numpy as np

from .core import UNIT_TOL, as_vector, make_rng, normalize, project_orthogonal, sample_biased, sample_unit_sphere, SamplerSpec
from .errors import ConfigurationError, DegenerateGradientError

SYNTHETIC = "synthetic"
EXTERNAL = "external"


@dataclass(frozen=True)
class TransferPrior:
    """Unit transfer direction ``v`` and where it came from."""

    v: np.ndarray
    provenance: str = EXTERNAL
    target_cosine: float = None

    def __post_init__(self):
        v = as_vector(self.v, name="v")
        if abs(np.linalg.norm(v) - 1.0) > UNIT_TOL:
            raise ConfigurationError("transfer prior must have unit norm")
        object.__setattr__(self, "v", v)

    def flipped(self):
        return TransferPrior(-self.v, self.provenance, self.target_cosine)


@dataclass
class PriorStats:
    """Cached prior-quality estimates owned by one attack loop.

    ``age`` counts estimator iterations since the norms were last measured.
    """

    alpha_hat: float = None
    A_hat: float = None
    grad_norm_hat: float = None
    h_norm_hat: float = None
    age: int = 0
    refreshes: int = 0
    history: list = field(default_factory=list, repr=False)

    def stale(self, period, need_h=False):
        if self.grad_norm_hat is None or self.age >= period:
            return True
        return need_h and self.h_norm_hat is None


def make_synthetic_prior(true_grad, target_cosine, rng):
    """Unit vector at exactly ``target_cosine`` to ``true_grad``; the orthogonal part is uniform."""
    if not 0.0 <= target_cosine <= 1.0:
        raise ConfigurationError(f"target_cosine {target_cosine} outside [0, 1]")
    gbar = normalize(as_vector(true_grad, name="true_grad"))
    if target_cosine == 1.0:
        return TransferPrior(gbar, SYNTHETIC, 1.0)
    for _ in range(2):
        r = project_orthogonal(rng.standard_normal(gbar.shape[0]), gbar)
        nr = np.linalg.norm(r)
        if nr > 0.0:
            break
    else:
        raise ConfigurationError("could not draw a direction orthogonal to the gradient")
    v = target_cosine * gbar + np.sqrt(1.0 - target_cosine**2) * (r / nr)
    return TransferPrior(v / np.linalg.norm(v), SYNTHETIC, float(target_cosine))


class SyntheticPriorSource:
    """Produces the prior at each attack iterate from a local model's true gradient.

    Every mode holds the cosine with the current true gradient at
    ``target_cosine``. ``"rederived"`` draws a new orthogonal part at each
    call from one seeded stream. ``"systematic"`` reuses the same orthogonal
    draw at every call, so its error is fixed like a badly matched
    surrogate's. ``"frozen"`` builds one prior at the first call and keeps it.
    """

    MODES = ("rederived", "systematic", "frozen")

    def __init__(self, model, target_cosine, seed=0, mode="rederived"):
        if mode not in self.MODES:
            raise ConfigurationError(f"unknown prior mode {mode!r}")
        self.model = model
        self.target_cosine = float(target_cosine)
        self.seed = int(seed)
        self.mode = mode
        self._frozen = None
        self._rng = make_rng(self.seed, 0xF4E5)

    def __call__(self, x, label=0):
        if self.mode == "frozen" and self._frozen is not None:
            return self._frozen
        g = self.model.true_gradient(x, label)
        rng = make_rng(self.seed, 0xF4E5) if self.mode == "systematic" else self._rng
        prior = make_synthetic_prior(g, self.target_cosine, rng)
        if self.mode == "frozen":
            self._frozen = prior
        return prior


class FixedPriorSource:
    """Always returns the same externally supplied direction."""

    def __init__(self, v):
        self.prior = TransferPrior(normalize(as_vector(v, name="v")), EXTERNAL)

    def __call__(self, x, label=0):
        return self.prior


def _baseline(oracle, x, label, f_x):
    if f_x is None:
        return oracle.query(x, label), 1
    return f_x, 0


def estimate_inner_product(oracle, x, label, direction, sigma, f_x=None):
    """Forward difference ``(f(x + sigma d) - f(x)) / sigma`` along a unit ``direction``."""
    if sigma <= 0:
        raise ConfigurationError("sigma must be positive")
    f_x, _ = _baseline(oracle, x, label, f_x)
    return (oracle.query(x + sigma * direction, label) - f_x) / sigma


def _mean_square_slope(oracle, x, label, W, sigma, f_x):
    slopes = np.array([(oracle.query(x + sigma * w, label) - f_x) / sigma for w in W])
    return float(np.mean(slopes**2))


def estimate_grad_norm(oracle, x, label, S, sigma, rng, f_x=None):
    """Gradient norm from ``S`` random directional derivatives.

    Each squared slope along a uniform unit direction has mean
    ``||grad||^2 / D``, hence ``sqrt(D/S * sum slope_s^2)``.
    """
    if int(S) < 1:
        raise ConfigurationError("S must be at least 1")
    if sigma <= 0:
        raise ConfigurationError("sigma must be positive")
    f_x, _ = _baseline(oracle, x, label, f_x)
    W = sample_unit_sphere(oracle.dim, rng, size=int(S))
    return float(np.sqrt(oracle.dim * _mean_square_slope(oracle, x, label, W, sigma, f_x)))


def estimate_subspace_norm(oracle, x, label, basis, S, sigma, rng, f_x=None):
    """Norm of the gradient's projection onto ``basis``, probing with directions inside it."""
    if int(S) < 1:
        raise ConfigurationError("S must be at least 1")
    f_x, _ = _baseline(oracle, x, label, f_x)
    W = sample_biased(SamplerSpec(oracle.dim, subspace=basis), rng, size=int(S))
    return float(np.sqrt(basis.d * _mean_square_slope(oracle, x, label, W, sigma, f_x)))


def _ratio(num, stats):
    norm = stats.grad_norm_hat
    if norm is None:
        raise ConfigurationError("gradient norm has not been estimated yet")
    if norm == 0.0:
        raise DegenerateGradientError("estimated gradient norm is zero")
    return num / norm


def estimate_alpha(oracle, x, label, prior, stats, sigma, f_x=None):
    """Cosine between the prior and the gradient using the cached norm; clamped to [-1, 1]."""
    ip = estimate_inner_product(oracle, x, label, prior.v, sigma, f_x)
    alpha = float(np.clip(_ratio(ip, stats), -1.0, 1.0))
    stats.alpha_hat = alpha
    return alpha


def estimate_A(oracle, x, label, basis, stats, S, sigma, rng, f_x=None):
    """Fraction of the gradient norm captured by ``basis``; clamped to [0, 1]."""
    h = estimate_subspace_norm(oracle, x, label, basis, S, sigma, rng, f_x)
    stats.h_norm_hat = h
    A = float(np.clip(_ratio(h, stats), 0.0, 1.0))
    stats.A_hat = A
    return A


def refresh_norms(oracle, x, label, stats, S, sigma, rng, f_x, basis=None):
    """Re-measure the gradient norm (and the subspace norm when ``basis`` is given).

    Returns the number of queries spent: ``S``, or ``2 S`` with a basis.
    """
    stats.grad_norm_hat = estimate_grad_norm(oracle, x, label, S, sigma, rng, f_x)
    spent = int(S)
    if basis is not None:
        stats.h_norm_hat = estimate_subspace_norm(oracle, x, label, basis, S, sigma, rng, f_x)
        spent += int(S)
    stats.age = 0
    stats.refreshes += 1
    return spent
