"""Random gradient-free estimators with transfer priors.

Methods:

``rgf`` / ``rgf_d``
    plain random gradient-free estimate, uniform directions in the full
    space or in a subspace.
``prgf`` / ``prgf_d``
    directions biased towards the prior with the optimal mixing coefficient.
``avg`` / ``avg_d``
    weighted average of the prior and a normalised plain estimate.

Per-iteration query cost for the prior-guided methods is
``1 (baseline) + [S on norm refresh] + 1 (alpha probe) + [S on subspace
refresh] + (0 if shortcut else q)``; the baseline is free when the caller
passes ``f_x``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .core import SamplerSpec, sample_biased
from .errors import BudgetExhaustedError, ConfigurationError, PartialEstimateError
from .prior import PriorStats, refresh_norms

METHODS = ("rgf", "prgf", "avg", "rgf_d", "prgf_d", "avg_d")
DEFAULT_C = 1.0 / (1.0 + math.sqrt(2.0))


@dataclass
class EstimatorConfig:
    method: str = "prgf"
    q: int = 50
    sigma: float = None
    S: int = 10
    norm_refresh: int = 10
    lambda_override: float = None
    mu_override: float = None
    threshold_c: float = DEFAULT_C

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; choose from {METHODS}")
        if int(self.q) < 1:
            raise ConfigurationError("q must be at least 1")
        if self.sigma is not None and not self.sigma > 0:
            raise ConfigurationError("sigma must be positive")
        if int(self.S) < 1:
            raise ConfigurationError("S must be at least 1")
        if int(self.norm_refresh) < 1:
            raise ConfigurationError("norm_refresh must be at least 1")
        if not 0.0 < self.threshold_c < 1.0:
            raise ConfigurationError("threshold_c must lie in (0, 1)")
        for name in ("lambda_override", "mu_override"):
            val = getattr(self, name)
            if val is not None and not 0.0 <= val <= 1.0:
                raise ConfigurationError(f"{name} must lie in [0, 1]")

    @property
    def uses_subspace(self):
        return self.method.endswith("_d")

    @property
    def family(self):
        return self.method.split("_")[0]

    def sigma_for(self, dim):
        """Finite-difference step; defaults to ``1e-4 * sqrt(dim)``."""
        return self.sigma if self.sigma is not None else 1e-4 * math.sqrt(dim)


@dataclass
class GradientEstimate:
    g_hat: np.ndarray
    queries_spent: int
    method: str
    lambda_used: float = None
    mu_used: float = None
    alpha_hat: float = None
    A_hat: float = None
    shortcut: bool = False
    breakdown: dict = field(default_factory=dict)


def lambda_star(alpha2, q, D):
    """Optimal bias coefficient for full-space prior-guided sampling.

    Zero when ``alpha2 <= 1/(D+2q-2)``, one when ``alpha2 >= (2q-1)/(D+2q-2)``,
    and the interior stationary point of the estimator objective in between.
    """
    if D < 2:
        raise ConfigurationError("lambda_star needs D >= 2")
    a = min(max(float(alpha2), 0.0), 1.0)
    m = D + 2.0 * q - 2.0
    if q == 1 and math.isclose(a * D, 1.0, rel_tol=1e-12):
        # with one direction the objective is flat in lambda here; take the uniform-sampling value
        return 1.0 / D
    if a <= 1.0 / m:
        return 0.0
    if a >= (2.0 * q - 1.0) / m:
        return 1.0
    lam = (1.0 - a) * (a * m - 1.0) / (2.0 * a * D * q - a * a * D * m - 1.0)
    return min(max(lam, 0.0), 1.0)


def lambda_star_subspace(alpha2, A2, q, d):
    """Optimal bias coefficient when the remaining directions live in a ``d``-dim subspace.

    ``A2`` is the squared norm of the normalised gradient's projection onto the subspace.
    """
    if d < 1:
        raise ConfigurationError("lambda_star_subspace needs d >= 1")
    a = min(max(float(alpha2), 0.0), 1.0)
    A2 = min(max(float(A2), 0.0), 1.0)
    if A2 == 0.0:
        return 0.0 if a == 0.0 else 1.0
    m = d + 2.0 * q - 2.0
    if a <= A2 / m:
        return 0.0
    if a >= A2 * (2.0 * q - 1.0) / d:
        return 1.0
    lam = A2 * (A2 - a * m) / (A2 * A2 + a * a * d * d - 2.0 * A2 * a * (q + d * q - 1.0))
    return min(max(lam, 0.0), 1.0)


def mu_star(alpha, e_beta):
    """Weight on the normalised plain estimate that minimises the averaging loss.

    ``alpha`` is the prior's cosine with the gradient and ``e_beta`` the
    expected cosine of the plain estimate.
    """
    a = min(max(float(alpha), 0.0), 1.0)
    b = min(max(float(e_beta), 0.0), 1.0)
    num = (1.0 - a * a) * b
    den = num + a * (1.0 - b * b)
    if den == 0.0:
        # both zero: the prior carries nothing; both one: keep the free prior
        return 1.0 if a == 0.0 else 0.0
    return num / den


def mu_star_subspace(alpha, e_beta, alpha1=None, A2=None):
    """Averaging weight with a subspace estimate.

    The exact form needs ``alpha1`` (prior against the gradient's projection),
    which queries cannot measure; without it ``e_beta / (e_beta + alpha)`` is used.
    """
    a = min(max(float(alpha), 0.0), 1.0)
    b = min(max(float(e_beta), 0.0), 1.0)
    if alpha1 is None or A2 is None:
        return 1.0 if a + b == 0.0 else b / (a + b)
    num = (A2 - alpha1 * a) * b
    den = (A2 - alpha1 * b) * (a + b)
    if den == 0.0:
        return 1.0 if a == 0.0 else 0.0
    return min(max(num / den, 0.0), 1.0)


def expected_beta(q, D):
    """Closed-form approximation of the plain estimate's expected cosine."""
    return math.sqrt(q / (D + q - 1.0))


def expected_beta_subspace(q, d, A2):
    return math.sqrt(max(A2, 0.0) * q / (d + q - 1.0))


class _Meter:
    """Counts the queries one estimator call makes."""

    def __init__(self, oracle):
        self.oracle = oracle
        self.dim = oracle.dim
        self.spent = 0

    def query(self, x, label=0):
        y = self.oracle.query(x, label)
        self.spent += 1
        return y


def _fd_estimate(meter, x, label, U, sigma, f_x):
    deltas = np.empty(len(U))
    for i, u in enumerate(U):
        deltas[i] = (meter.query(x + sigma * u, label) - f_x) / sigma
    return kernels.fd_average(deltas, U)


def _check_basis(method, basis, dim):
    if method.endswith("_d"):
        if basis is None:
            raise ConfigurationError(f"method {method!r} needs a subspace basis")
        if basis.D != dim:
            raise ConfigurationError("basis ambient dimension does not match the oracle")


def estimate_rgf(oracle, x, label, q, sigma, rng, basis=None, f_x=None):
    """Plain estimate ``(1/q) sum_i (f(x + sigma u_i) - f(x)) / sigma * u_i``.

    Directions are uniform on the unit sphere, or on the unit sphere of the
    subspace spanned by ``basis``. Costs ``q`` queries plus the baseline.
    """
    meter = _Meter(oracle)
    x = np.asarray(x, dtype=np.float64)
    try:
        if f_x is None:
            f_x = meter.query(x, label)
        U = sample_biased(SamplerSpec(oracle.dim, subspace=basis), rng, size=int(q))
        g = _fd_estimate(meter, x, label, U, sigma, f_x)
    except BudgetExhaustedError as exc:
        raise PartialEstimateError(meter.spent, exc) from exc
    return GradientEstimate(g, meter.spent, "rgf" if basis is None else "rgf_d", breakdown={"sampling": int(q)})


def _prior_quality(meter, x, label, prior, cfg, stats, rng, basis, f_x, sigma, need_A):
    """Refresh norms when stale, probe the prior, and return ``(v, alpha, A, breakdown)``.

    ``v`` is flipped when the probe finds a negative inner product.
    """
    breakdown = {}
    if stats.stale(cfg.norm_refresh, need_h=need_A):
        n0 = meter.spent
        refresh_norms(meter, x, label, stats, cfg.S, sigma, rng, f_x, basis if need_A else None)
        breakdown["norm"] = int(cfg.S)
        if need_A:
            breakdown["subspace_norm"] = meter.spent - n0 - int(cfg.S)
    v = prior.v
    ip = (meter.query(x + sigma * v, label) - f_x) / sigma
    breakdown["alpha_probe"] = 1
    if stats.grad_norm_hat == 0.0:
        alpha, A = 0.0, 0.0
    else:
        alpha = float(np.clip(ip / stats.grad_norm_hat, -1.0, 1.0))
        A = float(np.clip(stats.h_norm_hat / stats.grad_norm_hat, 0.0, 1.0)) if need_A else None
    if alpha < 0.0:
        v, alpha = -v, -alpha
    stats.alpha_hat = alpha
    if need_A:
        stats.A_hat = A
    return v, alpha, A, breakdown


def _orient(meter, x, label, v, sigma, f_x):
    """One probe to fix the sign of ``v`` when no cosine estimate is needed."""
    ip = (meter.query(x + sigma * v, label) - f_x) / sigma
    return (-v if ip < 0.0 else v), {"alpha_probe": 1}


def estimate_prgf(oracle, x, label, prior, cfg, stats=None, rng=None, basis=None, f_x=None):
    """Prior-guided estimate.

    Estimates the prior's cosine (and the subspace coverage for ``prgf_d``),
    picks the optimal bias coefficient, returns the prior itself when that
    coefficient is one, and otherwise averages ``q`` finite differences
    along directions biased towards the prior.
    """
    stats = PriorStats() if stats is None else stats
    x = np.asarray(x, dtype=np.float64)
    D = oracle.dim
    sub = basis if cfg.uses_subspace else None
    _check_basis(cfg.method, sub, D)
    sigma = cfg.sigma_for(D)
    meter = _Meter(oracle)
    alpha = A = None
    try:
        if f_x is None:
            f_x = meter.query(x, label)
        breakdown = {"baseline": meter.spent}
        if cfg.lambda_override is None:
            v, alpha, A, extra = _prior_quality(meter, x, label, prior, cfg, stats, rng, sub, f_x, sigma, sub is not None)
            if sub is None:
                lam = lambda_star(alpha * alpha, cfg.q, D)
            else:
                lam = lambda_star_subspace(alpha * alpha, A * A, cfg.q, sub.d)
        else:
            lam = float(cfg.lambda_override)
            v, extra = (_orient(meter, x, label, prior.v, sigma, f_x) if lam == 1.0 else (prior.v, {}))
        breakdown.update(extra)
        stats.age += 1
        if lam == 1.0:
            return GradientEstimate(v.copy(), meter.spent, cfg.method, lambda_used=1.0, alpha_hat=alpha,
                                    A_hat=A, shortcut=True, breakdown=breakdown)
        U = sample_biased(SamplerSpec(D, v, lam, sub), rng, size=cfg.q)
        g = _fd_estimate(meter, x, label, U, sigma, f_x)
        breakdown["sampling"] = int(cfg.q)
    except BudgetExhaustedError as exc:
        raise PartialEstimateError(meter.spent, exc) from exc
    return GradientEstimate(g, meter.spent, cfg.method, lambda_used=lam, alpha_hat=alpha, A_hat=A,
                            breakdown=breakdown)


def estimate_averaging(oracle, x, label, prior, cfg, stats=None, rng=None, basis=None, f_x=None):
    """Weighted average ``(1 - mu) v + mu * unit(g_plain)`` of the prior and a plain estimate.

    When the optimal weight is at most ``cfg.threshold_c`` the prior is
    returned directly and no sampling queries are made.
    """
    stats = PriorStats() if stats is None else stats
    x = np.asarray(x, dtype=np.float64)
    D = oracle.dim
    sub = basis if cfg.uses_subspace else None
    _check_basis(cfg.method, sub, D)
    sigma = cfg.sigma_for(D)
    meter = _Meter(oracle)
    alpha = A = None
    try:
        if f_x is None:
            f_x = meter.query(x, label)
        breakdown = {"baseline": meter.spent}
        if cfg.mu_override is None:
            v, alpha, A, extra = _prior_quality(meter, x, label, prior, cfg, stats, rng, sub, f_x, sigma, sub is not None)
            if sub is None:
                mu = mu_star(alpha, expected_beta(cfg.q, D))
            else:
                mu = mu_star_subspace(alpha, expected_beta_subspace(cfg.q, sub.d, A * A))
        else:
            mu = float(cfg.mu_override)
            v, extra = (_orient(meter, x, label, prior.v, sigma, f_x) if mu < 1.0 else (prior.v, {}))
        breakdown.update(extra)
        stats.age += 1
        if mu <= cfg.threshold_c:
            return GradientEstimate(v.copy(), meter.spent, cfg.method, mu_used=mu, alpha_hat=alpha, A_hat=A,
                                    shortcut=True, breakdown=breakdown)
        U = sample_biased(SamplerSpec(D, subspace=sub), rng, size=cfg.q)
        g_plain = _fd_estimate(meter, x, label, U, sigma, f_x)
        breakdown["sampling"] = int(cfg.q)
    except BudgetExhaustedError as exc:
        raise PartialEstimateError(meter.spent, exc) from exc
    n = np.linalg.norm(g_plain)
    if n == 0.0:
        return GradientEstimate(v.copy(), meter.spent, cfg.method, mu_used=mu, alpha_hat=alpha, A_hat=A,
                                shortcut=True, breakdown=breakdown)
    g = (1.0 - mu) * v + mu * (g_plain / n)
    return GradientEstimate(g, meter.spent, cfg.method, mu_used=mu, alpha_hat=alpha, A_hat=A, breakdown=breakdown)


def estimate_gradient(oracle, x, label, prior, cfg, stats=None, rng=None, basis=None, f_x=None):
    """Dispatch on ``cfg.method``."""
    if cfg.family == "rgf":
        _check_basis(cfg.method, basis, oracle.dim)
        sub = basis if cfg.uses_subspace else None
        est = estimate_rgf(oracle, x, label, cfg.q, cfg.sigma_for(oracle.dim), rng, sub, f_x)
        est.method = cfg.method
        return est
    if cfg.family == "prgf":
        return estimate_prgf(oracle, x, label, prior, cfg, stats, rng, basis, f_x)
    return estimate_averaging(oracle, x, label, prior, cfg, stats, rng, basis, f_x)
