"""Numerical adjudication of the closed forms.

Every closed form here has an independent check: Monte Carlo on linear
oracles (where finite differences are exact), brute-force grid search, or
empirical covariances. Suites return JSON-serialisable reports.
"""
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .core import SamplerSpec, cosine, make_rng, normalize, sample_biased, target_covariance
from .errors import ConfigurationError
from .estimator import expected_beta, lambda_star, lambda_star_subspace, mu_star
from .oracle import SyntheticModelSpec, make_synthetic
from .prior import make_synthetic_prior
from .subspace import make_subspace

SUITES = ("theorem1", "lambda", "mu", "beta", "covariance", "monotonic", "sigma-sweep")


# closed forms

def closed_form_F(lam, alpha2, D, q):
    """Expected squared cosine objective of the full-space biased estimator."""
    return kernels.F_full(lam, alpha2, D, q)


def closed_form_F_subspace(lam, alpha2, A2, d, q):
    return kernels.F_subspace(lam, alpha2, A2, d, q)


def apply_covariance(g, lam=None, v=None, basis=None, C=None):
    """``C g`` for the sampler covariance, without forming ``C`` unless it is given densely.

    No ``v``: ``I/D`` (or ``V V^T / d`` with a basis). With ``v``:
    ``lam v v^T + (1-lam)/(D-1) (I - v v^T)``, or ``lam v v^T + (1-lam)/d V V^T`` with a basis.
    """
    g = np.asarray(g, dtype=np.float64)
    if C is not None:
        return np.asarray(C, dtype=np.float64) @ g
    D = g.shape[0]
    if v is None:
        return g / D if basis is None else basis.project(g) / basis.d
    vg = float(v @ g)
    if basis is None:
        return lam * vg * v + (1.0 - lam) / (D - 1.0) * (g - vg * v)
    return lam * vg * v + (1.0 - lam) / basis.d * basis.project(g)


def closed_form_theorem1(grad, q, lam=None, v=None, basis=None, C=None):
    """Loss ``||g||^2 - (g'Cg)^2 / ((1 - 1/q) ||Cg||^2 + g'Cg / q)``; equals ``||g||^2`` when ``g'Cg = 0``."""
    g = np.asarray(grad, dtype=np.float64)
    Cg = apply_covariance(g, lam, v, basis, C)
    gCg = float(g @ Cg)
    gg = float(g @ g)
    if gCg == 0.0:
        return gg
    return gg - gCg * gCg / ((1.0 - 1.0 / q) * float(Cg @ Cg) + gCg / q)


def closed_form_theorem2(mu, alpha, e_beta, norm=1.0):
    """Loss of ``(1 - mu) v + mu unit(g_rgf)``, scaled by ``norm^2``."""
    return norm * norm * kernels.averaging_loss(mu, alpha, e_beta, alpha * e_beta)


def closed_form_theorem3(mu, alpha, alpha1, A2, e_beta, norm=1.0):
    """Subspace analogue of ``closed_form_theorem2``; ``alpha1 = v^T P unit(g)`` with ``P`` the subspace projector."""
    if not A2 > 0.0:
        raise ConfigurationError("A2 must be positive")
    if alpha1 * alpha1 > A2 + 1e-12:
        raise ConfigurationError("alpha1^2 cannot exceed A2")
    return norm * norm * kernels.averaging_loss(mu, alpha, e_beta, alpha1 * e_beta / A2)


# grid oracles

def _steps(step):
    n = int(round(1.0 / step))
    if n < 1 or abs(n * step - 1.0) > 1e-9:
        raise ConfigurationError("step must divide 1")
    return n


def grid_argmax_lambda(alpha2, D, q, step=1e-5):
    return float(kernels.grid_argmax_F(alpha2, D, q, _steps(step))[0])


def grid_argmax_lambda_subspace(alpha2, A2, d, q, step=1e-5):
    return float(kernels.grid_argmax_F_subspace(alpha2, A2, d, q, _steps(step))[0])


def grid_argmin_mu(alpha, e_beta, step=1e-4, cross=None):
    cross = alpha * e_beta if cross is None else cross
    mu, val = kernels.grid_argmin_averaging(alpha, e_beta, cross, _steps(step))
    return float(mu), val


# Monte Carlo

@dataclass
class MCLossReport:
    mc_loss: float
    std_error: float
    closed_form: float
    trials: int

    @property
    def z(self):
        diff = self.mc_loss - self.closed_form
        if self.std_error == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / self.std_error

    def within(self, k=3.0):
        return abs(self.z) <= k

    def to_dict(self):
        return {**asdict(self), "z": self.z}


def mc_loss(draw, grad, trials=10_000, seed=0, closed_form=math.nan):
    """Monte Carlo estimate of ``min_b E||g - b g_hat||^2``.

    ``draw(rng)`` returns one estimate; trial ``t`` uses ``make_rng(seed, t)``.
    With ``m1 = mean(g'g_hat)`` and ``m2 = mean(||g_hat||^2)`` the optimal
    scale is ``max(0, m1/m2)``, giving ``||g||^2 - m1^2/m2``; the standard
    error follows from the delta method on ``(m1, m2)``.
    """
    g = np.asarray(grad, dtype=np.float64)
    X = np.empty(trials)
    Y = np.empty(trials)
    for t in range(trials):
        est = draw(make_rng(seed, t))
        X[t] = g @ est
        Y[t] = est @ est
    return _mc_report(g, X, Y, closed_form)


def _mc_report(g, X, Y, closed_form):
    n = len(X)
    gg = float(g @ g)
    m1, m2 = X.mean(), Y.mean()
    if m1 <= 0.0 or m2 == 0.0:
        return MCLossReport(gg, 0.0, float(closed_form), n)
    grad = np.array([-2.0 * m1 / m2, m1 * m1 / (m2 * m2)])
    cov = np.cov(np.vstack([X, Y]), ddof=1) if n > 1 else np.zeros((2, 2))
    se = math.sqrt(max(float(grad @ cov @ grad), 0.0) / n)
    return MCLossReport(float(gg - m1 * m1 / m2), se, float(closed_form), n)


def linear_prgf_draw(g, q, lam=None, v=None, basis=None):
    """Estimate drawer for a linear oracle, where each finite difference is exactly ``u'g``."""
    g = np.asarray(g, dtype=np.float64)
    spec = SamplerSpec(g.shape[0], v, 0.0 if lam is None else lam, basis)

    def draw(rng):
        U = sample_biased(spec, rng, size=q)
        return kernels.fd_average(U @ g, U)

    return draw


def linear_averaging_draw(g, q, mu, v, basis=None):
    """Drawer for ``(1 - mu) v + mu unit(g_rgf)`` on a linear oracle."""
    plain = linear_prgf_draw(g, q, basis=basis)

    def draw(rng):
        est = plain(rng)
        n = np.linalg.norm(est)
        return (1.0 - mu) * v + (mu * est / n if n > 0.0 else 0.0)

    return draw


def simulate_expected_beta(g, q, trials=10_000, seed=0, basis=None, chunk=None):
    """Mean cosine between ``g`` and a plain estimate, with its standard error.

    Trials are drawn in vectorised chunks from one stream ``make_rng(seed, 0)``.
    """
    g = np.asarray(g, dtype=np.float64)
    spec = SamplerSpec(g.shape[0], subspace=basis)
    rng = make_rng(seed, 0)
    chunk = chunk or max(1, 2_000_000 // (q * g.shape[0]))
    betas = []
    left = trials
    while left > 0:
        k = min(chunk, left)
        U = sample_biased(spec, rng, size=k * q).reshape(k, q, -1)
        est = np.einsum("bq,bqd->bd", U @ g, U)
        betas.append((est @ g) / (np.linalg.norm(est, axis=1) * np.linalg.norm(g)))
        left -= k
    b = np.concatenate(betas)
    return float(b.mean()), float(b.std(ddof=1) / math.sqrt(trials))


def mc_averaging(g, q, mu, v, trials=10_000, seed=0, basis=None, beta_seed=None):
    """Monte Carlo loss of the averaging estimator against its closed form with plugged-in ``E[beta]``.

    ``E[beta]`` comes from an independent simulation; its uncertainty is
    propagated into the report's standard error.
    """
    g = np.asarray(g, dtype=np.float64)
    gbar = normalize(g)
    norm = float(np.linalg.norm(g))
    alpha = float(v @ gbar)
    eb, eb_se = simulate_expected_beta(g, q, trials, seed + 1 if beta_seed is None else beta_seed, basis)
    if basis is None:
        cf = lambda b: closed_form_theorem2(mu, alpha, b, norm)
    else:
        gT = basis.project(gbar)
        A2, alpha1 = float(gT @ gT), float(v @ gT)
        cf = lambda b: closed_form_theorem3(mu, alpha, alpha1, A2, b, norm)
    rep = mc_loss(linear_averaging_draw(g, q, mu, v, basis), g, trials, seed, cf(eb))
    h = max(1e-6, 10.0 * eb_se)
    slope = (cf(min(eb + h, 1.0)) - cf(max(eb - h, 0.0))) / (min(eb + h, 1.0) - max(eb - h, 0.0))
    rep.std_error = math.sqrt(rep.std_error ** 2 + (slope * eb_se) ** 2)
    return rep, {"alpha": alpha, "e_beta": eb, "e_beta_se": eb_se}


def empirical_covariance(spec, n, seed=0, chunk=20_000):
    """``E[u u^T]`` from ``n`` draws of ``sample_biased``."""
    rng = make_rng(seed, 0)
    acc = np.zeros((spec.dim, spec.dim))
    left = n
    while left > 0:
        k = min(chunk, left)
        U = sample_biased(spec, rng, size=k)
        acc += U.T @ U
        left -= k
    return acc / n


# suites

def _check(name, passed, **info):
    return {"name": name, "passed": bool(passed), **info}


def _random_unit(dim, rng):
    return normalize(rng.standard_normal(dim))


def suite_theorem1(seed=0, trials=10_000, points=None):
    """Monte Carlo loss of the biased estimator against the closed form on linear oracles."""
    if points is None:
        points = [(D, q, lam, a) for D in (8, 16, 64) for q in (1, 5, 20)
                  for lam, a in ((0.1, 0.3), (0.5, 0.6), (0.85, 0.2))]
    checks = []
    for i, (D, q, lam, a) in enumerate(points):
        rng = make_rng(seed, 10_000 + i)
        g = rng.standard_normal(D)
        v = make_synthetic_prior(g, a, rng).v
        cf = closed_form_theorem1(g, q, lam, v)
        rep = mc_loss(linear_prgf_draw(g, q, lam, v), g, trials, seed * 1_000 + i, cf)
        checks.append(_check(f"D={D} q={q} lambda={lam} alpha={a}", rep.within(3.0), **rep.to_dict()))
    return checks


def suite_lambda(seed=0, step=1e-5, tol=1e-4, Ds=(8, 64, 256), qs=(1, 5, 20, 50), A2s=(0.1, 0.5, 1.0)):
    """Closed-form coefficients against grid maximisers of the objectives."""
    alpha2s = [round(k * 0.01, 2) for k in range(101)]
    worst, worst_sub = 0.0, 0.0
    for D in Ds:
        for q in qs:
            for a2 in alpha2s:
                worst = max(worst, abs(lambda_star(a2, q, D) - grid_argmax_lambda(a2, D, q, step)))
                for A2 in A2s:
                    err = abs(lambda_star_subspace(a2, A2, q, D) - grid_argmax_lambda_subspace(a2, A2, D, q, step))
                    worst_sub = max(worst_sub, err)
    boundary = 0.0
    for d in Ds:
        for q in qs:
            for a2 in alpha2s:
                for A2 in A2s:
                    f0 = closed_form_F_subspace(0.0, a2, A2, d, q)
                    f1 = closed_form_F_subspace(1.0, a2, A2, d, q)
                    boundary = max(boundary, abs(f0 - A2 * q / (d + q - 1)), abs(f1 - float(a2)))
    return [
        _check("full-space lambda* vs grid", worst <= tol, max_abs_error=worst, tol=tol),
        _check("subspace lambda* vs grid", worst_sub <= tol, max_abs_error=worst_sub, tol=tol),
        _check("subspace boundary values F(0), F(1)", boundary <= 1e-12, max_abs_error=boundary),
    ]


def suite_monotonic(seed=0, Ds=(8, 64, 256), qs=(1, 5, 20, 50)):
    """Monotonicity of lambda* and optimality of F(lambda*) on a 1e-3 grid."""
    a2_grid = np.arange(1001) * 1e-3
    lam_grid = np.arange(1001) * 1e-3
    mono_a, mono_q, optimal, optimal_sub = True, True, 0.0, 0.0
    for D in Ds:
        for q in qs:
            lams = np.array([lambda_star(a2, q, D) for a2 in a2_grid])
            mono_a &= bool(np.all(np.diff(lams) >= -1e-12))
        for a2 in a2_grid[::10]:
            if a2 > 1.0 / D:
                by_q = [lambda_star(a2, q, D) for q in range(1, 101)]
                mono_q &= bool(np.all(np.diff(by_q) <= 1e-12))
        for q in qs:
            for a2 in a2_grid[::50]:
                best = closed_form_F(lambda_star(a2, q, D), a2, D, q)
                others = max(closed_form_F(l, a2, D, q) for l in lam_grid[::10])
                optimal = max(optimal, others - best)
                for A2 in (0.2, 0.7, 1.0):
                    best = closed_form_F_subspace(lambda_star_subspace(a2, A2, q, D), a2, A2, D, q)
                    others = max(closed_form_F_subspace(l, a2, A2, D, q) for l in lam_grid[::10])
                    optimal_sub = max(optimal_sub, others - best)
    continuity = 0.0
    for D in Ds:
        # with q = 1 both thresholds coincide and the middle branch is empty
        for q in (q for q in qs if q > 1):
            m = D + 2.0 * q - 2.0
            for a, target in ((1.0 / m, 0.0), ((2.0 * q - 1.0) / m, 1.0)):
                mid = (1.0 - a) * (a * m - 1.0) / (2.0 * a * D * q - a * a * D * m - 1.0)
                continuity = max(continuity, abs(mid - target))
    return [
        _check("lambda* non-decreasing in alpha^2", mono_a),
        _check("lambda* non-increasing in q for alpha^2 > 1/D", mono_q),
        _check("F(lambda*) >= F(lambda) - 1e-9", optimal <= 1e-9, max_gap=optimal),
        _check("subspace F(lambda*) >= F(lambda) - 1e-9", optimal_sub <= 1e-9, max_gap=optimal_sub),
        _check("middle branch meets the outer branches", continuity <= 1e-9, max_abs_error=continuity),
    ]


def suite_mu(seed=0, trials=10_000, step=1e-4):
    """mu* against a grid search, and the averaging losses against Monte Carlo."""
    gap = 0.0
    for a in np.linspace(0.0, 1.0, 21):
        for b in np.linspace(0.05, 1.0, 20):
            mu = mu_star(a, b)
            _, grid_val = grid_argmin_mu(a, b, step)
            gap = max(gap, closed_form_theorem2(mu, a, b) - grid_val)
    checks = [_check("grid never beats mu* by more than 1e-8", gap <= 1e-8, max_gap=gap)]
    rng = make_rng(seed, 20_000)
    for D, q, a, mu in ((32, 5, 0.3, 0.6), (64, 20, 0.4, 0.5)):
        g = rng.standard_normal(D)
        v = make_synthetic_prior(g, a, rng).v
        rep, info = mc_averaging(g, q, mu, v, trials, seed)
        checks.append(_check(f"averaging D={D} q={q} alpha={a} mu={mu}", rep.within(3.0), **rep.to_dict(), **info))
    D, d = 32, 8
    basis = make_subspace(D, d)
    for q, mu in ((4, 0.6), (10, 0.4)):
        g = basis.apply(rng.standard_normal(d)) + 0.5 * rng.standard_normal(D)
        v = normalize(0.5 * normalize(g) + rng.standard_normal(D) / math.sqrt(D))
        rep, info = mc_averaging(g, q, mu, v, trials, seed, basis=basis)
        checks.append(_check(f"subspace averaging D={D} d={d} q={q} mu={mu}", rep.within(3.0),
                             **rep.to_dict(), **info))
    return checks


def suite_beta(seed=0, trials=40_000, tol=0.05):
    """Closed-form approximation of the plain estimate's expected cosine."""
    checks = []
    for D in (16, 64, 256):
        # q = D only where it stays cheap
        for q in sorted({1, 5, 20, 50} | ({D} if D <= 64 else set())):
            if q > D:
                continue
            g = make_rng(seed, 30_000 + D + q).standard_normal(D)
            sim, se = simulate_expected_beta(g, q, trials, seed)
            approx = expected_beta(q, D)
            checks.append(_check(f"D={D} q={q}", abs(sim - approx) <= tol, simulated=sim, std_error=se,
                                 approx=approx, tol=tol))
    return checks


def suite_covariance(seed=0, n=200_000):
    """Empirical second moments of the samplers against their targets."""
    checks = []
    rng = make_rng(seed, 40_000)
    for lam in (0.0, 0.36):
        spec = SamplerSpec(16, _random_unit(16, rng), lam)
        err = float(np.linalg.norm(empirical_covariance(spec, n, seed) - target_covariance(spec)))
        checks.append(_check(f"full space D=16 lambda={lam}", err <= 0.02, frobenius=err, tol=0.02))
    spec = SamplerSpec(16)
    err = float(np.linalg.norm(empirical_covariance(spec, n, seed) - np.eye(16) / 16))
    checks.append(_check("uniform D=16", err <= 0.02, frobenius=err, tol=0.02))
    basis = make_subspace(64, 16)
    for lam in (0.0, 0.36):
        spec = SamplerSpec(64, _random_unit(64, rng), lam, basis)
        err = float(np.linalg.norm(empirical_covariance(spec, n, seed) - target_covariance(spec)))
        checks.append(_check(f"subspace D=64 d=16 lambda={lam}", err <= 0.05, frobenius=err, tol=0.05))
    return checks


def suite_sigma_sweep(seed=0, trials=2_000, dim=32, q=10, sigmas=(1e-1, 1e-2, 1e-3, 1e-4)):
    """On a smooth non-linear oracle the Monte Carlo loss approaches its linearisation as sigma shrinks.

    The same directions are reused for every sigma so only the finite-difference error changes.
    """
    oracle = make_synthetic(SyntheticModelSpec("softplus", dim, seed=seed))
    x = make_rng(seed, 50_000).uniform(0.0, 1.0, dim)
    g = oracle.true_gradient(x, 0)
    f_x = oracle.evaluate(x, 0)
    spec = SamplerSpec(dim)
    dirs = [sample_biased(spec, make_rng(seed, t), size=q) for t in range(trials)]

    def loss_at(sigma):
        X, Y = np.empty(trials), np.empty(trials)
        for t, U in enumerate(dirs):
            if sigma is None:
                deltas = U @ g
            else:
                deltas = np.array([(oracle.evaluate(x + sigma * u, 0) - f_x) / sigma for u in U])
            est = kernels.fd_average(deltas, U)
            X[t], Y[t] = g @ est, est @ est
        return _mc_report(g, X, Y, math.nan).mc_loss

    ref = loss_at(None)
    gaps = [abs(loss_at(s) - ref) / ref for s in sigmas]
    # below the floor the gap is rounding noise and need not keep falling
    floor = 1e-6
    shrinking = all(b <= a + 1e-12 or b < floor for a, b in zip(gaps, gaps[1:]))
    return [
        _check("relative gap shrinks with sigma down to the rounding floor", shrinking, gaps=gaps,
               sigmas=list(sigmas), floor=floor),
        _check("relative gap at smallest sigma below 1e-3", gaps[-1] < 1e-3, gap=gaps[-1]),
    ]


_RUNNERS = {
    "theorem1": suite_theorem1,
    "lambda": suite_lambda,
    "mu": suite_mu,
    "beta": suite_beta,
    "covariance": suite_covariance,
    "monotonic": suite_monotonic,
    "sigma-sweep": suite_sigma_sweep,
}


def run_suite(name, seed=0, **kw):
    """Run one suite and return ``{"suite", "seed", "passed", "backend", "checks"}``."""
    if name not in _RUNNERS:
        raise ConfigurationError(f"unknown suite {name!r}; choose from {SUITES}")
    checks = _RUNNERS[name](seed=seed, **kw)
    return {"suite": name, "seed": seed, "backend": kernels.BACKEND, "options": kw,
            "passed": all(c["passed"] for c in checks), "checks": checks}
