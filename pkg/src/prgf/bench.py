"""Query-efficiency benchmark: every method attacks the same seeded targets.

Seed ``s`` fixes the model weights, the starting point, the prior noise
and the estimator's random stream, so methods are compared on paired runs.
"""
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .attack import ABORTED, AttackConfig, AttackTrace, aggregate, run_attack, success_rate_curve
from .core import make_rng
from .errors import OracleError
from .estimator import EstimatorConfig
from .oracle import SyntheticModelSpec, make_synthetic
from .prior import SyntheticPriorSource
from .remote import connect
from .subspace import make_subspace

STANDARD_METHODS = {
    "rgf": {"method": "rgf"},
    "prgf": {"method": "prgf"},
    "prgf_lambda0.5": {"method": "prgf", "lambda_override": 0.5},
    "prgf_lambda0.05": {"method": "prgf", "lambda_override": 0.05},
    "rgf_d": {"method": "rgf_d"},
    "prgf_d": {"method": "prgf_d"},
    "avg": {"method": "avg"},
    "avg_d": {"method": "avg_d"},
}

STREAM_X0 = 1
STREAM_EST = 2


@dataclass
class BenchConfig:
    """Standard synthetic suite: softplus classifier, D=512, 50 seeds, prior cosine 0.4.

    Starting points are drawn until the clean loss is below ``-min_margin``.
    """

    dim: int = 512
    seeds: list = field(default_factory=lambda: list(range(50)))
    model: dict = field(default_factory=lambda: {"kind": "softplus", "scale": 0.6, "hidden": 32, "classes": 10,
                                                 "smooth_block": 8, "smooth_fraction": 0.9})
    # fixed model weights across seeds; None derives them from each seed
    model_seed: int = None
    prior_cosine: float = 0.4
    prior_mode: str = "rederived"
    subspace_factor: int = 8
    subspace_mode: str = "block"
    image_shape: tuple = None
    low_shape: tuple = None
    methods: dict = field(default_factory=lambda: dict(STANDARD_METHODS))
    # q=100 puts a 0.4 prior cosine inside the interior branch of lambda* at D=512
    estimator: dict = field(default_factory=lambda: {"q": 100})
    # epsilon stays sqrt(0.001 D); eta keeps an epsilon/eta ratio of about 8
    attack: dict = field(default_factory=lambda: {"norm": "l2", "eta": 0.09, "max_queries": 10_000})
    x0_range: tuple = (0.0, 1.0)
    min_margin: float = 1.0
    max_draws: int = 1000

    def to_dict(self):
        return asdict(self)

    def basis(self):
        if self.subspace_mode == "image":
            d = int(np.prod(self.low_shape))
            return make_subspace(self.dim, d, "image", self.image_shape, self.low_shape)
        return make_subspace(self.dim, self.dim // self.subspace_factor)

    def model_spec(self, seed):
        model_seed = seed if self.model_seed is None else self.model_seed
        return SyntheticModelSpec(dim=self.dim, seed=model_seed, **self.model)


def make_target(cfg, seed):
    """Oracle, starting point and label for one seed (setup uses the uncounted local model)."""
    oracle = make_synthetic(cfg.model_spec(seed))
    lo, hi = cfg.x0_range
    rng = make_rng(seed, STREAM_X0)
    best = None
    # starting points are confidently classified: clean loss below -min_margin
    for _ in range(cfg.max_draws):
        x0 = rng.uniform(lo, hi, cfg.dim)
        label = oracle.predict(x0) if hasattr(oracle, "predict") else 0
        f0 = oracle.evaluate(x0, label)
        if best is None or f0 < best[0]:
            best = (f0, x0, label)
        if f0 < -cfg.min_margin:
            break
    return oracle, best[1], best[2]


def run_one(cfg, name, seed, oracle=None, target=None):
    """Attack seed ``seed`` with method ``name``; ``oracle`` overrides the queried oracle."""
    local, x0, label = target if target is not None else make_target(cfg, seed)
    est_cfg = EstimatorConfig(**{**cfg.estimator, **cfg.methods[name]})
    prior = SyntheticPriorSource(local, cfg.prior_cosine, seed=seed, mode=cfg.prior_mode)
    basis = cfg.basis()
    atk = AttackConfig(**cfg.attack)
    trace = run_attack(oracle if oracle is not None else local, x0, label, prior, atk, est_cfg,
                       make_rng(seed, STREAM_EST), basis=basis, seed=seed)
    trace.method = name
    return trace


def _run_seed(cfg, seed, endpoint=None):
    """All methods on one seed. With ``endpoint`` each run opens its own remote connection."""
    target = make_target(cfg, seed)
    out = []
    for name in cfg.methods:
        t0 = time.perf_counter()
        oracle = None
        try:
            if endpoint is not None:
                oracle = connect(endpoint, cfg.dim)
            tr = run_one(cfg, name, seed, oracle=oracle, target=target)
        except OracleError as exc:
            # transport and protocol failures abort this run only
            tr = getattr(exc, "trace", None) or AttackTrace(name, seed, outcome=ABORTED,
                                                             error=f"{type(exc).__name__}: {exc}")
            tr.method = name
        finally:
            if oracle is not None:
                oracle.close()
        out.append((name, tr, time.perf_counter() - t0))
    return seed, out


def run_bench(cfg, progress=None, jobs=1, endpoint=None):
    """Run every method on every seed. Returns ``{method: [trace, ...]}`` in seed order.

    ``jobs > 1`` spreads seeds over processes; results do not depend on it.
    """
    traces = {name: [] for name in cfg.methods}
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_seed, cfg, seed, endpoint) for seed in cfg.seeds]
            results = [f.result() for f in futures]
    else:
        results = (_run_seed(cfg, seed, endpoint) for seed in cfg.seeds)
    for seed, runs in results:
        for name, tr, dt in runs:
            traces[name].append(tr)
            if progress is not None:
                progress(name, seed, tr, dt)
    return traces


def summarize(traces, norm="l2"):
    """One row per method: ASR, mean and median queries."""
    rows = []
    for name, trs in traces.items():
        agg = aggregate(trs)
        rows.append({"method": name, "norm": norm, "ASR": agg["ASR"], "avg_queries": agg["avg_queries"],
                     "median_queries": agg["median_queries"], "seeds": len(trs)})
    return rows


def curve_rows(traces):
    rows = []
    for name, trs in traces.items():
        for rate, avg in success_rate_curve(trs):
            rows.append({"method": name, "success_rate": rate, "avg_queries": avg})
    return rows


def median_queries(trs):
    return float(np.median([t.queries if t.success else math.inf for t in trs]))


def with_overrides(cfg, **kw):
    return replace(cfg, **kw)


def to_plain(obj):
    """JSON-safe copy: numpy scalars and arrays become Python values, non-finite floats become None."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj
