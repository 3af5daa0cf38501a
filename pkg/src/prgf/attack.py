"""Projected gradient ascent on a black-box loss, driven by the estimators.

Every oracle call counts against ``max_queries``, including the check of
the loss after each step. That check doubles as the baseline ``f(x)`` of the
next estimator call, so one iteration costs ``estimate + 1`` queries.
"""
import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import as_vector
from .errors import BudgetExhaustedError, ConfigurationError, PartialEstimateError
from .estimator import estimate_gradient
from .oracle import CappedOracle
from .prior import PriorStats

L2 = "l2"
LINF = "linf"
SUCCESS = "success"
EXHAUSTED = "budget_exhausted"
ABORTED = "aborted"
SUMMARY_COLUMNS = ("method", "norm", "ASR", "avg_queries", "seeds")


@dataclass
class AttackConfig:
    """Threat model and stopping rule.

    ``epsilon``/``eta`` default to ``sqrt(0.001 D)``/2 for l2 and 0.05/0.005
    for linf. Success means ``loss > threshold``; with
    ``success_rule="misclassify"`` the oracle's ``predict`` is consulted
    instead (local classifier oracles only).
    """

    norm: str = L2
    epsilon: float = None
    eta: float = None
    max_queries: int = 10_000
    threshold: float = 0.0
    success_rule: str = "loss"
    box: tuple = None

    def __post_init__(self):
        if self.norm not in (L2, LINF):
            raise ConfigurationError(f"norm must be 'l2' or 'linf', got {self.norm!r}")
        for name in ("epsilon", "eta"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ConfigurationError(f"{name} must be positive")
        if int(self.max_queries) < 1:
            raise ConfigurationError("max_queries must be positive")
        if self.success_rule not in ("loss", "misclassify"):
            raise ConfigurationError(f"unknown success rule {self.success_rule!r}")
        if self.box is not None:
            lo, hi = self.box
            if np.any(np.asarray(lo) > np.asarray(hi)):
                raise ConfigurationError("box lower bound exceeds upper bound")

    def resolved(self, dim):
        """Copy with the dimension-dependent defaults filled in."""
        eps, eta = self.epsilon, self.eta
        if self.norm == L2:
            eps = math.sqrt(0.001 * dim) if eps is None else eps
            eta = 2.0 if eta is None else eta
        else:
            eps = 0.05 if eps is None else eps
            eta = 0.005 if eta is None else eta
        return AttackConfig(self.norm, eps, eta, self.max_queries, self.threshold, self.success_rule, self.box)


def project(x, x0, cfg):
    """Project onto the ``cfg.norm`` ball of radius ``epsilon`` around ``x0``, then into the box."""
    delta = x - x0
    if cfg.norm == L2:
        n = np.linalg.norm(delta)
        if n > cfg.epsilon:
            delta = delta * (cfg.epsilon / n)
    else:
        delta = np.clip(delta, -cfg.epsilon, cfg.epsilon)
    out = x0 + delta
    if cfg.box is not None:
        out = np.clip(out, cfg.box[0], cfg.box[1])
    return out


def pgd_step(x_t, g_hat, x0, cfg):
    """One ascent step: along ``g/||g||`` for l2 or ``sign(g)`` for linf, then project.

    A zero estimate leaves ``x_t`` unchanged.
    """
    if cfg.norm == L2:
        n = np.linalg.norm(g_hat)
        if n == 0.0:
            return x_t.copy()
        step = g_hat / n
    else:
        step = np.sign(g_hat)
    return project(x_t + cfg.eta * step, x0, cfg)


@dataclass
class AttackTrace:
    method: str
    seed: int = None
    records: list = field(default_factory=list)
    outcome: str = None
    queries: int = 0
    final_loss: float = None
    error: str = None

    @property
    def success(self):
        return self.outcome == SUCCESS

    def record(self, **row):
        self.records.append(row)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def write_jsonl(self, fh):
        """One line per iteration record, then a summary line."""
        for row in self.records:
            fh.write(json.dumps({"method": self.method, "seed": self.seed, **row}, sort_keys=True) + "\n")
        summary = {"method": self.method, "seed": self.seed, "outcome": self.outcome, "queries": self.queries,
                   "final_loss": self.final_loss, "error": self.error}
        fh.write(json.dumps(summary, sort_keys=True) + "\n")


def _success_fn(oracle, cfg):
    if cfg.success_rule == "misclassify":
        predict = getattr(oracle, "predict", None)
        if predict is None:
            raise ConfigurationError("misclassify rule needs an oracle exposing predict")
        return lambda x, loss, label: predict(x) != label
    return lambda x, loss, label: loss > cfg.threshold


def run_attack(oracle, x0, label, prior_source, cfg, est_cfg, rng, basis=None, clean_loss=None, seed=None):
    """Run PGD from ``x0`` until success or budget exhaustion.

    ``prior_source(x, label)`` returns the transfer prior at ``x``; it may be
    ``None`` for the plain methods. ``clean_loss`` lets a caller who already
    knows ``f(x0)`` skip the first query. Transport failures propagate with
    the partial trace attached as ``exc.trace``.
    """
    x0 = as_vector(x0, oracle.dim, "x0")
    cfg = cfg.resolved(oracle.dim)
    if cfg.box is not None and (np.any(x0 < cfg.box[0]) or np.any(x0 > cfg.box[1])):
        raise ConfigurationError("x0 lies outside the box")
    capped = CappedOracle(oracle, cfg.max_queries)
    done = _success_fn(oracle, cfg)
    stats = PriorStats()
    trace = AttackTrace(est_cfg.method, seed)
    x = x0.copy()
    try:
        try:
            f = float(clean_loss) if clean_loss is not None else capped.query(x0, label)
        except BudgetExhaustedError:
            trace.outcome = EXHAUSTED
            return trace
        trace.record(iteration=0, queries=capped.queries_used, loss=f, moved=False)
        it = 0
        while not done(x, f, label):
            it += 1
            prior = prior_source(x, label) if prior_source is not None else None
            try:
                est = estimate_gradient(capped, x, label, prior, est_cfg, stats, rng, basis, f_x=f)
            except PartialEstimateError:
                trace.outcome = EXHAUSTED
                break
            x_new = pgd_step(x, est.g_hat, x0, cfg)
            moved = not np.array_equal(x_new, x)
            if moved:
                try:
                    f = capped.query(x_new, label)
                except BudgetExhaustedError:
                    trace.outcome = EXHAUSTED
                    break
                x = x_new
            trace.record(iteration=it, queries=capped.queries_used, loss=f, moved=moved,
                         lambda_used=est.lambda_used, mu_used=est.mu_used, alpha_hat=est.alpha_hat,
                         A_hat=est.A_hat, shortcut=est.shortcut, breakdown=est.breakdown)
        else:
            trace.outcome = SUCCESS
    except Exception as exc:
        trace.outcome = ABORTED
        trace.error = f"{type(exc).__name__}: {exc}"
        trace.queries = capped.queries_used
        exc.trace = trace
        raise
    finally:
        trace.queries = capped.queries_used
        trace.final_loss = f if trace.records else None
    return trace


def aggregate(traces):
    """Attack success rate and average queries over successful runs.

    ``avg_queries`` is ``None`` when nothing succeeded. ``median_queries``
    treats failures as infinitely expensive, so it is ``inf`` once half fail.
    """
    n = len(traces)
    if n == 0:
        raise ConfigurationError("cannot aggregate an empty list of traces")
    wins = sorted(t.queries for t in traces if t.success)
    per_run = sorted(t.queries if t.success else math.inf for t in traces)
    return {
        "ASR": len(wins) / n,
        "avg_queries": (sum(wins) / len(wins)) if wins else None,
        "median_queries": float(np.median(per_run)),
        "successes": len(wins),
        "runs": n,
    }


def success_rate_curve(traces):
    """Average queries over the fastest successes needed to reach each attainable success rate.

    Returns ``[(rate, avg_queries), ...]`` with one point per success.
    """
    n = len(traces)
    wins = sorted(t.queries for t in traces if t.success)
    curve, total = [], 0
    for k, qk in enumerate(wins, start=1):
        total += qk
        curve.append((k / n, total / k))
    return curve


def write_summary_csv(path, rows):
    """Rows are dicts with keys ``SUMMARY_COLUMNS``; a missing average is written empty."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in SUMMARY_COLUMNS})


def summary_row(method, norm, traces):
    agg = aggregate(traces)
    return {"method": method, "norm": norm, "ASR": agg["ASR"], "avg_queries": agg["avg_queries"],
            "seeds": len(traces)}
