"""Query-counted loss oracles and the synthetic models used as attack targets."""
import threading
from dataclasses import asdict, dataclass

import numpy as np

from .core import as_vector, make_rng
from .errors import BudgetExhaustedError, ConfigurationError
from .subspace import make_subspace


class QueryLedger:
    """Thread-safe query counter with an optional hard budget."""

    def __init__(self, budget=None):
        if budget is not None and int(budget) < 1:
            raise ConfigurationError("budget must be positive or None")
        self.budget = None if budget is None else int(budget)
        self._used = 0
        self._lock = threading.Lock()

    @property
    def used(self):
        return self._used

    @property
    def remaining(self):
        return None if self.budget is None else self.budget - self._used

    def charge(self, n=1):
        with self._lock:
            if self.budget is not None and self._used + n > self.budget:
                raise BudgetExhaustedError(self._used, self.budget)
            self._used += n
            return self._used

    def refund(self, n=1):
        with self._lock:
            self._used -= n

    def __repr__(self):
        return f"QueryLedger(used={self._used}, budget={self.budget})"


class LossOracle:
    """Black-box loss ``f(x, label)``. Every ``query`` costs exactly one unit of budget."""

    def __init__(self, dim, budget=None):
        self.dim = int(dim)
        self.ledger = QueryLedger(budget)

    @property
    def queries_used(self):
        return self.ledger.used

    def query(self, x, label=0):
        x = as_vector(x, self.dim)
        self.ledger.charge()
        try:
            return self._loss(x, label)
        except BaseException:
            # failed evaluations are not billed
            self.ledger.refund()
            raise

    def _loss(self, x, label):
        raise NotImplementedError


class SyntheticOracle(LossOracle):
    """Local model with a known gradient.

    ``evaluate`` and ``true_gradient`` are uncounted; they exist for the
    oracle server, prior construction and verification, never for estimators.
    """

    spec = None

    def _loss(self, x, label):
        return self.evaluate(x, label)

    def evaluate(self, x, label=0):
        raise NotImplementedError

    def true_gradient(self, x, label=0):
        raise NotImplementedError


class LinearOracle(SyntheticOracle):
    """``f(x) = g^T x + bias``; the label is ignored."""

    def __init__(self, g, bias=0.0, budget=None):
        g = as_vector(g, name="g")
        super().__init__(g.shape[0], budget)
        self.g = g
        self.bias = float(bias)

    def evaluate(self, x, label=0):
        return float(self.g @ x + self.bias)

    def true_gradient(self, x, label=0):
        return self.g.copy()


class QuadraticOracle(SyntheticOracle):
    """``f(x) = 0.5 x^T A x + b^T x``; the label is ignored."""

    def __init__(self, A, b=None, budget=None):
        A = np.asarray(A, dtype=np.float64)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ConfigurationError("A must be square")
        super().__init__(A.shape[0], budget)
        self.A = 0.5 * (A + A.T)
        self.b = np.zeros(self.dim) if b is None else as_vector(b, self.dim, "b")

    def evaluate(self, x, label=0):
        return float(0.5 * x @ (self.A @ x) + self.b @ x)

    def true_gradient(self, x, label=0):
        return self.A @ np.asarray(x, dtype=np.float64) + self.b


def _softplus(z):
    return np.logaddexp(0.0, z)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


class SoftplusClassifierOracle(SyntheticOracle):
    """One-hidden-layer softplus network scored by a smooth margin loss.

    ``logits = W2 softplus(W1 x + c1) + c2`` and
    ``f(x, y) = logsumexp_{k != y} logits_k - logits_y``,
    which is positive once the true class is no longer the soft maximum.
    """

    def __init__(self, W1, c1, W2, c2, budget=None):
        W1 = np.ascontiguousarray(W1, dtype=np.float64)
        super().__init__(W1.shape[1], budget)
        self.W1, self.c1 = W1, np.asarray(c1, dtype=np.float64)
        self.W2, self.c2 = np.ascontiguousarray(W2, dtype=np.float64), np.asarray(c2, dtype=np.float64)
        self.classes = self.W2.shape[0]

    def logits(self, x):
        return self.W2 @ _softplus(self.W1 @ x + self.c1) + self.c2

    def predict(self, x):
        return int(np.argmax(self.logits(np.asarray(x, dtype=np.float64))))

    def _check_label(self, label):
        label = int(label)
        if not 0 <= label < self.classes:
            raise ConfigurationError(f"label {label} outside [0, {self.classes})")
        return label

    def evaluate(self, x, label=0):
        label = self._check_label(label)
        z = self.logits(x)
        others = np.delete(z, label)
        m = others.max()
        return float(m + np.log(np.exp(others - m).sum()) - z[label])

    def true_gradient(self, x, label=0):
        label = self._check_label(label)
        x = np.asarray(x, dtype=np.float64)
        pre = self.W1 @ x + self.c1
        z = self.W2 @ _softplus(pre) + self.c2
        dz = np.zeros(self.classes)
        mask = np.arange(self.classes) != label
        e = np.exp(z[mask] - z[mask].max())
        dz[mask] = e / e.sum()
        dz[label] = -1.0
        return self.W1.T @ (_sigmoid(pre) * (self.W2.T @ dz))


KINDS = ("linear", "quadratic", "softplus")


@dataclass(frozen=True)
class SyntheticModelSpec:
    """Seeded recipe for a synthetic oracle.

    ``smooth_block`` and ``smooth_fraction`` shape the softplus model: that
    fraction of each first-layer weight row's energy lies in the block
    subspace with replication factor ``smooth_block``, so gradients are
    concentrated in a low-dimensional subspace, like natural-image models.
    """

    kind: str
    dim: int
    seed: int = 0
    scale: float = 1.0
    convex: bool = True
    hidden: int = 32
    classes: int = 10
    smooth_block: int = 1
    smooth_fraction: float = 0.0

    def to_dict(self):
        return asdict(self)


def make_synthetic(spec, budget=None):
    """Build the oracle described by ``spec``; identical specs give identical oracles."""
    kind = "softplus" if spec.kind == "softplus-classifier" else spec.kind
    if kind not in KINDS:
        raise ConfigurationError(f"unknown synthetic model kind {spec.kind!r}")
    D = int(spec.dim)
    if D < 2:
        raise ConfigurationError("synthetic models need dim >= 2")
    rng = make_rng(spec.seed, 0x5EED)
    if kind == "linear":
        oracle = LinearOracle(spec.scale * rng.standard_normal(D) / np.sqrt(D), budget=budget)
    elif kind == "quadratic":
        if spec.convex:
            M = rng.standard_normal((D, D))
            A = spec.scale * (M.T @ M) / D
        else:
            M = rng.standard_normal((D, D))
            A = spec.scale * (M + M.T) / np.sqrt(2 * D)
        oracle = QuadraticOracle(A, rng.standard_normal(D) / np.sqrt(D), budget=budget)
    else:
        oracle = _make_softplus(spec, rng, budget)
    oracle.spec = spec
    return oracle


def _make_softplus(spec, rng, budget):
    D, H, K = int(spec.dim), int(spec.hidden), int(spec.classes)
    if H < 1 or K < 2:
        raise ConfigurationError("softplus model needs hidden >= 1 and classes >= 2")
    if not 0.0 <= spec.smooth_fraction <= 1.0:
        raise ConfigurationError("smooth_fraction must lie in [0, 1]")
    block = int(spec.smooth_block)
    rough = rng.standard_normal((H, D))
    rough /= np.linalg.norm(rough, axis=1, keepdims=True)
    if block > 1 and spec.smooth_fraction > 0.0:
        basis = make_subspace(D, D // block) if D % block == 0 else None
        if basis is None:
            raise ConfigurationError(f"smooth_block {block} must divide dim {D}")
        smooth = basis.apply(rng.standard_normal((H, basis.d)))
        smooth /= np.linalg.norm(smooth, axis=1, keepdims=True)
        W1 = np.sqrt(spec.smooth_fraction) * smooth + np.sqrt(1.0 - spec.smooth_fraction) * rough
    else:
        W1 = rough
    W1 *= spec.scale * np.sqrt(D) / 4.0
    # centre pre-activations for inputs near the middle of [0, 1]^D
    c1 = -W1 @ np.full(D, 0.5) + rng.standard_normal(H)
    W2 = rng.standard_normal((K, H)) * (2.0 / np.sqrt(H))
    c2 = 0.1 * rng.standard_normal(K)
    return SoftplusClassifierOracle(W1, c1, W2, c2, budget=budget)


class CappedOracle(LossOracle):
    """Proxy that forwards queries to ``inner`` under its own budget."""

    def __init__(self, inner, budget):
        super().__init__(inner.dim, budget)
        self.inner = inner

    def _loss(self, x, label):
        return self.inner.query(x, label)
