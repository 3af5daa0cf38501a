import threading

import numpy as np
import pytest

from prgf.core import make_rng
from prgf.errors import BudgetExhaustedError, ConfigurationError, InvalidDimensionError
from prgf.oracle import (CappedOracle, LinearOracle, QuadraticOracle, QueryLedger, SoftplusClassifierOracle,
                         SyntheticModelSpec, make_synthetic)


class TestLedger:
    def test_budget_one(self):
        o = LinearOracle(np.ones(2), budget=1)
        o.query([0.0, 0.0])
        with pytest.raises(BudgetExhaustedError) as info:
            o.query([0.0, 0.0])
        assert info.value.used == 1

    @pytest.mark.parametrize("n", [0, 1, 17])
    def test_used_counts_queries(self, n):
        o = make_synthetic(SyntheticModelSpec("softplus", 8, seed=1))
        for _ in range(n):
            o.query(np.zeros(8), 0)
        assert o.ledger.used == n == o.queries_used

    def test_concurrent_charges_exact(self):
        led = QueryLedger(budget=5000)
        refused = []

        def work():
            for _ in range(1000):
                try:
                    led.charge()
                except BudgetExhaustedError:
                    refused.append(1)

        threads = [threading.Thread(target=work) for _ in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert led.used == 5000 and len(refused) == 3000

    def test_bad_budget(self):
        with pytest.raises(ConfigurationError):
            QueryLedger(0)

    def test_failed_query_not_billed(self):
        o = LinearOracle(np.ones(3))
        with pytest.raises(InvalidDimensionError):
            o.query(np.ones(4))
        assert o.queries_used == 0

    def test_capped_counts_both(self):
        inner = LinearOracle(np.ones(2), budget=10)
        capped = CappedOracle(inner, 3)
        for _ in range(3):
            capped.query([1.0, 1.0])
        with pytest.raises(BudgetExhaustedError):
            capped.query([1.0, 1.0])
        assert capped.queries_used == 3 and inner.queries_used == 3

    def test_capped_refunds_when_inner_exhausted(self):
        capped = CappedOracle(LinearOracle(np.ones(2), budget=2), 5)
        capped.query([0.0, 0.0])
        capped.query([0.0, 0.0])
        with pytest.raises(BudgetExhaustedError):
            capped.query([0.0, 0.0])
        assert capped.queries_used == 2


class TestSynthetic:
    def test_linear_zero(self):
        assert LinearOracle(np.array([3.0, -1.0])).query([0.0, 0.0]) == 0.0

    def test_linear_gradient(self, rng):
        g = rng.standard_normal(5)
        o = LinearOracle(g, bias=2.0)
        for _ in range(3):
            assert np.array_equal(o.true_gradient(rng.standard_normal(5)), g)

    def test_quadratic_identity(self, rng):
        o = QuadraticOracle(np.eye(4))
        x = rng.standard_normal(4)
        assert np.allclose(o.true_gradient(x), x)
        assert o.evaluate(x) == pytest.approx(0.5 * x @ x)

    @pytest.mark.parametrize("seed", range(5))
    def test_softplus_central_difference(self, seed):
        D = 20
        o = make_synthetic(SyntheticModelSpec("softplus", D, seed=seed, hidden=8, classes=4))
        rng = make_rng(seed, 9)
        x = rng.uniform(0, 1, D)
        label = int(rng.integers(4))
        h = 1e-6
        fd = np.array([(o.evaluate(x + h * e, label) - o.evaluate(x - h * e, label)) / (2 * h) for e in np.eye(D)])
        g = o.true_gradient(x, label)
        assert np.linalg.norm(fd - g) / np.linalg.norm(g) < 1e-4

    def test_softplus_loss_is_soft_margin(self):
        o = make_synthetic(SyntheticModelSpec("softplus", 16, seed=3, classes=5))
        x = np.full(16, 0.5)
        logits = o.logits(x)
        y = int(np.argmax(logits))
        others = np.delete(logits, y)
        assert o.predict(x) == y
        assert o.evaluate(x, y) == pytest.approx(np.log(np.exp(others).sum()) - logits[y], rel=1e-12)
        # the soft margin upper-bounds the hard one
        assert o.evaluate(x, y) >= others.max() - logits[y]

    def test_label_out_of_range(self):
        o = make_synthetic(SyntheticModelSpec("softplus", 4, classes=3))
        with pytest.raises(ConfigurationError):
            o.evaluate(np.zeros(4), 3)

    def test_same_spec_same_oracle(self):
        spec = SyntheticModelSpec("quadratic", 6, seed=4)
        x = np.arange(6.0)
        assert make_synthetic(spec).evaluate(x) == make_synthetic(spec).evaluate(x)

    def test_smooth_fraction_concentrates_gradient(self):
        from prgf.subspace import make_subspace
        D = 256
        basis = make_subspace(D, D // 8)
        rough = make_synthetic(SyntheticModelSpec("softplus", D, seed=2))
        smooth = make_synthetic(SyntheticModelSpec("softplus", D, seed=2, smooth_block=8, smooth_fraction=0.9))
        x = np.full(D, 0.5)

        def share(o):
            g = o.true_gradient(x, 0)
            return np.linalg.norm(basis.project(g)) ** 2 / np.linalg.norm(g) ** 2
        assert share(rough) < 0.3 < 0.8 < share(smooth)

    @pytest.mark.parametrize("spec", [
        SyntheticModelSpec("cubic", 4),
        SyntheticModelSpec("linear", 1),
        SyntheticModelSpec("softplus", 10, smooth_block=3, smooth_fraction=0.5),
        SyntheticModelSpec("softplus", 10, classes=1),
    ])
    def test_invalid_specs(self, spec):
        with pytest.raises(ConfigurationError):
            make_synthetic(spec)

    def test_softplus_type(self):
        assert isinstance(make_synthetic(SyntheticModelSpec("softplus-classifier", 4)), SoftplusClassifierOracle)
