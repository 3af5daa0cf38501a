import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prgf import kernels
from prgf.kernels import available_backends

BACKENDS = sorted(available_backends())


@pytest.fixture(params=BACKENDS)
def k(request):
    return available_backends()[request.param]


def test_numpy_always_available():
    assert "numpy" in BACKENDS
    assert kernels.BACKEND in BACKENDS


class TestAgreement:
    def test_normalize_rows(self, k):
        W = np.random.default_rng(0).standard_normal((7, 13))
        W[3] = 0.0
        U, n = k.normalize_rows(W)
        assert np.allclose(n, np.linalg.norm(W, axis=1))
        assert np.all(U[3] == 0.0)
        assert np.allclose(np.linalg.norm(np.delete(U, 3, 0), axis=1), 1.0)

    def test_combine_biased(self, k):
        rng = np.random.default_rng(1)
        W = rng.standard_normal((5, 11))
        v = rng.standard_normal(11)
        v /= np.linalg.norm(v)
        U, _ = k.combine_biased(W, v, 0.3)
        U0, _ = available_backends()["numpy"].combine_biased(W, v, 0.3)
        assert np.allclose(U, U0, atol=1e-12)
        assert np.allclose(U @ v, np.sqrt(0.3), atol=1e-12)

    def test_fd_average(self, k):
        rng = np.random.default_rng(2)
        U = rng.standard_normal((6, 9))
        d = rng.standard_normal(6)
        assert np.allclose(k.fd_average(d, U), d @ U / 6, atol=1e-12)

    @given(st.floats(0, 1), st.floats(0, 1), st.integers(2, 300), st.integers(1, 60))
    @settings(max_examples=80, deadline=None)
    def test_objectives_match_numpy(self, lam, a2, D, q):
        ref = available_backends()["numpy"]
        for kk in available_backends().values():
            assert kk.F_full(lam, a2, D, q) == pytest.approx(ref.F_full(lam, a2, D, q), rel=1e-12, abs=1e-15)
            assert kk.F_subspace(lam, a2, 0.5, D, q) == pytest.approx(ref.F_subspace(lam, a2, 0.5, D, q),
                                                                      rel=1e-12, abs=1e-15)
            assert kk.averaging_loss(lam, a2, 0.3, 0.1) == pytest.approx(ref.averaging_loss(lam, a2, 0.3, 0.1),
                                                                         rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize("a2, D, q", [(0.05, 100, 10), (0.0, 8, 1), (1.0, 64, 5), (0.3, 256, 50)])
    def test_grid_argmax_identical(self, k, a2, D, q):
        ref = available_backends()["numpy"]
        lam, val = k.grid_argmax_F(a2, D, q, 100_000)
        lam0, val0 = ref.grid_argmax_F(a2, D, q, 100_000)
        assert abs(lam - lam0) <= 1e-5
        assert val == pytest.approx(val0, rel=1e-12)

    def test_grid_argmin_averaging(self, k):
        mu, val = k.grid_argmin_averaging(0.3, 0.4, 0.12, 10_000)
        mu0, val0 = available_backends()["numpy"].grid_argmin_averaging(0.3, 0.4, 0.12, 10_000)
        assert abs(mu - mu0) <= 1e-4 and val == pytest.approx(val0, rel=1e-12)


def test_pure_python_env_forces_numpy(monkeypatch):
    import importlib
    monkeypatch.setenv("PRGF_PURE_PYTHON", "1")
    mod = importlib.reload(kernels)
    try:
        assert mod.BACKEND == "numpy"
    finally:
        monkeypatch.delenv("PRGF_PURE_PYTHON")
        importlib.reload(kernels)
