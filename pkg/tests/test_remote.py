import json
import socket

import numpy as np
import pytest

from prgf.attack import EXHAUSTED, AttackConfig, run_attack
from prgf.bench import BenchConfig, make_target, run_one
from prgf.core import make_rng
from prgf.errors import (BudgetExhaustedError, ConfigurationError, DimensionMismatchError, TransportError)
from prgf.estimator import EstimatorConfig
from prgf.oracle import LinearOracle
from prgf.prior import SyntheticPriorSource
from prgf.remote import connect, parse_endpoint, serve


def _raw(endpoint, *lines):
    host, port = parse_endpoint(endpoint)
    with socket.create_connection((host, port), timeout=5) as s:
        f = s.makefile("rwb")
        out = []
        for line in lines:
            f.write(line if isinstance(line, bytes) else (json.dumps(line) + "\n").encode())
            f.flush()
            out.append(json.loads(f.readline()))
        return out


@pytest.fixture
def linear_server():
    with serve(LinearOracle(np.array([1.0, 2.0]))) as srv:
        yield srv


class TestEndpoint:
    @pytest.mark.parametrize("text, want", [
        ("remote://10.0.0.1:9000", ("10.0.0.1", 9000)),
        ("localhost:80", ("localhost", 80)),
        (":81", ("127.0.0.1", 81)),
        (("h", "7"), ("h", 7)),
    ])
    def test_parse(self, text, want):
        assert parse_endpoint(text) == want

    @pytest.mark.parametrize("bad", ["nohost", "h:port", "remote://h"])
    def test_bad(self, bad):
        with pytest.raises(ConfigurationError):
            parse_endpoint(bad)


class TestProtocol:
    def test_linear_at_origin(self, linear_server):
        resp = _raw(linear_server.endpoint, {"id": 1, "op": "loss", "x": [0, 0], "label": 0})
        assert resp == [{"id": 1, "loss": 0.0, "queries_used": 1}]

    def test_counts_per_connection(self, linear_server):
        reqs = [{"id": i, "op": "loss", "x": [1.0, 1.0], "label": 0} for i in range(3)]
        assert [r["queries_used"] for r in _raw(linear_server.endpoint, *reqs)] == [1, 2, 3]
        assert _raw(linear_server.endpoint, reqs[0])[0]["queries_used"] == 1

    @pytest.mark.parametrize("line", [
        b"not json\n",
        b'{"id": 4, "op": "grad", "x": [0, 0]}\n',
        b'{"id": 4, "op": "loss", "x": [0, "a"]}\n',
        b'{"id": 4, "op": "loss", "x": [0, NaN]}\n',
        b'{"id": 4, "op": "loss", "x": [0, 0], "label": 1.5}\n',
        b"[1, 2]\n",
    ])
    def test_malformed(self, linear_server, line):
        (resp,) = _raw(linear_server.endpoint, line)
        assert resp["error"] == "malformed"
        assert "loss" not in resp

    def test_malformed_keeps_id(self, linear_server):
        (resp,) = _raw(linear_server.endpoint, {"id": 9, "op": "nope"})
        assert resp == {"id": 9, "error": "malformed"}

    def test_dim_mismatch(self, linear_server):
        (resp,) = _raw(linear_server.endpoint, {"id": 2, "op": "loss", "x": [0, 0, 0], "label": 0})
        assert resp == {"id": 2, "error": "dim_mismatch"}

    def test_errors_are_free(self, linear_server):
        ok = {"id": 3, "op": "loss", "x": [0, 0], "label": 0}
        resp = _raw(linear_server.endpoint, b"junk\n", {"id": 1, "op": "loss", "x": [0]}, ok)
        assert resp[-1]["queries_used"] == 1

    def test_budget(self):
        with serve(LinearOracle(np.ones(2)), budget=2) as srv:
            req = {"id": 0, "op": "loss", "x": [1, 1], "label": 0}
            resp = _raw(srv.endpoint, req, req, req)
        assert [r.get("queries_used") for r in resp[:2]] == [1, 2]
        assert resp[2] == {"id": 0, "error": "budget_exhausted"}


class TestClient:
    def test_roundtrips_match_counts(self, rng):
        g = rng.standard_normal(16)
        local = LinearOracle(g)
        with serve(LinearOracle(g)) as srv, connect(srv.endpoint, 16) as remote:
            for _ in range(1000):
                x = rng.standard_normal(16)
                assert remote.query(x) == local.query(x)
            assert remote.queries_used == remote.server_queries_used == 1000
            assert srv.ledgers[0].used == 1000

    def test_budget_error(self):
        with serve(LinearOracle(np.ones(3)), budget=1) as srv, connect(srv.endpoint, 3) as remote:
            remote.query(np.zeros(3))
            with pytest.raises(BudgetExhaustedError):
                remote.query(np.zeros(3))
            # the refused query is not charged on either side
            assert remote.queries_used == 1

    def test_dim_mismatch_error(self):
        with serve(LinearOracle(np.ones(3))) as srv, connect(srv.endpoint, 2) as remote:
            with pytest.raises(DimensionMismatchError):
                remote.query(np.zeros(2))

    def test_refused(self):
        with serve(LinearOracle(np.ones(2))) as srv:
            endpoint = srv.endpoint
        with pytest.raises(TransportError):
            connect(endpoint, 2)

    def test_server_closed_midway(self):
        srv = serve(LinearOracle(np.ones(2)))
        remote = connect(srv.endpoint, 2)
        remote.query(np.zeros(2))
        remote._sock.shutdown(socket.SHUT_RDWR)
        srv.close()
        with pytest.raises(TransportError):
            remote.query(np.zeros(2))

    def test_bind_failure(self):
        with serve(LinearOracle(np.ones(2))) as srv:
            with pytest.raises(TransportError):
                serve(LinearOracle(np.ones(2)), srv.endpoint)


class TestRemoteAttack:
    def test_bit_identical_to_local(self):
        cfg = BenchConfig(dim=64, seeds=[0], estimator={"q": 10}, attack={"norm": "l2", "eta": 0.2,
                                                                         "max_queries": 2000})
        for seed in (0, 1):
            target = make_target(cfg, seed)
            local = run_one(cfg, "prgf", seed, target=target)
            with serve(make_target(cfg, seed)[0]) as srv, connect(srv.endpoint, cfg.dim) as remote:
                far = run_one(cfg, "prgf", seed, oracle=remote, target=target)
            assert far.to_dict() == local.to_dict()

    @pytest.mark.parametrize("budget", [500, 10_000])
    def test_server_budget_is_exact(self, budget):
        # an unreachable threshold makes the attack spend whatever it is given
        g = make_rng(0).standard_normal(32)
        cfg = AttackConfig(epsilon=1.0, eta=0.1, max_queries=20_000, threshold=1e9)
        with serve(LinearOracle(g), budget=budget) as srv, connect(srv.endpoint, 32) as remote:
            prior = SyntheticPriorSource(LinearOracle(g), 0.3, seed=0)
            trace = run_attack(remote, np.zeros(32), 0, prior, cfg, EstimatorConfig(q=20), make_rng(1))
            assert srv.ledgers[0].used == budget
        assert trace.outcome == EXHAUSTED
        assert trace.queries == budget
