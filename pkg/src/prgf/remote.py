"""Loss oracle over TCP, one JSON object per line.

Request:  ``{"id": int, "op": "loss", "x": [float, ...], "label": int}``
Response: ``{"id": int, "loss": float, "queries_used": int}`` or
``{"id": int, "error": "budget_exhausted" | "malformed" | "dim_mismatch"}``.

Floats are written with Python's shortest round-trip repr, so a remote oracle
returns bit-identical losses to its local twin. Every connection gets its own
budget; requests on one connection are answered in order.
"""
import json
import math
import socket
import socketserver
import threading

from .errors import (BudgetExhaustedError, ConfigurationError, DimensionMismatchError, MalformedRequestError,
                     TransportError)
from .oracle import LossOracle, QueryLedger

SCHEME = "remote://"
MALFORMED = "malformed"
DIM_MISMATCH = "dim_mismatch"
BUDGET_EXHAUSTED = "budget_exhausted"


def parse_endpoint(endpoint):
    """``"host:port"``, ``"remote://host:port"`` or ``(host, port)`` -> ``(host, port)``."""
    if isinstance(endpoint, tuple):
        return endpoint[0], int(endpoint[1])
    text = str(endpoint)
    if text.startswith(SCHEME):
        text = text[len(SCHEME):]
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigurationError(f"endpoint must look like host:port, got {endpoint!r}")
    return host or "127.0.0.1", int(port)


def _reject_constant(name):
    raise ValueError(f"non-finite literal {name}")


def _decode(line):
    return json.loads(line, parse_constant=_reject_constant)


def _encode(obj):
    return (json.dumps(obj, allow_nan=False) + "\n").encode("utf-8")


def _handle(oracle, ledger, line):
    """Answer one request line; returns the response dict."""
    try:
        req = _decode(line)
    except (ValueError, UnicodeDecodeError):
        return {"id": None, "error": MALFORMED}
    rid = req.get("id") if isinstance(req, dict) else None
    if not isinstance(req, dict) or req.get("op") != "loss":
        return {"id": rid, "error": MALFORMED}
    x, label = req.get("x"), req.get("label", 0)
    if (not isinstance(x, list) or isinstance(label, bool) or not isinstance(label, int)
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v) for v in x)):
        return {"id": rid, "error": MALFORMED}
    if len(x) != oracle.dim:
        return {"id": rid, "error": DIM_MISMATCH}
    try:
        ledger.charge()
    except BudgetExhaustedError:
        return {"id": rid, "error": BUDGET_EXHAUSTED}
    try:
        loss = float(oracle.query([float(v) for v in x], label))
    except Exception:
        ledger.refund()
        return {"id": rid, "error": MALFORMED}
    return {"id": rid, "loss": loss, "queries_used": ledger.used}


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        srv = self.server
        ledger = QueryLedger(srv.budget)
        with srv.lock:
            srv.ledgers.append(ledger)
        for line in self.rfile:
            if not line.strip():
                continue
            try:
                self.wfile.write(_encode(_handle(srv.oracle, ledger, line)))
                self.wfile.flush()
            except (BrokenPipeError, ConnectionResetError):
                return


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class ServerHandle:
    """Running oracle server. ``address`` is the bound ``(host, port)``."""

    def __init__(self, server, thread):
        self._server = server
        self._thread = thread

    @property
    def address(self):
        return self._server.server_address[:2]

    @property
    def endpoint(self):
        host, port = self.address
        return f"{host}:{port}"

    @property
    def ledgers(self):
        """Per-connection ledgers in connection order."""
        return list(self._server.ledgers)

    def close(self):
        self._server.shutdown()
        self._server.server_close()
        self._thread.join()

    def serve_forever(self):
        self._thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def serve(oracle, endpoint="127.0.0.1:0", budget=None):
    """Start serving ``oracle`` in a background thread. Port 0 picks a free port.

    Bind failures raise ``TransportError``.
    """
    host, port = parse_endpoint(endpoint)
    try:
        server = _Server((host, port), _Handler)
    except OSError as exc:
        raise TransportError(f"cannot bind {host}:{port}: {exc}") from exc
    server.oracle = oracle
    server.budget = None if budget is None else int(budget)
    server.ledgers = []
    server.lock = threading.Lock()
    thread = threading.Thread(target=server.serve_forever, name="prgf-oracle-server", daemon=True)
    thread.start()
    return ServerHandle(server, thread)


class RemoteOracle(LossOracle):
    """Client side of the wire protocol. One TCP connection, hence one server-side budget."""

    def __init__(self, endpoint, dim, budget=None, timeout=30.0):
        super().__init__(dim, budget)
        self.endpoint = parse_endpoint(endpoint)
        self.timeout = timeout
        self.server_queries_used = 0
        self._next_id = 0
        self._sock = None
        self._file = None
        self._lock = threading.Lock()

    def _connect(self):
        try:
            self._sock = socket.create_connection(self.endpoint, timeout=self.timeout)
        except OSError as exc:
            raise TransportError(f"cannot connect to {self.endpoint}: {exc}") from exc
        self._sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._file = self._sock.makefile("rwb")

    def _roundtrip(self, payload):
        with self._lock:
            if self._sock is None:
                self._connect()
            try:
                self._file.write(_encode(payload))
                self._file.flush()
                line = self._file.readline()
            except OSError as exc:
                self.close()
                raise TransportError(f"connection to {self.endpoint} failed: {exc}") from exc
        if not line:
            self.close()
            raise TransportError(f"server {self.endpoint} closed the connection")
        try:
            return _decode(line)
        except ValueError as exc:
            raise TransportError(f"unreadable response from {self.endpoint}") from exc

    def _loss(self, x, label):
        rid = self._next_id
        self._next_id += 1
        resp = self._roundtrip({"id": rid, "op": "loss", "x": [float(v) for v in x], "label": int(label)})
        err = resp.get("error")
        if err == BUDGET_EXHAUSTED:
            raise BudgetExhaustedError(self.server_queries_used)
        if err == DIM_MISMATCH:
            raise DimensionMismatchError(f"server rejected a vector of dimension {len(x)}")
        if err is not None:
            raise MalformedRequestError(f"server answered {err!r}")
        if resp.get("id") != rid:
            raise TransportError(f"response id {resp.get('id')} does not match request {rid}")
        self.server_queries_used = int(resp["queries_used"])
        return float(resp["loss"])

    def close(self):
        for obj in (self._file, self._sock):
            try:
                if obj is not None:
                    obj.close()
            except OSError:
                pass
        self._file = self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def connect(endpoint, dim, budget=None, timeout=30.0):
    """Open a ``RemoteOracle``. The protocol carries no metadata, so ``dim`` must be supplied."""
    oracle = RemoteOracle(endpoint, dim, budget, timeout)
    with oracle._lock:
        oracle._connect()
    return oracle
