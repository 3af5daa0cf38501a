"""``prgf`` command line: attack, bench, verify, serve.

Configs are JSON files validated against ``prgf.config.SCHEMA``; flags
override file values. ``PRGF_SEED`` sets the default ``--seed`` of
``verify`` and ``serve``.

Output files (schemas are fixed):

* ``traces.jsonl``: a ``{"config": ...}`` header line, then per run one line
  per iteration and one summary line.
* ``summary.csv``: ``method,norm,ASR,avg_queries,seeds``
  (``bench`` adds ``median_queries``).
* ``curve.csv``: ``method,success_rate,avg_queries``.
* ``report.json``: resolved config, summary rows and run outcomes. It is a
  valid ``--config`` input and reproduces the run.
"""
import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import config as config_mod
from .attack import ABORTED, SUMMARY_COLUMNS, summary_row
from .bench import curve_rows, run_bench, summarize, to_plain
from .errors import ConfigurationError, PrgfError
from .kernels import BACKEND
from .oracle import KINDS, make_synthetic
from .remote import SCHEME, parse_endpoint, serve
from .verify import SUITES, run_suite

BENCH_COLUMNS = ("method", "norm", "ASR", "avg_queries", "median_queries", "seeds")
CURVE_COLUMNS = ("method", "success_rate", "avg_queries")
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _env_seed():
    raw = os.environ.get("PRGF_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"prgf: PRGF_SEED must be an integer, got {raw!r}")


def _parse_seeds(text):
    """``"0-4"``, ``"1,3,5"`` or a mix like ``"0-2,7"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def _parse_set(text):
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    try:
        return key, json.loads(value)
    except json.JSONDecodeError:
        return key, value


def _build_config(args):
    """File values, then flag overrides, then validation. Nothing is written before this returns."""
    raw = {}
    if args.config:
        with open(args.config) as fh:
            try:
                raw = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{args.config} is not valid JSON: {exc}") from None
        if isinstance(raw, dict) and "config" in raw and "summary" in raw:
            raw = raw["config"]
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a JSON object")
    for key, value in args.set or ():
        config_mod.set_path(raw, key, value)
    flags = {"dim": args.dim, "seeds": args.seeds, "jobs": args.jobs, "output.dir": args.out,
             "estimator.q": args.q, "attack.max_queries": args.max_queries, "attack.norm": args.norm}
    for key, value in flags.items():
        if value is not None:
            config_mod.set_path(raw, key, value)
    if args.methods is not None:
        raw["methods"] = args.methods
    return config_mod.resolve(raw)


def _endpoint(args, cfg):
    if args.oracle in (None, "local"):
        return None
    if not args.oracle.startswith(SCHEME):
        raise ConfigurationError(f"--oracle must be 'local' or {SCHEME}HOST:PORT")
    if cfg["model"]["seed"] is None:
        raise ConfigurationError("a remote oracle needs model.seed so the local twin matches the served weights")
    parse_endpoint(args.oracle)
    return args.oracle


def _progress(verbose):
    if not verbose:
        return None

    def report(name, seed, tr, dt):
        print(f"  {name:<16} seed={seed:<4} {tr.outcome:<16} queries={tr.queries:<6} {dt:.2f}s", file=sys.stderr)
    return report


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})


def _outputs(cfg):
    out = cfg["output"]
    os.makedirs(out["dir"], exist_ok=True)
    return {k: os.path.join(out["dir"], out[k]) for k in ("traces", "summary", "curve", "report")}


def _write_run(cfg, traces, paths, summary_rows, summary_columns):
    with open(paths["traces"], "w") as fh:
        fh.write(json.dumps({"config": cfg}) + "\n")
        for trs in traces.values():
            for tr in trs:
                tr.write_jsonl(fh)
    _write_csv(paths["summary"], summary_columns, summary_rows)
    _write_csv(paths["curve"], CURVE_COLUMNS, curve_rows(traces))
    runs = [{"method": t.method, "seed": t.seed, "outcome": t.outcome, "queries": t.queries}
            for trs in traces.values() for t in trs]
    report = {"config": cfg, "summary": summary_rows, "runs": runs, "backend": BACKEND}
    with open(paths["report"], "w") as fh:
        # key order is kept: method order in the config fixes the run order
        json.dump(to_plain(report), fh, indent=2)
        fh.write("\n")


def _aborted(traces):
    return [t for trs in traces.values() for t in trs if t.outcome == ABORTED]


def _run(args, bench):
    cfg = _build_config(args)
    endpoint = _endpoint(args, cfg)
    paths = _outputs(cfg)
    bcfg = config_mod.to_bench_config(cfg)
    t0 = time.perf_counter()
    traces = run_bench(bcfg, progress=_progress(args.verbose), jobs=cfg["jobs"], endpoint=endpoint)
    elapsed = time.perf_counter() - t0
    norm = cfg["attack"]["norm"]
    if bench:
        rows, columns = summarize(traces, norm), BENCH_COLUMNS
    else:
        rows, columns = [summary_row(name, norm, trs) for name, trs in traces.items()], SUMMARY_COLUMNS
    _write_run(cfg, traces, paths, rows, columns)
    _print_table(rows, columns)
    if bench:
        _print_ordering(rows)
    bad = _aborted(traces)
    for t in bad:
        print(f"aborted: {t.method} seed={t.seed}: {t.error}", file=sys.stderr)
    print(f"wrote {paths['summary']} ({elapsed:.1f}s)")
    return EXIT_FAIL if bad else EXIT_OK


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.4g}"
    return str(v)


def _print_table(rows, columns):
    widths = [max(len(c), *(len(_fmt(r.get(c))) for r in rows)) for c in columns]
    print("  ".join(c.ljust(w) for c, w in zip(columns, widths)))
    for r in rows:
        print("  ".join(_fmt(r.get(c)).ljust(w) for c, w in zip(columns, widths)))


ORDERINGS = (
    ("prgf", "rgf"),
    ("prgf", "prgf_lambda0.5"),
    ("prgf", "prgf_lambda0.05"),
    ("rgf_d", "rgf"),
    ("prgf_d", "prgf"),
    ("avg_d", "avg"),
)


def _print_ordering(rows):
    med = {r["method"]: r["median_queries"] for r in rows}
    for a, b in ORDERINGS:
        if a in med and b in med:
            verdict = "yes" if med[a] < med[b] else "no"
            print(f"median {a} < {b}: {verdict} ({_fmt(med[a])} vs {_fmt(med[b])})")


def cmd_attack(args):
    return _run(args, bench=False)


def cmd_bench(args):
    return _run(args, bench=True)


def _verify_one(name, seed):
    t0 = time.perf_counter()
    rep = run_suite(name, seed)
    rep["seconds"] = time.perf_counter() - t0
    return rep


def cmd_verify(args):
    names = SUITES if args.suite == "all" else (args.suite,)
    if args.jobs > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            reports = list(pool.map(_verify_one, names, [args.seed] * len(names)))
    else:
        reports = [_verify_one(n, args.seed) for n in names]
    os.makedirs(args.out, exist_ok=True)
    ok = True
    for rep in reports:
        for chk in rep["checks"]:
            print(f"[{'PASS' if chk['passed'] else 'FAIL'}] {rep['suite']}: {chk['name']}")
        path = os.path.join(args.out, f"verify-{rep['suite']}-seed{rep['seed']}.json")
        with open(path, "w") as fh:
            json.dump(to_plain(rep), fh, indent=2, sort_keys=True)
            fh.write("\n")
        status = "PASS" if rep["passed"] else "FAIL"
        print(f"suite {rep['suite']} seed={rep['seed']}: {status} ({rep['seconds']:.1f}s) -> {path}")
        ok &= rep["passed"]
    return EXIT_OK if ok else EXIT_FAIL


def cmd_serve(args):
    raw = {}
    if args.config:
        raw = config_mod.load(args.config)
    model = dict(config_mod.defaults()["model"], **raw.get("model", {}))
    model.update(kind=args.model, seed=args.seed)
    dim = args.dim if args.dim is not None else raw.get("dim", config_mod.defaults()["dim"])
    spec_cfg = config_mod.resolve({"dim": dim, "model": model})
    oracle = make_synthetic(config_mod.to_bench_config(spec_cfg).model_spec(args.seed))
    handle = serve(oracle, args.listen, args.budget)
    print(f"serving {args.model} dim={dim} seed={args.seed} budget={args.budget} on {handle.endpoint}", flush=True)
    try:
        handle.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        handle.close()
    return EXIT_OK


def _run_flags(p):
    p.add_argument("--config", help="JSON run config (or a report.json from a previous run)")
    p.add_argument("--oracle", default=None, help=f"'local' (default) or {SCHEME}HOST:PORT")
    p.add_argument("--seeds", type=_parse_seeds, help="seed list, e.g. 0-49 or 1,3,5")
    p.add_argument("--methods", type=lambda s: [m for m in s.split(",") if m], help="comma-separated method names")
    p.add_argument("--dim", type=int)
    p.add_argument("--q", type=int, help="directions per estimate")
    p.add_argument("--max-queries", type=int)
    p.add_argument("--norm", choices=("l2", "linf"))
    p.add_argument("--jobs", type=int, help="worker processes for the seed sweep")
    p.add_argument("--out", help="output directory")
    p.add_argument("--set", action="append", type=_parse_set, metavar="KEY=VALUE",
                   help="override any config value, e.g. --set estimator.S=5 (repeatable)")
    p.add_argument("-v", "--verbose", action="store_true", help="per-run progress on stderr")


def build_parser():
    parser = argparse.ArgumentParser(prog="prgf", description="Prior-guided gradient-free black-box attacks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("attack", help="run a seed sweep and write traces and a summary CSV")
    _run_flags(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("bench", help="compare methods on the synthetic benchmark")
    _run_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("verify", help="check closed forms against Monte Carlo and grid search")
    p.add_argument("--suite", required=True, choices=SUITES + ("all",))
    p.add_argument("--seed", type=int, default=None, help="default: $PRGF_SEED or 0")
    p.add_argument("--out", default=".", help="directory for the JSON reports")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("serve", help="serve a synthetic loss oracle over TCP")
    p.add_argument("--model", required=True, choices=KINDS)
    p.add_argument("--dim", type=int)
    p.add_argument("--seed", type=int, default=None, help="model seed; default: $PRGF_SEED or 0")
    p.add_argument("--budget", type=int, default=None, help="queries per connection")
    p.add_argument("--listen", default="127.0.0.1:0", help="HOST:PORT; port 0 picks a free port")
    p.add_argument("--config", help="run config supplying the remaining model settings")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", 0) is None:
        args.seed = _env_seed()
    try:
        return args.func(args)
    except (PrgfError, OSError) as exc:
        print(f"prgf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE if isinstance(exc, ConfigurationError) else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
