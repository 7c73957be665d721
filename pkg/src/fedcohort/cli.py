"""Command line front end.

Builds a config from flags (optionally seeded from a JSON file via --config),
sends it to the experiment service, and writes the returned artifacts. By
default the service runs in-process; --server points at a remote instance and
--serve starts one.
"""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

import httpx

from .harness import METHODS, TraceRecord, write_sweep, write_summary, write_trace

MODES = ("run", "sweep-k", "sweep-c", "contract-test")
_MODE_PATHS = {"run": "/run", "sweep-k": "/sweep/k", "sweep-c": "/sweep/c",
               "contract-test": "/contract-test"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fedcohort",
        description="Federated optimization runs with cohort sampling and local training.")
    p.add_argument("--data", help="LibSVM-format data file")
    p.add_argument("--synthetic", metavar="SPEC",
                   help="synthetic problem, e.g. 'quadratic:d=10,M=4,kappa=100,seed=1' "
                        "or 'logistic:d=20,M=5,N=40,kappa=1000,seed=3'")
    p.add_argument("--clients", type=int, metavar="M",
                   help="number of clients to partition --data into")
    p.add_argument("--cohort", type=int, metavar="C",
                   help="sampled cohort size per round (default: all clients)")
    p.add_argument("--method", choices=METHODS,
                   help="optimization method (default 5gcs)")
    p.add_argument("--schedule", metavar="NAME",
                   help="parameter schedule: thm1, thm2, thm3, thm5, or thm6:<alpha> "
                        "(default depends on the method)")
    p.add_argument("--local-solver", choices=("gd", "lsvrg", "prox"), dest="local_solver",
                   help="subproblem solver for cohort members (default gd)")
    p.add_argument("--local-steps", type=int, dest="local_steps", metavar="K",
                   help="local step count; without --schedule this derives the "
                        "certified schedule for that budget")
    p.add_argument("--batch", type=int, help="lsvrg minibatch size (default 1)")
    p.add_argument("--conservative", action="store_true", default=None,
                   help="local gd uses the global smoothness constant")
    p.add_argument("--init-u", choices=("grad", "zero"), dest="init_duals",
                   help="dual initialization (default grad)")
    p.add_argument("--eps", type=float, help="target accuracy in (0, 1] (default 1e-6)")
    p.add_argument("--seed", type=int, help="master seed (default 0)")
    p.add_argument("--max-rounds", type=int, dest="max_rounds",
                   help="round cap (default 100000)")
    p.add_argument("--out", metavar="DIR", default="out",
                   help="directory for trace/summary files (default ./out)")
    p.add_argument("--mode", choices=MODES, default="run",
                   help="what to do (default run)")
    p.add_argument("--config", metavar="JSON",
                   help="JSON file with config fields; explicit flags override it")
    p.add_argument("--steps", metavar="K1,K2,...",
                   help="sweep-k: explicit list of local step budgets")
    p.add_argument("--cohorts", metavar="C1,C2,...",
                   help="sweep-c: explicit list of cohort sizes")
    p.add_argument("--num-seeds", type=int, dest="num_seeds",
                   help="sweeps: seeds per configuration (default 5)")
    p.add_argument("--rounds", type=int,
                   help="contract-test: rounds to check (default 100)")
    p.add_argument("--server", metavar="URL",
                   help="use a running service instead of in-process execution")
    p.add_argument("--serve", action="store_true", help="start the HTTP service")
    p.add_argument("--host", default="127.0.0.1", help="--serve bind host")
    p.add_argument("--port", type=int, default=8000, help="--serve port")
    return p


_CONFIG_KEYS = ("data", "synthetic", "clients", "cohort", "method", "local_solver",
                "local_steps", "batch", "conservative", "init_duals", "eps", "seed",
                "max_rounds")


def build_payload(args: argparse.Namespace) -> dict:
    payload: dict = {}
    if args.config:
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError("--config file must hold a JSON object")
        payload.update(loaded)
    for key in _CONFIG_KEYS:
        value = getattr(args, key)
        if value is not None:
            payload[key] = value
    if args.schedule is not None:
        name, sep, alpha = args.schedule.partition(":")
        payload["schedule"] = name
        if sep:
            payload["alpha"] = float(alpha)
    if args.mode == "sweep-k":
        if args.steps:
            payload["step_counts"] = [int(v) for v in args.steps.split(",")]
        if args.num_seeds is not None:
            payload["num_seeds"] = args.num_seeds
    elif args.mode == "sweep-c":
        if args.cohorts:
            payload["cohort_sizes"] = [int(v) for v in args.cohorts.split(",")]
        if args.num_seeds is not None:
            payload["num_seeds"] = args.num_seeds
    elif args.mode == "contract-test":
        if args.rounds is not None:
            payload["rounds"] = args.rounds
    return payload


def call_service(args: argparse.Namespace, path: str, payload: dict) -> httpx.Response:
    if args.server:
        with httpx.Client(base_url=args.server, timeout=None) as client:
            return client.post(path, json=payload)

    from .service.app import app as service_app

    async def go() -> httpx.Response:
        transport = httpx.ASGITransport(app=service_app)
        async with httpx.AsyncClient(transport=transport, base_url="http://fedcohort",
                                     timeout=None) as client:
            return await client.post(path, json=payload)

    return asyncio.run(go())


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.serve:
        import uvicorn

        from .service.app import app as service_app
        uvicorn.run(service_app, host=args.host, port=args.port)
        return 0

    try:
        payload = build_payload(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    response = call_service(args, _MODE_PATHS[args.mode], payload)
    if response.status_code != 200:
        try:
            detail = response.json().get("detail", response.text)
        except ValueError:
            detail = response.text
        print(f"error: {detail}", file=sys.stderr)
        return 2

    body = response.json()
    out = Path(args.out)
    if args.mode == "run":
        records = [TraceRecord(**row) for row in body["trace"]]
        trace_path = write_trace(records, out / "trace.csv")
        summary_path = write_summary(body["summary"], out / "summary.json")
        print(json.dumps(body["summary"], indent=2))
        print(f"wrote {trace_path} and {summary_path}")
        return 0
    if args.mode in ("sweep-k", "sweep-c"):
        name = "sweep_k.csv" if args.mode == "sweep-k" else "sweep_c.csv"
        path = write_sweep(body["rows"], out / name)
        print(json.dumps({"medians": body["medians"]}, indent=2))
        print(f"wrote {path}")
        return 0
    report = {k: body[k] for k in ("rounds", "failures", "worst_ratio", "satisfied")}
    write_summary(body, out / "contract.json")
    print(json.dumps(report, indent=2))
    print(f"wrote {out / 'contract.json'}")
    return 0 if body["satisfied"] else 1


if __name__ == "__main__":
    sys.exit(main())
