"""HTTP facade over the experiment harness.

Endpoints take the same configuration shape the CLI builds and return the
summary, traces, sweep tables, or contraction reports as JSON. All state lives
in the request; the service itself is stateless.
"""

from __future__ import annotations

from dataclasses import asdict

from fastapi import FastAPI, HTTPException

from ..data_io import LibsvmParseError
from ..harness import (build_problem, contraction_test, default_cohort_sizes,
                       default_step_counts, median_by, resolve_schedule, run_experiment,
                       sweep_T_vs_K, sweep_cohort)
from ..local_solvers import SolverSpec
from .models import (ContractRequest, ContractResponse, RunRequest, RunResponse,
                     SweepCRequest, SweepKRequest, SweepResponse, TraceRow)

app = FastAPI(title="fedcohort", version="0.1.0")

_CLIENT_ERRORS = (ValueError, LibsvmParseError, FileNotFoundError)


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}


@app.post("/run")
def run(req: RunRequest) -> RunResponse:
    try:
        config = req.to_config()
        problem = build_problem(config)
        result = run_experiment(problem, config)
    except _CLIENT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    trace = [TraceRow(**asdict(r)) for r in result.records] if req.include_trace else []
    return RunResponse(summary=result.summary, trace=trace)


@app.post("/sweep/k")
def sweep_k(req: SweepKRequest) -> SweepResponse:
    try:
        config = req.to_config()
        problem = build_problem(config)
        C = config.cohort if config.cohort is not None else problem.M
        steps = req.step_counts if req.step_counts else default_step_counts(problem, C)
        rows = sweep_T_vs_K(problem, config, steps, num_seeds=req.num_seeds)
    except _CLIENT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return SweepResponse(rows=rows, medians=median_by(rows, "K"))


@app.post("/sweep/c")
def sweep_c(req: SweepCRequest) -> SweepResponse:
    try:
        config = req.to_config()
        problem = build_problem(config)
        sizes = req.cohort_sizes if req.cohort_sizes else default_cohort_sizes(problem.M)
        rows = sweep_cohort(problem, config, sizes, num_seeds=req.num_seeds)
    except _CLIENT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return SweepResponse(rows=rows, medians=median_by(rows, "C"))


@app.post("/contract-test")
def contract_test(req: ContractRequest) -> ContractResponse:
    try:
        config = req.to_config()
        problem = build_problem(config)
        schedule = resolve_schedule(problem, config)
        if schedule is None:
            raise ValueError("the contraction check applies to the cohort methods only")
        solver = SolverSpec(name=config.local_solver, steps=config.local_steps,
                            batch=config.batch, conservative=config.conservative,
                            tol=config.tol)
        report = contraction_test(problem, schedule, variant=config.method,
                                  solver=solver, rounds=req.rounds, seed=config.seed,
                                  slack=req.slack)
    except _CLIENT_ERRORS as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return ContractResponse(rounds=report.rounds, failures=report.failures,
                            worst_ratio=report.worst_ratio, satisfied=report.satisfied,
                            rows=report.rows)
