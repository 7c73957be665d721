"""Request and response schemas for the experiment service."""

from __future__ import annotations

from pydantic import BaseModel

from ..harness import ExperimentConfig


class ConfigPayload(BaseModel):
    """Mirror of ExperimentConfig; see that class for field semantics."""

    synthetic: str | None = None
    data: str | None = None
    clients: int | None = None
    lam: float | None = None
    lam_ratio: float | None = None
    cohort: int | None = None
    method: str = "5gcs"
    schedule: str | None = None
    alpha: float | None = None
    local_solver: str = "gd"
    local_steps: int | None = None
    batch: int = 1
    conservative: bool = False
    tol: float | None = None
    init_duals: str = "grad"
    eps: float = 1e-6
    seed: int = 0
    max_rounds: int = 100_000
    cache_dir: str | None = None

    def to_config(self) -> ExperimentConfig:
        fields = set(ConfigPayload.model_fields)
        return ExperimentConfig(**self.model_dump(include=fields))


class RunRequest(ConfigPayload):
    include_trace: bool = True


class TraceRow(BaseModel):
    round: int
    psi: float
    dist_sq: float
    subopt: float
    uploads: int
    ms: float


class RunResponse(BaseModel):
    summary: dict
    trace: list[TraceRow]


class SweepKRequest(ConfigPayload):
    step_counts: list[int] | None = None
    num_seeds: int = 5


class SweepCRequest(ConfigPayload):
    cohort_sizes: list[int] | None = None
    num_seeds: int = 5


class SweepResponse(BaseModel):
    rows: list[dict]
    medians: dict


class ContractRequest(ConfigPayload):
    rounds: int = 100
    slack: float = 1e-9


class ContractResponse(BaseModel):
    rounds: int
    failures: int
    worst_ratio: float
    satisfied: bool
    rows: list[dict]
