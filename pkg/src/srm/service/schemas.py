"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator

from ..harness.experiment import ExperimentReport, WorkloadConfig

Engine = Literal["exact", "approx"]


class ExperimentRequest(BaseModel):
    config: WorkloadConfig
    engines: list[Engine] = ["exact", "approx"]


class MonitorCreate(BaseModel):
    """A live monitor over either inline points or a synthetic object set."""

    model_config = ConfigDict(extra="forbid")

    points: list[tuple[float, float]] | None = None
    synthetic: PositiveInt | None = None
    distribution: Literal["uniform", "city"] = "city"
    seed: int = Field(0, ge=0)
    window: PositiveInt = 400
    m: PositiveInt = 10
    epsilon: float = Field(3.0, gt=0)
    block_size: PositiveInt = 128
    engines: list[Engine] = Field(default=["exact", "approx"], min_length=1)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.points is None) == (self.synthetic is None):
            raise ValueError("give exactly one of points or synthetic")
        if self.points is not None and not self.points:
            raise ValueError("points must not be empty")
        return self


class QueryIn(BaseModel):
    x: float
    y: float
    radius: float = Field(gt=0, allow_inf_nan=False)


class EngineState(BaseModel):
    result: list[tuple[int, float]]
    opq: int | None = None
    tier: str | None = None


class MonitorOut(BaseModel):
    id: str
    n: int
    window: int
    fill: int
    shifts: int
    engines: dict[str, EngineState]


class Health(BaseModel):
    status: Literal["ok"] = "ok"
    monitors: int


__all__ = ["ExperimentRequest", "ExperimentReport", "MonitorCreate", "QueryIn", "EngineState",
           "MonitorOut", "Health"]
