"""FastAPI application: run experiments and drive live monitors."""

from __future__ import annotations

import threading
import uuid
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException, Response

from ..approx import ApproxEngine
from ..exact import ExactEngine, RangeSearcher
from ..geometry import ObjectSet
from ..harness.data import synthetic_objects
from ..harness.experiment import ExperimentReport, run_experiment
from ..irf import build_index
from ..partition import OutOfBounds, PartitionConfig
from ..window import RangeQuery
from .schemas import EngineState, ExperimentRequest, Health, MonitorCreate, MonitorOut, QueryIn


@dataclass
class _Monitor:
    id: str
    objects: ObjectSet
    window: int
    engines: dict
    lock: threading.Lock = field(default_factory=threading.Lock)
    shifts: int = 0
    last: dict = field(default_factory=dict)

    def view(self) -> MonitorOut:
        states = {}
        for name, eng in self.engines.items():
            prev = self.last.get(name, {})
            states[name] = EngineState(result=[(int(o), float(p)) for o, p in eng.result], **prev)
        fill = len(next(iter(self.engines.values())).window)
        return MonitorOut(id=self.id, n=self.objects.n, window=self.window, fill=fill,
                          shifts=self.shifts, engines=states)


def create_app() -> FastAPI:
    app = FastAPI(title="srm", summary="Top-m spatial rank popularity over streaming range queries")
    monitors: dict[str, _Monitor] = {}
    registry = threading.Lock()

    def get(mid: str) -> _Monitor:
        with registry:
            mon = monitors.get(mid)
        if mon is None:
            raise HTTPException(404, f"no monitor {mid}")
        return mon

    @app.get("/health", response_model=Health)
    def health():
        return Health(monitors=len(monitors))

    @app.post("/experiments", response_model=ExperimentReport)
    def experiment(req: ExperimentRequest):
        try:
            return run_experiment(req.config, engines=req.engines)
        except (ValueError, OSError) as exc:
            raise HTTPException(422, str(exc)) from None

    @app.post("/monitors", response_model=MonitorOut, status_code=201)
    def create(req: MonitorCreate):
        if req.points is not None:
            objects = ObjectSet(np.asarray(req.points, dtype=np.float64))
        else:
            objects = synthetic_objects(req.synthetic, req.distribution, req.seed)
        searcher = RangeSearcher(objects)
        engines = {}
        if "exact" in req.engines:
            engines["exact"] = ExactEngine(objects, req.window, req.m, searcher)
        if "approx" in req.engines:
            index = build_index(objects, PartitionConfig(epsilon=req.epsilon, block_size=req.block_size))
            engines["approx"] = ApproxEngine(index, req.window, req.m, searcher)
        mon = _Monitor(uuid.uuid4().hex, objects, req.window, engines)
        with registry:
            monitors[mon.id] = mon
        return mon.view()

    @app.get("/monitors/{mid}", response_model=MonitorOut)
    def show(mid: str):
        mon = get(mid)
        with mon.lock:
            return mon.view()

    @app.post("/monitors/{mid}/queries", response_model=MonitorOut)
    def push(mid: str, q: QueryIn):
        mon = get(mid)
        with mon.lock:
            query = RangeQuery.at(q.x, q.y, q.radius, mon.shifts)
            if "approx" in mon.engines:
                try:
                    mon.engines["approx"].index.leaf_for(q.x, q.y)
                except OutOfBounds as exc:
                    raise HTTPException(422, str(exc)) from None
            for name, eng in mon.engines.items():
                st = eng.step(query)
                if name == "exact":
                    mon.last[name] = {"opq": st.opq}
                else:
                    mon.last[name] = {"opq": st.stats.opq, "tier": st.stats.tier.value}
            mon.shifts += 1
            return mon.view()

    @app.delete("/monitors/{mid}", status_code=204)
    def drop(mid: str):
        with registry:
            if monitors.pop(mid, None) is None:
                raise HTTPException(404, f"no monitor {mid}")
        return Response(status_code=204)

    return app
