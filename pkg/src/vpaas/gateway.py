"""HTTP/JSON service: experiment lifecycle, live event stream, annotation
endpoints for the labeling UI, and run-steering controls.

Batch experiments run to completion inside the POST; live experiments run in
a background thread paced against the wall clock so a human can watch and
intervene.  All errors are structured {code, field, message} objects.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, StreamingResponse
from fastapi.staticfiles import StaticFiles

from .datamodel import DatasetSpec, Scene, generate_dataset
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ExperimentEngine,
    ExperimentResult,
    config_from_dict,
)
from .hitl_learning import BudgetExhausted, TaskStateError
from .metrics import compute_report
from .runtime import Policy, RegistryError


def _error(status: int, code: str, message: str, fld: Optional[str] = None) -> JSONResponse:
    return JSONResponse(
        status_code=status,
        content={"errors": [{"code": code, "field": fld, "message": message}]},
    )


def checkpoint_hash(checkpoint: dict) -> str:
    return hashlib.sha256(
        json.dumps(checkpoint, sort_keys=True).encode()
    ).hexdigest()


@dataclass
class ExperimentHandle:
    experiment_id: str
    config: ExperimentConfig
    engine: ExperimentEngine
    mode: str
    status: str = "running"  # running | paused | done | failed
    result: Optional[ExperimentResult] = None
    events: list[dict] = field(default_factory=list)
    thread: Optional[threading.Thread] = None
    error: Optional[str] = None

    def __post_init__(self):
        self.cond = threading.Condition()
        self.resume_event = threading.Event()
        self.resume_event.set()

    def emit(self, event: dict) -> None:
        with self.cond:
            self.events.append(event)
            self.cond.notify_all()

    def on_chunk(self, trace) -> None:
        queue = self.engine.env.learner.queue
        record = trace.to_record()
        record["type"] = "chunk"
        record["labeled_count"] = queue.labeled_count
        record["remaining_budget"] = self.engine.env.learner.state.tau - queue.labeled_count
        self.emit(record)

    def rolling_report(self) -> dict:
        if self.result is not None:
            return self.result.report.to_dict()
        engine = self.engine
        traces = list(engine.traces)
        duration = max((t.timestamps.get("done", 0.0) for t in traces), default=0.0)
        reference = sum(
            c.encoded_bytes for c in engine.chunks[: len(traces)]
        )
        report = compute_report(
            self.config.strategy, traces, engine.scene,
            duration or 1.0, reference, self.config.price_per_frame,
            self.config.match, self.config.frame_skip,
        )
        d = report.to_dict()
        d["partial"] = True
        return d


class GatewayState:
    def __init__(self):
        self._lock = threading.Lock()
        self.datasets: dict[str, tuple[DatasetSpec, list[Scene]]] = {}
        self.experiments: dict[str, ExperimentHandle] = {}
        self.policies: dict[str, Policy] = {}
        self._ids = itertools.count(1)

    def next_id(self, prefix: str) -> str:
        with self._lock:
            return f"{prefix}-{next(self._ids)}"


def create_app(state: Optional[GatewayState] = None,
               frontend_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="vpaas gateway")
    st = state or GatewayState()
    app.state.gateway = st

    # ---- datasets ------------------------------------------------------
    @app.post("/datasets", status_code=201)
    async def create_dataset(request: Request):
        body = await request.json()
        seed = int(body.pop("seed", 0))
        try:
            spec = DatasetSpec(**{k: tuple(v) if isinstance(v, list) else v
                                  for k, v in body.get("spec", {}).items()})
            scenes = generate_dataset(spec, seed)
        except (TypeError, ValueError) as exc:
            return _error(409, "invalid_dataset", str(exc), "spec")
        dataset_id = st.next_id("ds")
        st.datasets[dataset_id] = (spec, scenes)
        return {"dataset_id": dataset_id,
                "num_scenes": len(scenes),
                "num_frames": sum(len(s.frames) for s in scenes)}

    # ---- experiments ---------------------------------------------------
    @app.post("/experiments", status_code=201)
    async def create_experiment(request: Request):
        body = await request.json()
        # live-mode pacing: simulated seconds advanced per wall-clock second
        try:
            pacing = float(body.pop("pacing", 1.0))
        except (TypeError, ValueError):
            return _error(409, "invalid_config", "pacing must be a number", "pacing")
        if pacing <= 0:
            return _error(409, "invalid_config", "pacing must be > 0", "pacing")
        dataset_id = body.pop("dataset_id", None)
        scenes = None
        if dataset_id is not None:
            if dataset_id not in st.datasets:
                return _error(409, "unknown_dataset", f"no dataset {dataset_id}",
                              "dataset_id")
            spec, scenes = st.datasets[dataset_id]
            body.setdefault("dataset", {})
        try:
            cfg = config_from_dict(body)
        except ConfigError as exc:
            return JSONResponse(
                status_code=409,
                content={"errors": [{"code": "invalid_config", **e}
                                    for e in exc.errors]},
            )
        if dataset_id is not None:
            from dataclasses import replace
            cfg = replace(cfg, dataset=spec)
        engine = ExperimentEngine(cfg, scenes)
        handle = ExperimentHandle(
            experiment_id=st.next_id("exp"), config=cfg, engine=engine,
            mode=cfg.mode,
        )
        st.experiments[handle.experiment_id] = handle

        def finish(result: Optional[ExperimentResult], error: Optional[str]):
            with handle.cond:
                handle.result = result
                handle.error = error
                handle.status = "failed" if error else "done"
                handle.cond.notify_all()
            handle.emit({"type": "status", "status": handle.status})

        if cfg.mode == "batch":
            try:
                result = engine.run(on_chunk=handle.on_chunk)
            except Exception as exc:  # surface engine failures to the client
                finish(None, str(exc))
                return _error(500, "engine_error", str(exc))
            finish(result, None)
        else:
            def runner():
                try:
                    result = engine.run(
                        on_chunk=handle.on_chunk,
                        pacing=pacing,
                        wait_if_paused=handle.resume_event.wait,
                    )
                    finish(result, None)
                except Exception as exc:
                    finish(None, str(exc))

            handle.thread = threading.Thread(target=runner, daemon=True)
            handle.thread.start()
        return {"experiment_id": handle.experiment_id, "status": handle.status}

    def get_handle(experiment_id: str) -> Optional[ExperimentHandle]:
        return st.experiments.get(experiment_id)

    @app.get("/experiments/{experiment_id}/metrics")
    def metrics(experiment_id: str):
        handle = get_handle(experiment_id)
        if handle is None:
            return _error(404, "not_found", f"no experiment {experiment_id}")
        if handle.status == "failed":
            return _error(500, "engine_error", handle.error or "failed")
        return handle.rolling_report()

    @app.get("/experiments/{experiment_id}/events")
    def events(experiment_id: str):
        handle = get_handle(experiment_id)
        if handle is None:
            return _error(404, "not_found", f"no experiment {experiment_id}")

        def stream():
            i = 0
            while True:
                with handle.cond:
                    while i >= len(handle.events) and handle.status in ("running", "paused"):
                        handle.cond.wait(timeout=1.0)
                    batch = handle.events[i:]
                    i = len(handle.events)
                    finished = handle.status in ("done", "failed")
                for event in batch:
                    yield json.dumps(event, sort_keys=True) + "\n"
                if finished and i >= len(handle.events):
                    return

        return StreamingResponse(stream(), media_type="application/x-ndjson")

    # ---- annotations ---------------------------------------------------
    @app.get("/experiments/{experiment_id}/annotations/next")
    def next_annotation(experiment_id: str):
        handle = get_handle(experiment_id)
        if handle is None:
            return _error(404, "not_found", f"no experiment {experiment_id}")
        learner = handle.engine.env.learner
        task = learner.queue.claim_next()
        if task is None:
            return Response(status_code=204)
        view = task.view()
        view["task_id"] = f"{experiment_id}.{task.task_id}"
        view["remaining_budget"] = learner.state.tau - learner.queue.labeled_count
        view["num_classes"] = learner.state.num_classes
        # context for the schematic frame rendering: labels already emitted
        # for this frame (never raw ground truth)
        frame_labels = [
            {"bbox": [l.bbox.x, l.bbox.y, l.bbox.w, l.bbox.h],
             "class_id": l.class_id, "source": l.source}
            for t in handle.engine.traces for l in t.labels
            if l.frame_index == task.frame_index
        ]
        view["frame"] = {
            "frame_index": task.frame_index,
            "width": handle.engine.scene.width,
            "height": handle.engine.scene.height,
            "labels": frame_labels,
        }
        return view

    @app.post("/annotations/{task_ref}")
    async def submit_annotation(task_ref: str, request: Request):
        body = await request.json()
        if "class_id" not in body:
            return _error(409, "missing_field", "class_id is required", "class_id")
        experiment_id, _, raw_id = task_ref.partition(".")
        handle = get_handle(experiment_id)
        if handle is None or not raw_id.isdigit():
            return _error(404, "not_found", f"no task {task_ref}")
        learner = handle.engine.env.learner
        if learner.queue.labeled_count >= learner.state.tau:
            return _error(410, "budget_exhausted", "labor budget exhausted")
        try:
            receipt = learner.submit_label(
                int(raw_id), int(body["class_id"]),
                timestamp=handle.engine.sim_now,
            )
        except TaskStateError as exc:
            return _error(409, "task_conflict", str(exc))
        except (BudgetExhausted,) as exc:
            return _error(410, "budget_exhausted", str(exc))
        except ValueError as exc:
            return _error(409, "invalid_label", str(exc), "class_id")
        receipt["task_id"] = task_ref
        receipt["checkpoint_hash"] = checkpoint_hash(learner.state.checkpoint())
        handle.emit({"type": "annotation", **{k: receipt[k] for k in
                     ("task_id", "class_id", "labeled_count",
                      "remaining_budget", "finalized")}})
        return receipt

    # ---- control -------------------------------------------------------
    @app.post("/experiments/{experiment_id}/control")
    async def control(experiment_id: str, request: Request):
        handle = get_handle(experiment_id)
        if handle is None:
            return _error(404, "not_found", f"no experiment {experiment_id}")
        body = await request.json()
        action = body.get("action")
        if action == "pause":
            handle.resume_event.clear()
            handle.status = "paused" if handle.status == "running" else handle.status
        elif action == "resume":
            handle.resume_event.set()
            handle.status = "running" if handle.status == "paused" else handle.status
        elif action == "kill_cloud":
            handle.engine.kill_cloud()
        elif action == "restore_cloud":
            handle.engine.restore_cloud()
        elif action == "set_policy":
            try:
                policy = Policy(policy_id=body["policy_id"],
                                rules=dict(body["rules"]))
                if Policy.DEFAULT_TRIGGER not in policy.rules:
                    raise RegistryError("policy must define a default action")
            except (KeyError, TypeError, RegistryError) as exc:
                return _error(409, "invalid_policy", str(exc), "rules")
            st.policies[policy.policy_id] = policy
        else:
            return _error(409, "unknown_action", f"unknown action {action!r}", "action")
        handle.emit({"type": "control", "action": action})
        return {"experiment_id": experiment_id, "status": handle.status,
                "action": action}

    @app.get("/experiments/{experiment_id}")
    def experiment_status(experiment_id: str):
        handle = get_handle(experiment_id)
        if handle is None:
            return _error(404, "not_found", f"no experiment {experiment_id}")
        queue = handle.engine.env.learner.queue
        return {
            "experiment_id": experiment_id,
            "status": handle.status,
            "mode": handle.mode,
            "strategy": handle.config.strategy,
            "chunks_done": len(handle.engine.traces),
            "chunks_total": len(handle.engine.chunks),
            "labeled_count": queue.labeled_count,
            "tau": handle.engine.env.learner.state.tau,
            "cloud_forced_down": handle.engine.env.cloud_forced_down,
        }

    frontend = frontend_dir or os.environ.get("VPAAS_FRONTEND_DIR")
    if frontend and os.path.isdir(frontend):
        app.mount("/", StaticFiles(directory=frontend, html=True), name="ui")

    return app


def serve(host: str = "127.0.0.1", port: Optional[int] = None,
          frontend_dir: Optional[str] = None) -> None:
    import uvicorn

    port = port or int(os.environ.get("VPAAS_PORT", "8400"))
    uvicorn.run(create_app(frontend_dir=frontend_dir), host=host, port=port)
