"""HTTP service: browse rendered patterns, accept labels, control one
background training job, classify and report metrics.

Every endpoint is a thin adapter over store/pipeline operations; the
console UI holds no state of its own.
"""

from __future__ import annotations

import threading
import traceback
from dataclasses import dataclass, field

from fastapi import FastAPI, HTTPException, Query, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .detector import DetectorConfig
from .pipeline import (
    TrainConfig,
    build_examples,
    evaluate_selection,
    select_with_checkpoint,
    train,
    validate_family,
)
from .preprocess import RenderSpec, rasterize, to_png_bytes
from .store import (
    LABEL_SINGLE,
    LabelRecord,
    Store,
    StoreError,
    UnknownPatternError,
)


class LabelBody(BaseModel):
    id: str
    label: str
    box: dict | None = None
    author: str = "human"


class TrainBody(BaseModel):
    iterations: int = 2500
    batch_size: int = 16
    checkpoint_every: int = 100
    input_size: int = 128
    colormap: str = "jet"
    scale: str = "linear"
    seed: int = 0
    threshold: float = 0.24
    labels: str = Field(default="auto", pattern="^(auto|truth|human)$")


class ClassifyBody(BaseModel):
    checkpoint: str | None = None   # "family@iteration" shorthand
    family: str | None = None
    iteration: int | None = None
    threshold: float = 0.24

    def resolve(self) -> tuple[str, int]:
        if self.checkpoint:
            family, _, iteration = self.checkpoint.rpartition("@")
            if not family or not iteration.isdigit():
                raise ValueError(
                    f"checkpoint must look like 'family@iteration', got "
                    f"{self.checkpoint!r}"
                )
            return family, int(iteration)
        if self.family is None or self.iteration is None:
            raise ValueError("give either checkpoint or family + iteration")
        return self.family, self.iteration


@dataclass
class TrainJobState:
    state: str = "idle"            # idle | running | finished | failed
    job_id: str | None = None
    family: str | None = None
    iteration: int = 0
    latest_loss: float | None = None
    latest_f1: float | None = None
    error: str | None = None
    lock: threading.Lock = field(default_factory=threading.Lock)

    def snapshot(self):
        with self.lock:
            return {
                "state": self.state,
                "job_id": self.job_id,
                "family": self.family,
                "iteration": self.iteration,
                "latest_loss": self.latest_loss,
                "latest_f1": self.latest_f1,
                "error": self.error,
            }


def _training_ids(store: Store, source: str):
    """Pick the training set: human labels when present (the live loop),
    otherwise simulated ground truth restricted to the train split."""
    human = {
        pid: rec
        for (pid, author), rec in store.load_labels().items()
        if author == "human"
    }
    if source == "human" or (source == "auto" and human):
        labels = {
            pid: (rec.label, rec.box) for pid, rec in human.items()
        }
        return list(labels), labels
    tagged = [pid for pid, e in store.entries.items()
              if e.label is not None and e.split == "train"]
    if not tagged:
        tagged = [pid for pid, e in store.entries.items() if e.label is not None]
    return tagged, None


def _validation_ids(store: Store):
    ids = [pid for pid, e in store.entries.items()
           if e.label is not None and e.split == "validation"]
    return ids


def create_app(store_root, author_default="human", ui_dir=None) -> FastAPI:
    app = FastAPI(title="spihits", version="0.1.0")
    app.state.store_root = store_root
    job = TrainJobState()

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    def store() -> Store:
        return Store(store_root)

    @app.exception_handler(StoreError)
    async def _store_error(request, exc):
        code = 404 if isinstance(exc, UnknownPatternError) else 400
        return JSONResponse(status_code=code,
                            content={"error": type(exc).__name__,
                                     "detail": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(request, exc):
        return JSONResponse(status_code=400,
                            content={"error": "ValueError", "detail": str(exc)})

    # -- patterns ---------------------------------------------------------

    @app.get("/api/patterns")
    def list_patterns(offset: int = Query(0, ge=0),
                      limit: int = Query(50, ge=1, le=500)):
        st = store()
        ids = st.ids
        page = ids[offset:offset + limit]
        effective = st.load_labels()
        human = {}
        predictions = {}
        for (pid, author), rec in effective.items():
            if author == "human":
                human[pid] = rec
            else:
                prev = predictions.get(pid)
                if prev is None or rec.timestamp >= prev.timestamp:
                    predictions[pid] = rec
        out = []
        for pid in page:
            entry = st.entries[pid]
            rec = human.get(pid)
            pred = predictions.get(pid)
            out.append({
                "id": pid,
                "split": entry.split,
                "truth": entry.label,
                "label": None if rec is None else {
                    "label": rec.label,
                    "box": None if rec.box is None else rec.box.__dict__,
                    "timestamp": rec.timestamp,
                },
                "prediction": None if pred is None else {
                    "label": pred.label,
                    "author": pred.author,
                    "timestamp": pred.timestamp,
                },
            })
        return {"total": len(ids), "offset": offset, "patterns": out}

    @app.get("/api/patterns/{pattern_id}/image.png")
    def pattern_image(pattern_id: str, colormap: str = "jet",
                      scale: str = "linear"):
        st = store()
        spec = RenderSpec(colormap=colormap, scale=scale)  # 400 on bad values
        pattern = st.read_pattern(pattern_id)              # 404 on unknown id
        png = to_png_bytes(rasterize(pattern, spec))
        return Response(content=png, media_type="image/png")

    @app.get("/api/patterns/{pattern_id}/detections")
    def pattern_detections(pattern_id: str, family: str, iteration: int,
                           threshold: float = 0.24):
        from .detector import decide, forward_detect, load_checkpoint
        from .preprocess import render_network_input

        st = store()
        ckpt = st.checkpoint_path(family, iteration)
        if not ckpt.exists():
            raise HTTPException(
                status_code=404,
                detail=f"no checkpoint {iteration} for family {family!r}",
            )
        try:
            manifest = st.read_family_manifest(family)
            render = RenderSpec(**manifest["config"]["render"])
        except StoreError:
            render = RenderSpec()
        model = load_checkpoint(ckpt)
        pattern = st.read_pattern(pattern_id)
        image = render_network_input(pattern, render,
                                     model.config.input_size)
        hit, detections = decide(forward_detect(model, image), threshold)
        return {
            "id": pattern_id,
            "is_single_hit": hit,
            "threshold": threshold,
            "detections": [d.__dict__ for d in detections],
        }

    # -- labels -----------------------------------------------------------

    @app.post("/api/labels", status_code=201)
    def post_label(body: LabelBody):
        from .detector import BoxAnnotation

        st = store()
        box = None if body.box is None else BoxAnnotation(**body.box)
        record = LabelRecord(pattern_id=body.id, label=body.label,
                             author=body.author or author_default, box=box)
        st.append_label(record)
        return {"ok": True, "record": record.to_json()}

    # -- training ---------------------------------------------------------

    def run_job(config: TrainConfig, body: TrainBody):
        st = store()
        try:
            ids, labels = _training_ids(st, body.labels)
            if not ids:
                raise ValueError("no labeled patterns to train on")
            examples = build_examples(st, ids, config.render,
                                      config.detector.input_size,
                                      labels=labels)
            val_ids = _validation_ids(st)
            val_examples = build_examples(st, val_ids, config.render,
                                          config.detector.input_size)
            f1_rows = []

            def on_progress(iteration, loss):
                with job.lock:
                    job.iteration = iteration
                    job.latest_loss = loss
                # validate each checkpoint as it appears, keeping the F1
                # curve live for the dashboard
                if val_examples and iteration % config.checkpoint_every == 0:
                    results = validate_family(
                        st, config.family, val_examples, body.threshold,
                        iterations=[iteration],
                    )
                    f1 = results[0][1].f1
                    f1_rows.append((iteration, f1 if f1 is not None else 0.0))
                    st.write_curve_csv(config.family, "f1", f1_rows,
                                       header=("iteration", "f1"))
                    with job.lock:
                        job.latest_f1 = f1

            train(config, examples, st, on_progress=on_progress)
            with job.lock:
                job.state = "finished"
        except BaseException as exc:  # report, don't kill the server
            traceback.print_exc()
            with job.lock:
                job.state = "failed"
                job.error = f"{type(exc).__name__}: {exc}"

    @app.post("/api/train", status_code=202)
    def start_train(body: TrainBody):
        with job.lock:
            if job.state == "running":
                raise HTTPException(
                    status_code=409,
                    detail="a training job is already running",
                )
            stages = 5
            detector = DetectorConfig(
                input_size=body.input_size, stages=stages,
                channels=DetectorConfig.desk_scale().channels
                if body.input_size == 128 else None,
                decision_threshold=body.threshold,
            )
            config = TrainConfig(
                iterations=body.iterations,
                batch_size=body.batch_size,
                checkpoint_every=body.checkpoint_every,
                detector=detector,
                render=RenderSpec(colormap=body.colormap, scale=body.scale),
                seed=body.seed,
            )
            job.state = "running"
            job.job_id = f"job-{config.family}-{config.seed}"
            job.family = config.family
            job.iteration = 0
            job.latest_loss = None
            job.latest_f1 = None
            job.error = None
        thread = threading.Thread(target=run_job, args=(config, body),
                                  daemon=True)
        thread.start()
        return {"job": job.job_id, "family": config.family}

    @app.get("/api/train/status")
    def train_status():
        return job.snapshot()

    @app.get("/api/train/curves")
    def train_curves(family: str | None = None):
        st = store()
        fam = family or job.snapshot()["family"]
        if fam is None:
            families = st.list_families()
            if not families:
                raise HTTPException(status_code=404, detail="no trained family")
            fam = families[0]
        curves = {"family": fam}
        for name in ("loss", "f1"):
            try:
                curves[name] = st.read_curve_csv(fam, name)
            except StoreError:
                curves[name] = ""
        return curves

    # -- classification and metrics ---------------------------------------

    @app.post("/api/classify")
    def classify(body: ClassifyBody):
        st = store()
        ids = st.ids
        if not ids:
            raise HTTPException(status_code=400, detail="store has no patterns")
        family, iteration = body.resolve()
        try:
            manifest = st.read_family_manifest(family)
            render = RenderSpec(**manifest["config"]["render"])
            input_size = manifest["config"]["detector"]["input_size"]
        except StoreError:
            render = RenderSpec()
            input_size = DetectorConfig.desk_scale().input_size
        examples = build_examples(st, ids, render, input_size, labels={})
        selection = select_with_checkpoint(st, family, iteration,
                                           examples, body.threshold)
        author = f"model:{family}:{iteration}"
        for pid in ids:
            st.append_label(LabelRecord(
                pattern_id=pid,
                label=LABEL_SINGLE if pid in selection.ids else "non_single",
                author=author,
            ))
        name = f"{family}-i{iteration}-t{body.threshold:g}"
        st.write_selection(name, selection)
        return {"selection": name, "count": len(selection.ids)}

    @app.get("/api/selections/{name}")
    def get_selection(name: str):
        sel = store().read_selection(name)
        return {"method": sel.method, "threshold": sel.threshold,
                "ids": sorted(sel.ids)}

    @app.get("/api/selections")
    def list_selections():
        return {"selections": store().list_selections()}

    @app.get("/api/metrics")
    def get_metrics(selection: str, reference: str):
        st = store()
        sel = st.read_selection(selection)
        ref = st.read_selection(reference)
        report = evaluate_selection(sel, ref, set(st.ids))
        return {"machine": report.to_machine_dict(),
                "human": report.to_human_dict()}

    return app
