"""FastAPI application exposing the experiment pipelines.

Every domain failure maps to a 400 with the error message as detail; the
endpoints are thin adapters from request bodies to the pipeline functions.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import CogdiagError
from ..experiments import (DatasetSpec, SplitSpec, run_export, run_rq1,
                           run_rq2, run_rq3, run_train)
from ..models import ModelConfig
from ..synth import synthesize_dataset
from ..training import TrainConfig
from . import schemas


def _dataset(spec: schemas.DatasetSpecModel) -> DatasetSpec:
    return DatasetSpec(**spec.model_dump())


def _split(spec: schemas.SplitSpecModel) -> SplitSpec:
    return SplitSpec(**spec.model_dump())


def _arch(spec: schemas.ArchitectureModel) -> ModelConfig:
    return ModelConfig(**spec.model_dump())


def _training(spec: schemas.TrainSpecModel) -> TrainConfig:
    return TrainConfig(**spec.model_dump())


def create_app() -> FastAPI:
    app = FastAPI(title="cogdiag", version=__version__)

    @app.exception_handler(CogdiagError)
    async def domain_error(_request: Request, exc: CogdiagError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/synth", response_model=schemas.SynthResponse)
    def synth(req: schemas.SynthRequest):
        return synthesize_dataset(
            req.out_dir, n_learners=req.n_learners, n_questions=req.n_questions,
            n_concepts=req.n_concepts, seed=req.seed,
            correct_rate=req.correct_rate, logs_per_learner=req.logs_per_learner,
            duplicate_frac=req.duplicate_frac)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train_endpoint(req: schemas.TrainRequest):
        return run_train(_dataset(req.dataset), _split(req.split), req.model,
                         req.out_dir, model_config=_arch(req.architecture),
                         train_config=_training(req.training),
                         from_checkpoint=req.from_checkpoint)

    @app.post("/rq1", response_model=schemas.Rq1Response)
    def rq1(req: schemas.Rq1Request):
        return run_rq1(_dataset(req.dataset), req.out_dir,
                       models=tuple(req.models), seeds=tuple(req.seeds),
                       modes=tuple(req.modes),
                       model_config=_arch(req.architecture),
                       train_config=_training(req.training))

    @app.post("/rq2", response_model=schemas.Rq2Response)
    def rq2(req: schemas.Rq2Request):
        return run_rq2(_dataset(req.dataset), _split(req.split), req.out_dir,
                       models=tuple(req.models), seeds=tuple(req.seeds),
                       model_config=_arch(req.architecture),
                       train_config=_training(req.training),
                       from_checkpoint=req.from_checkpoint)

    @app.post("/rq3", response_model=schemas.Rq3Response)
    def rq3(req: schemas.Rq3Request):
        return run_rq3(_dataset(req.dataset), _split(req.split), req.out_dir,
                       models=tuple(req.models), seeds=tuple(req.seeds),
                       model_config=_arch(req.architecture),
                       train_config=_training(req.training),
                       from_checkpoint=req.from_checkpoint)

    @app.post("/export", response_model=schemas.ExportResponse)
    def export(req: schemas.ExportRequest):
        return run_export(req.checkpoint, req.out_dir)

    return app


app = create_app()
