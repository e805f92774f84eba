"""Request/response bodies for the service endpoints.

Field defaults mirror the pipeline defaults exactly, so a minimal request
behaves like the corresponding Python call with no overrides.
"""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field

_ALLOW_MODEL_FIELD = ConfigDict(protected_namespaces=())


class DatasetSpecModel(BaseModel):
    logs_path: str
    q_matrix_path: str
    min_logs: int = 0
    first_attempt_only: bool = False


class SplitSpecModel(BaseModel):
    test_ratio: float = 0.2
    val_ratio: float = 0.1
    seed: int = 0


class ArchitectureModel(BaseModel):
    hidden_learner: int = 256
    hidden_question1: int = 256
    hidden_question2: int = 128
    agg_dim: int = 64
    pred_hidden1: int = 128
    pred_hidden2: int = 64
    pred_monotonic: bool = False
    ncdm_hidden1: int = 256
    ncdm_hidden2: int = 128
    mirt_dim: int = 16
    init_constant: float = 0.0


class TrainSpecModel(BaseModel):
    lr: float = 0.002
    batch_size: int = 256
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0


class TrainRequest(BaseModel):
    model_config = _ALLOW_MODEL_FIELD

    dataset: DatasetSpecModel
    split: SplitSpecModel = Field(default_factory=SplitSpecModel)
    model: str = "idcdm"
    architecture: ArchitectureModel = Field(default_factory=ArchitectureModel)
    training: TrainSpecModel = Field(default_factory=TrainSpecModel)
    out_dir: str
    from_checkpoint: str | None = None


class TrainResponse(BaseModel):
    model_config = _ALLOW_MODEL_FIELD

    checkpoint: str
    report: str
    epochs: str
    timing: str
    model: str
    epochs_run: int
    best_epoch: int
    fit_loss: float | None
    test_loss: float | None


class Rq1Request(BaseModel):
    dataset: DatasetSpecModel
    out_dir: str
    models: list[str] = Field(
        default_factory=lambda: ["idcdm", "idcdm-nenc", "ncdm", "ncdm-const"])
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    modes: list[str] = Field(default_factory=lambda: ["learner", "question"])
    architecture: ArchitectureModel = Field(default_factory=ArchitectureModel)
    training: TrainSpecModel = Field(default_factory=TrainSpecModel)


class Rq1Response(BaseModel):
    ids_csv: str
    runs_csv: str
    summary: str
    histograms: dict[str, str]
    results: dict


class Rq2Request(BaseModel):
    dataset: DatasetSpecModel
    split: SplitSpecModel = Field(default_factory=SplitSpecModel)
    out_dir: str
    models: list[str] = Field(
        default_factory=lambda: ["idcdm", "idcdm-nmono", "ncdm"])
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    architecture: ArchitectureModel = Field(default_factory=ArchitectureModel)
    training: TrainSpecModel = Field(default_factory=TrainSpecModel)
    from_checkpoint: str | None = None


class Rq2Response(BaseModel):
    doc_csv: str
    runs_csv: str
    summary: str
    results: dict


class Rq3Request(BaseModel):
    dataset: DatasetSpecModel
    split: SplitSpecModel = Field(default_factory=SplitSpecModel)
    out_dir: str
    models: list[str] = Field(
        default_factory=lambda: ["idcdm", "ncdm", "irt", "mirt", "dina"])
    seeds: list[int] = Field(default_factory=lambda: [0])
    architecture: ArchitectureModel = Field(default_factory=ArchitectureModel)
    training: TrainSpecModel = Field(default_factory=TrainSpecModel)
    from_checkpoint: str | None = None


class Rq3Response(BaseModel):
    prediction_csv: str
    runs_csv: str
    summary: str
    results: dict


class ExportRequest(BaseModel):
    checkpoint: str
    out_dir: str


class ExportResponse(BaseModel):
    model_config = _ALLOW_MODEL_FIELD

    learner_traits: str
    question_params: str
    model: str
    learners: int
    trait_width: int
    questions: int
    param_width: int


class SynthRequest(BaseModel):
    out_dir: str
    n_learners: int = 4209
    n_questions: int = 20
    n_concepts: int = 11
    seed: int = 0
    correct_rate: float = 0.424
    logs_per_learner: int | None = None
    duplicate_frac: float = 0.0


class SynthResponse(BaseModel):
    logs_path: str
    q_matrix_path: str
    n_learners: int
    n_questions: int
    n_concepts: int
    n_logs: int
    empirical_correct_rate: float
    seed: int
