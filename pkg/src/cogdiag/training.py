"""Optimizer loop, loss evaluation, and checkpoints.

One trainer serves every model kind: shuffled mini-batches, Adam with
non-negative projection on constrained tensors, early stopping on
validation loss with best-parameter restore. Wall-clock timings ride along
in the report but stay out of the determinism contract.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .errors import (CheckpointError, ConfigError, DataFormatError,
                     DataPipelineError, NonFiniteError, TrainingDivergedError)
from .fileio import decode_array, encode_array
from .models import CDModel, ModelConfig, build_model

CHECKPOINT_FORMAT = "cogdiag-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    lr: float = 0.002
    batch_size: int = 256
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        if self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not self.lr > 0.0:
            raise ConfigError(f"lr must be positive, got {self.lr}")

    def to_dict(self) -> dict:
        return {"lr": self.lr, "batch_size": self.batch_size,
                "max_epochs": self.max_epochs, "patience": self.patience,
                "seed": self.seed}


@dataclass
class TrainReport:
    fit_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    monitored: str = "validation"
    epoch_seconds: list = field(default_factory=list)

    def deterministic_dict(self) -> dict:
        """Everything reproducible under a fixed seed; timings excluded."""
        return {"fit_loss": self.fit_loss, "val_loss": self.val_loss,
                "val_acc": self.val_acc, "best_epoch": self.best_epoch,
                "epochs_run": self.epochs_run, "monitored": self.monitored}

    def to_dict(self) -> dict:
        out = self.deterministic_dict()
        out["epoch_seconds"] = self.epoch_seconds
        return out


def _log_arrays(logs):
    lids = np.array([r.learner_id for r in logs], dtype=np.int64)
    qids = np.array([r.question_id for r in logs], dtype=np.int64)
    scores = np.array([float(r.score) for r in logs], dtype=np.float64)
    return lids, qids, scores


def evaluate_loss(model: CDModel, logs) -> float:
    """Mean clamped binary cross entropy of the model over the logs."""
    if not logs:
        raise DataPipelineError("evaluate_loss: no logs to evaluate")
    lids, qids, scores = _log_arrays(logs)
    preds = np.clip(model.predict(lids, qids), dc.BCE_CLAMP, 1.0 - dc.BCE_CLAMP)
    return float(-np.mean(scores * np.log(preds)
                          + (1.0 - scores) * np.log1p(-preds)))


def train(model: CDModel, split, cfg: TrainConfig) -> TrainReport:
    if not split.fit:
        raise DataPipelineError("train: empty fit subset")
    model.bind(split.fit)
    lids, qids, scores = _log_arrays(split.fit)
    n = lids.size
    has_val = bool(split.validation)
    if has_val:
        vlids, vqids, vscores = _log_arrays(split.validation)

    rng = np.random.default_rng(cfg.seed)
    report = TrainReport(monitored="validation" if has_val else "fit")
    best_metric = math.inf
    best_values = None
    stale = 0

    for epoch in range(cfg.max_epochs):
        t0 = time.perf_counter()
        perm = rng.permutation(n)
        weighted = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            for p in model.params:
                p.zero_grad()
            loss = model.training_loss_backward(lids[idx], qids[idx], scores[idx])
            here = dict(epoch=epoch + 1, batch=start // cfg.batch_size + 1)
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss {loss!r} for {model.name}", **here)
            try:
                for p in model.params:
                    dc.adam_step(p, p.grad, lr=cfg.lr)
            except NonFiniteError as exc:
                raise TrainingDivergedError(
                    f"{exc} while training {model.name}", **here) from exc
            weighted += loss * idx.size
        report.fit_loss.append(weighted / n)

        if has_val:
            vpred = model.predict(vlids, vqids)
            vclip = np.clip(vpred, dc.BCE_CLAMP, 1.0 - dc.BCE_CLAMP)
            vloss = float(-np.mean(vscores * np.log(vclip)
                                   + (1.0 - vscores) * np.log1p(-vclip)))
            report.val_loss.append(vloss)
            report.val_acc.append(float(np.mean((vpred >= 0.5) == (vscores == 1.0))))
            monitor = vloss
        else:
            monitor = report.fit_loss[-1]

        report.epoch_seconds.append(time.perf_counter() - t0)
        if monitor < best_metric:
            best_metric = monitor
            report.best_epoch = epoch
            best_values = [p.value.copy() for p in model.params]
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    report.epochs_run = len(report.fit_loss)
    if best_values is not None:
        for p, v in zip(model.params, best_values):
            p.value[:] = v
    return report


# ------------------------------------------------------------- checkpoints


def checkpoint_save(model: CDModel, path, extra: dict | None = None) -> None:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": model.name,
        "dims": {"n_learners": model.n_learners,
                 "n_questions": model.n_questions,
                 "n_concepts": model.n_concepts},
        "config": model.config.to_dict(),
        "q_matrix": encode_array(model.q_float.astype(np.int8)),
        "params": [{"name": p.name, "constrained": bool(p.constrained),
                    "value": encode_array(p.value), "m": encode_array(p.m),
                    "v": encode_array(p.v), "steps": int(p.steps)}
                   for p in model.params],
        "state": {k: encode_array(v) for k, v in model.state_arrays().items()},
        "extra": extra or {},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True)
        fh.write("\n")


def checkpoint_load(path, expect_kind: str | None = None):
    """Rebuild a model from a checkpoint; returns (model, extra metadata)."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {payload.get('version')!r} unsupported "
            f"(expected {CHECKPOINT_VERSION})")
    kind = payload.get("kind")
    if expect_kind is not None and kind != expect_kind:
        raise CheckpointError(f"checkpoint holds {kind!r}, expected {expect_kind!r}")
    try:
        dims = payload["dims"]
        q = decode_array(payload["q_matrix"])
        config = ModelConfig(**payload["config"])
        model = build_model(kind, dims["n_learners"], dims["n_questions"],
                            dims["n_concepts"], q, config=config, seed=0)
        saved = {entry["name"]: entry for entry in payload["params"]}
        if set(saved) != {p.name for p in model.params}:
            raise CheckpointError(f"parameter set mismatch in {path}")
        for p in model.params:
            entry = saved[p.name]
            value = decode_array(entry["value"])
            if value.shape != p.value.shape:
                raise CheckpointError(
                    f"parameter {p.name}: shape {value.shape} vs {p.value.shape}")
            p.value[:] = value
            p.m[:] = decode_array(entry["m"])
            p.v[:] = decode_array(entry["v"])
            p.steps = int(entry["steps"])
            p.constrained = bool(entry["constrained"])
        model.load_state_arrays(
            {k: decode_array(v) for k, v in payload.get("state", {}).items()})
    except CheckpointError:
        raise
    except (KeyError, TypeError, ValueError, DataFormatError) as exc:
        raise CheckpointError(f"malformed checkpoint {path}: {exc}") from exc
    return model, payload.get("extra", {})
