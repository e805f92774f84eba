"""Experiment pipelines shared by the service and the CLI.

Each run_* function is a pure function of its inputs plus seeds: it loads
data, trains what it needs, writes artifacts under out_dir, and returns a
JSON-safe summary. Metric files contain no wall-clock values, so reruns
with equal inputs reproduce them byte for byte; timings go to a separate
file.
"""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, replace

import numpy as np

from .dataset import (DataSplit, augment_shadows, build_dataset,
                      build_response_vectors, group_identical, split_dataset,
                      write_remap_csv)
from .errors import CheckpointError, DataFormatError, MetricError
from .fileio import write_csv, write_json
from .metrics import (classification_metrics, distance_histogram, doc, ids,
                      reo, write_histogram_csv)
from .models import ModelConfig, build_model
from .training import (TrainConfig, checkpoint_load, checkpoint_save,
                       evaluate_loss, train)

DEFAULT_RQ1_MODELS = ("idcdm", "idcdm-nenc", "ncdm", "ncdm-const")
DEFAULT_RQ2_MODELS = ("idcdm", "idcdm-nmono", "ncdm")
DEFAULT_RQ3_MODELS = ("idcdm", "ncdm", "irt", "mirt", "dina")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)

# models whose learner traits line up with knowledge concepts; the
# concordance metrics are undefined for scalar or free-dimensional traits
CONCEPT_TRAIT_MODELS = frozenset(
    {"idcdm", "idcdm-nmono", "idcdm-nenc", "ncdm", "ncdm-const", "dina"})


@dataclass
class DatasetSpec:
    logs_path: str
    q_matrix_path: str
    min_logs: int = 0
    first_attempt_only: bool = False


@dataclass
class SplitSpec:
    test_ratio: float = 0.2
    val_ratio: float = 0.1
    seed: int = 0


def load_dataset(spec: DatasetSpec):
    for path in (spec.logs_path, spec.q_matrix_path):
        if not os.path.isfile(path):
            raise DataFormatError(f"file not found: {path}")
    return build_dataset(spec.logs_path, spec.q_matrix_path,
                         min_logs=spec.min_logs,
                         first_attempt_only=spec.first_attempt_only)


def _log_arrays(logs):
    lids = np.array([r.learner_id for r in logs], dtype=np.int64)
    qids = np.array([r.question_id for r in logs], dtype=np.int64)
    scores = np.array([float(r.score) for r in logs], dtype=np.float64)
    return lids, qids, scores


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


def _train_one(name, dataset, split, model_config, train_config):
    model = build_model(name, dataset.n_learners, dataset.n_questions,
                        dataset.n_concepts, dataset.q_matrix.entries,
                        config=model_config, seed=train_config.seed)
    report = train(model, split, train_config)
    return model, report


# ------------------------------------------------------------------ train


def run_train(dataset_spec: DatasetSpec, split_spec: SplitSpec, model_name: str,
              out_dir, model_config: ModelConfig | None = None,
              train_config: TrainConfig | None = None,
              from_checkpoint=None) -> dict:
    train_config = train_config or TrainConfig()
    ds = load_dataset(dataset_spec)
    split = split_dataset(ds.logs, split_spec.test_ratio, split_spec.val_ratio,
                          split_spec.seed)
    if from_checkpoint is not None:
        model, _ = checkpoint_load(from_checkpoint, expect_kind=model_name)
        if (model.n_learners, model.n_questions) != (ds.n_learners, ds.n_questions):
            raise CheckpointError(
                f"checkpoint dims ({model.n_learners}, {model.n_questions}) do not "
                f"match dataset ({ds.n_learners}, {ds.n_questions})")
        report = train(model, split, train_config)
    else:
        model, report = _train_one(model_name, ds, split, model_config, train_config)

    os.makedirs(out_dir, exist_ok=True)
    ckpt_path = os.path.join(out_dir, "checkpoint.json")
    checkpoint_save(model, ckpt_path, extra={
        "model": model_name,
        "dataset": asdict(dataset_spec),
        "split": asdict(split_spec),
        "train": train_config.to_dict(),
        "learner_external_ids": [int(v) for v in ds.learner_index],
        "question_external_ids": [int(v) for v in ds.question_index],
    })

    report_path = os.path.join(out_dir, "report.json")
    payload = report.deterministic_dict()
    payload["model"] = model_name
    payload["test_loss"] = (evaluate_loss(model, split.test)
                            if split.test else None)
    write_json(report_path, payload)

    epochs_path = os.path.join(out_dir, "epochs.csv")
    if report.val_loss:
        write_csv(epochs_path, ["epoch", "fit_loss", "val_loss", "val_acc"],
                  [(e + 1, fl, vl, va) for e, (fl, vl, va) in
                   enumerate(zip(report.fit_loss, report.val_loss, report.val_acc))])
    else:
        write_csv(epochs_path, ["epoch", "fit_loss"],
                  [(e + 1, fl) for e, fl in enumerate(report.fit_loss)])

    timing_path = os.path.join(out_dir, "timing.json")
    write_json(timing_path, {"epoch_seconds": report.epoch_seconds,
                             "total_seconds": float(sum(report.epoch_seconds))})

    write_remap_csv(os.path.join(out_dir, "learner_remap.csv"), ds.learner_index)
    write_remap_csv(os.path.join(out_dir, "question_remap.csv"), ds.question_index)

    return {"checkpoint": ckpt_path, "report": report_path,
            "epochs": epochs_path, "timing": timing_path,
            "model": model_name, "epochs_run": report.epochs_run,
            "best_epoch": report.best_epoch,
            "fit_loss": report.fit_loss[-1] if report.fit_loss else None,
            "test_loss": payload["test_loss"]}


# ------------------------------------------------------------------ rq1


def run_rq1(dataset_spec: DatasetSpec, out_dir, models=DEFAULT_RQ1_MODELS,
            seeds=DEFAULT_SEEDS, modes=("learner", "question"),
            model_config: ModelConfig | None = None,
            train_config: TrainConfig | None = None) -> dict:
    """Identifiability: duplicate every entity, train on the augmented logs,
    score how close identical-response pairs land in trait space."""
    train_config = train_config or TrainConfig()
    ds = load_dataset(dataset_spec)
    summary = {}
    run_rows = []
    hist_paths = {}
    os.makedirs(out_dir, exist_ok=True)

    for mode in modes:
        aug = augment_shadows(ds, mode)
        vectors = build_response_vectors(aug, aug.logs, mode)
        groups = group_identical(vectors)
        full = DataSplit(fit=aug.logs)
        for name in models:
            per_seed = {}
            for seed in seeds:
                cfg = replace(train_config, seed=seed)
                model, _ = _train_one(name, aug, full, model_config, cfg)
                traits = (model.learner_traits() if mode == "learner"
                          else model.question_traits())
                score = ids(traits, groups)
                per_seed[seed] = score
                run_rows.append((name, mode, seed, score))
                if seed == seeds[0]:
                    bins = distance_histogram(traits, groups)
                    hp = os.path.join(out_dir, f"hist_{name}_{mode}.csv")
                    write_histogram_csv(hp, bins)
                    hist_paths[f"{name}/{mode}"] = hp
            mean, std = _mean_std(list(per_seed.values()))
            summary.setdefault(name, {})[mode] = {
                "mean": mean, "std": std,
                "per_seed": {str(s): v for s, v in per_seed.items()}}

    ids_path = os.path.join(out_dir, "rq1_ids.csv")
    write_csv(ids_path, ["model", "mode", "ids"],
              [(name, mode, summary[name][mode]["mean"])
               for name in models for mode in modes])
    runs_path = os.path.join(out_dir, "rq1_ids_runs.csv")
    write_csv(runs_path, ["model", "mode", "seed", "ids"], run_rows)
    summary_path = os.path.join(out_dir, "rq1_summary.json")
    write_json(summary_path, {"models": summary, "seeds": list(seeds),
                              "modes": list(modes)})
    return {"ids_csv": ids_path, "runs_csv": runs_path,
            "summary": summary_path, "histograms": hist_paths,
            "results": summary}


# ------------------------------------------------------------------ rq2


def _concept_traits_or_die(name):
    if name not in CONCEPT_TRAIT_MODELS:
        raise MetricError(
            f"{name}: consistency metrics need per-concept learner traits; "
            f"supported models: {', '.join(sorted(CONCEPT_TRAIT_MODELS))}")


def run_rq2(dataset_spec: DatasetSpec, split_spec: SplitSpec, out_dir,
            models=DEFAULT_RQ2_MODELS, seeds=DEFAULT_SEEDS,
            model_config: ModelConfig | None = None,
            train_config: TrainConfig | None = None,
            from_checkpoint=None) -> dict:
    """Explainability: concordance of trait order with score order on the
    fit+validation logs vs the held-out logs, and the overfitting rate."""
    train_config = train_config or TrainConfig()
    ds = load_dataset(dataset_spec)
    split = split_dataset(ds.logs, split_spec.test_ratio, split_spec.val_ratio,
                          split_spec.seed)
    train_logs = split.fit + split.validation
    q = ds.q_matrix.entries

    def measure(traits):
        doc_train = doc(traits, train_logs, q).mean
        doc_test = doc(traits, split.test, q).mean
        return doc_train, doc_test, reo(doc_train, doc_test)

    summary = {}
    run_rows = []
    if from_checkpoint is not None:
        model, _ = checkpoint_load(from_checkpoint)
        _concept_traits_or_die(model.name)
        models = (model.name,)
        dt, dv, r = measure(model.learner_traits())
        summary[model.name] = {"doc_train": dt, "doc_test": dv, "reo": r,
                               "per_seed": {"checkpoint": [dt, dv, r]}}
        run_rows.append((model.name, "checkpoint", dt, dv, r))
    else:
        for name in models:
            _concept_traits_or_die(name)
        for name in models:
            per_seed = {}
            for seed in seeds:
                cfg = replace(train_config, seed=seed)
                model, _ = _train_one(name, ds, split, model_config, cfg)
                dt, dv, r = measure(model.learner_traits())
                per_seed[str(seed)] = [dt, dv, r]
                run_rows.append((name, seed, dt, dv, r))
            cols = list(zip(*per_seed.values()))
            summary[name] = {
                "doc_train": _mean_std(cols[0])[0],
                "doc_test": _mean_std(cols[1])[0],
                "reo": _mean_std(cols[2])[0],
                "reo_std": _mean_std(cols[2])[1],
                "per_seed": per_seed}

    os.makedirs(out_dir, exist_ok=True)
    doc_path = os.path.join(out_dir, "rq2_doc.csv")
    write_csv(doc_path, ["model", "doc_train", "doc_test", "reo"],
              [(name, summary[name]["doc_train"], summary[name]["doc_test"],
                summary[name]["reo"]) for name in models])
    runs_path = os.path.join(out_dir, "rq2_doc_runs.csv")
    write_csv(runs_path, ["model", "seed", "doc_train", "doc_test", "reo"], run_rows)
    summary_path = os.path.join(out_dir, "rq2_summary.json")
    write_json(summary_path, {"models": summary, "seeds": list(seeds),
                              "split": asdict(split_spec)})
    return {"doc_csv": doc_path, "runs_csv": runs_path,
            "summary": summary_path, "results": summary}


# ------------------------------------------------------------------ rq3


def run_rq3(dataset_spec: DatasetSpec, split_spec: SplitSpec, out_dir,
            models=DEFAULT_RQ3_MODELS, seeds=(0,),
            model_config: ModelConfig | None = None,
            train_config: TrainConfig | None = None,
            from_checkpoint=None) -> dict:
    """Held-out score prediction from fit-set-derived diagnoses, with a
    majority-rate reference row."""
    train_config = train_config or TrainConfig()
    ds = load_dataset(dataset_spec)
    split = split_dataset(ds.logs, split_spec.test_ratio, split_spec.val_ratio,
                          split_spec.seed)
    tlids, tqids, tscores = _log_arrays(split.test)
    fit_rate = float(np.mean([r.score for r in split.fit]))

    summary = {}
    run_rows = []
    if from_checkpoint is not None:
        model, _ = checkpoint_load(from_checkpoint)
        models = (model.name,)
        m = classification_metrics(model.predict(tlids, tqids), tscores)
        summary[model.name] = {"acc": m.acc, "rmse": m.rmse, "f1": m.f1,
                               "per_seed": {"checkpoint": [m.acc, m.rmse, m.f1]}}
        run_rows.append((model.name, "checkpoint", m.acc, m.rmse, m.f1))
    else:
        for name in models:
            per_seed = {}
            for seed in seeds:
                cfg = replace(train_config, seed=seed)
                model, _ = _train_one(name, ds, split, model_config, cfg)
                m = classification_metrics(model.predict(tlids, tqids), tscores)
                per_seed[str(seed)] = [m.acc, m.rmse, m.f1]
                run_rows.append((name, seed, m.acc, m.rmse, m.f1))
            cols = list(zip(*per_seed.values()))
            summary[name] = {"acc": _mean_std(cols[0])[0],
                             "rmse": _mean_std(cols[1])[0],
                             "f1": _mean_std(cols[2])[0],
                             "per_seed": per_seed}

    majority = classification_metrics(np.full(tscores.size, fit_rate), tscores)
    summary["majority"] = {"acc": majority.acc, "rmse": majority.rmse,
                           "f1": majority.f1, "fit_correct_rate": fit_rate}

    os.makedirs(out_dir, exist_ok=True)
    pred_path = os.path.join(out_dir, "rq3_prediction.csv")
    names = list(models) + ["majority"]
    write_csv(pred_path, ["model", "acc", "rmse", "f1"],
              [(name, summary[name]["acc"], summary[name]["rmse"],
                summary[name]["f1"]) for name in names])
    runs_path = os.path.join(out_dir, "rq3_runs.csv")
    write_csv(runs_path, ["model", "seed", "acc", "rmse", "f1"], run_rows)
    summary_path = os.path.join(out_dir, "rq3_summary.json")
    write_json(summary_path, {"models": summary, "seeds": list(seeds),
                              "fit_correct_rate": fit_rate,
                              "split": asdict(split_spec)})
    return {"prediction_csv": pred_path, "runs_csv": runs_path,
            "summary": summary_path, "results": summary}


# ------------------------------------------------------------------ export


def run_export(checkpoint_path, out_dir) -> dict:
    model, extra = checkpoint_load(checkpoint_path)
    theta = model.learner_traits()
    psi = model.question_traits()
    lext = extra.get("learner_external_ids") or list(range(model.n_learners))
    qext = extra.get("question_external_ids") or list(range(model.n_questions))
    if len(lext) != theta.shape[0] or len(qext) != psi.shape[0]:
        raise CheckpointError(
            f"{checkpoint_path}: id table sizes ({len(lext)}, {len(qext)}) do "
            f"not match trait counts ({theta.shape[0]}, {psi.shape[0]})")

    os.makedirs(out_dir, exist_ok=True)
    traits_path = os.path.join(out_dir, "learner_traits.csv")
    write_csv(traits_path,
              ["entity_id"] + [f"v_{k + 1}" for k in range(theta.shape[1])],
              [(ext, *row) for ext, row in zip(lext, theta)])
    params_path = os.path.join(out_dir, "question_params.csv")
    write_csv(params_path,
              ["entity_id"] + [f"v_{k + 1}" for k in range(psi.shape[1])],
              [(ext, *row) for ext, row in zip(qext, psi)])
    return {"learner_traits": traits_path, "question_params": params_path,
            "model": model.name,
            "learners": int(theta.shape[0]), "trait_width": int(theta.shape[1]),
            "questions": int(psi.shape[0]), "param_width": int(psi.shape[1])}
