"""Command-line client for the diagnosis pipelines.

The CLI assembles a request from three layers (built-in defaults, an
optional flat key=value config file, explicit flags, in that precedence)
and posts it to the service: in-process by default, or a running server
via --server. All artifacts are files under --out-dir.
"""

from __future__ import annotations

import os
import sys

import click

from .errors import CogdiagError
from .fileio import parse_kv_config

DATASET_KEYS = {"logs_path", "q_matrix_path", "dataset_dir", "min_logs",
                "first_attempt_only"}
SPLIT_KEYS = {"test_ratio", "val_ratio", "split_seed"}
ARCH_KEYS = {"hidden_learner", "hidden_question1", "hidden_question2",
             "agg_dim", "pred_hidden1", "pred_hidden2", "pred_monotonic",
             "ncdm_hidden1", "ncdm_hidden2", "mirt_dim", "init_constant"}
TRAIN_KEYS = {"lr", "batch_size", "max_epochs", "patience", "seed"}
RUN_KEYS = {"model", "models", "modes", "seeds", "out_dir", "from_checkpoint"}
SYNTH_KEYS = {"out_dir", "seed", "n_learners", "n_questions", "n_concepts",
              "correct_rate", "logs_per_learner", "duplicate_frac"}

_INT_KEYS = {"min_logs", "split_seed", "batch_size", "max_epochs", "patience",
             "seed", "n_learners", "n_questions", "n_concepts",
             "logs_per_learner"} | (ARCH_KEYS - {"pred_monotonic", "init_constant"})
_FLOAT_KEYS = {"test_ratio", "val_ratio", "lr", "correct_rate",
               "duplicate_frac", "init_constant"}
_BOOL_KEYS = {"first_attempt_only", "pred_monotonic"}


def _die(message):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _coerce(key, value):
    try:
        if key in _BOOL_KEYS:
            low = value.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError as exc:
        _die(f"config key {key}: {exc}")
    return value


def _load_config(path, allowed):
    if path is None:
        return {}
    try:
        raw = parse_kv_config(path)
    except CogdiagError as exc:
        _die(str(exc))
    unknown = sorted(set(raw) - allowed)
    if unknown:
        _die(f"unknown config keys: {', '.join(unknown)} "
             f"(allowed: {', '.join(sorted(allowed))})")
    return {k: _coerce(k, v) for k, v in raw.items()}


def _dataset_payload(cfg, dataset_dir):
    if dataset_dir is None:
        dataset_dir = cfg.get("dataset_dir")
    if dataset_dir is not None:
        logs = os.path.join(dataset_dir, "logs.csv")
        q = os.path.join(dataset_dir, "q.csv")
    else:
        logs, q = cfg.get("logs_path"), cfg.get("q_matrix_path")
    if not logs or not q:
        _die("no dataset given: pass --dataset-dir or set "
             "logs_path/q_matrix_path in the config")
    out = {"logs_path": logs, "q_matrix_path": q}
    for key in ("min_logs", "first_attempt_only"):
        if key in cfg:
            out[key] = cfg[key]
    return out


def _split_payload(cfg):
    out = {}
    if "test_ratio" in cfg:
        out["test_ratio"] = cfg["test_ratio"]
    if "val_ratio" in cfg:
        out["val_ratio"] = cfg["val_ratio"]
    if "split_seed" in cfg:
        out["seed"] = cfg["split_seed"]
    return out


def _arch_payload(cfg):
    return {k: cfg[k] for k in ARCH_KEYS if k in cfg}


def _train_payload(cfg, seed_flag):
    out = {k: cfg[k] for k in TRAIN_KEYS if k in cfg}
    if seed_flag is not None:
        out["seed"] = seed_flag
    return out


def _seeds_payload(cfg, seed_flag):
    """Explicit --seed runs that single seed; otherwise the config's
    comma-separated `seeds`; otherwise the pipeline default."""
    if seed_flag is not None:
        return [seed_flag]
    if "seeds" in cfg:
        try:
            return [int(s) for s in str(cfg["seeds"]).split(",") if s.strip()]
        except ValueError:
            _die(f"config key seeds: not a comma-separated integer list: "
                 f"{cfg['seeds']!r}")
    return None


def _models_payload(cfg, model_flags):
    if model_flags:
        return list(model_flags)
    if "models" in cfg:
        return [m.strip() for m in str(cfg["models"]).split(",") if m.strip()]
    if "model" in cfg:
        return [cfg["model"]]
    return None


def _out_dir(cfg, flag):
    out = flag if flag is not None else cfg.get("out_dir")
    if not out:
        _die("no output directory: pass --out-dir or set out_dir in the config")
    return out


def _post(server, path, payload):
    if server:
        import httpx
        client = httpx.Client(base_url=server, timeout=None)
    else:
        import warnings

        with warnings.catch_warnings():
            # environment pins a starlette that warns about its own httpx use
            warnings.simplefilter("ignore")
            from fastapi.testclient import TestClient

        from .service.app import app
        client = TestClient(app)
    try:
        resp = client.post(path, json=payload)
    finally:
        client.close()
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        _die(detail)
    return resp.json()


def _echo_paths(data, keys):
    for key in keys:
        value = data.get(key)
        if isinstance(value, str):
            click.echo(f"{key}: {value}")
        elif isinstance(value, dict):
            for sub, path in sorted(value.items()):
                click.echo(f"{key}[{sub}]: {path}")


_CONFIG_OPT = click.option("--config", type=click.Path(), default=None,
                           help="Flat key=value config file.")
_SEED_OPT = click.option("--seed", type=int, default=None,
                         help="Single seed override.")
_DATASET_OPT = click.option("--dataset-dir", type=click.Path(), default=None,
                            help="Directory holding logs.csv and q.csv.")
_OUT_OPT = click.option("--out-dir", type=click.Path(), default=None,
                        help="Directory for output artifacts.")
_MODEL_OPT = click.option("--model", "models", multiple=True,
                          help="Model kind (repeatable).")
_CKPT_OPT = click.option("--from-checkpoint", type=click.Path(), default=None,
                         help="Path to a saved model checkpoint.")


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service; in-process when omitted.")
@click.pass_context
def main(ctx, server):
    """Cognitive diagnosis experiments: data synthesis, training, and the
    identifiability / explainability / prediction pipelines."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, type=int, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn
    uvicorn.run("cogdiag.service.app:app", host=host, port=port)


@main.command()
@_CONFIG_OPT
@_SEED_OPT
@_OUT_OPT
@click.option("--n-learners", type=int, default=None)
@click.option("--n-questions", type=int, default=None)
@click.option("--n-concepts", type=int, default=None)
@click.option("--correct-rate", type=float, default=None)
@click.option("--logs-per-learner", type=int, default=None)
@click.option("--duplicate-frac", type=float, default=None)
@click.pass_context
def synth(ctx, config, seed, out_dir, **flags):
    """Generate a synthetic response dataset (logs.csv + q.csv)."""
    cfg = _load_config(config, SYNTH_KEYS)
    payload = {"out_dir": _out_dir(cfg, out_dir)}
    for key in SYNTH_KEYS - {"out_dir", "seed"}:
        if cfg.get(key) is not None:
            payload[key] = cfg[key]
    for key, value in flags.items():
        if value is not None:
            payload[key] = value
    if seed is not None:
        payload["seed"] = seed
    elif "seed" in cfg:
        payload["seed"] = cfg["seed"]
    data = _post(ctx.obj["server"], "/synth", payload)
    _echo_paths(data, ["logs_path", "q_matrix_path"])
    click.echo(f"n_logs: {data['n_logs']}")
    click.echo(f"empirical_correct_rate: {data['empirical_correct_rate']:.4f}")


@main.command()
@_CONFIG_OPT
@_SEED_OPT
@click.option("--model", default=None, help="Model kind to train.")
@_DATASET_OPT
@_OUT_OPT
@_CKPT_OPT
@click.pass_context
def train(ctx, config, seed, model, dataset_dir, out_dir, from_checkpoint):
    """Train one model; writes checkpoint, report, per-epoch CSV, timings."""
    cfg = _load_config(config, DATASET_KEYS | SPLIT_KEYS | ARCH_KEYS
                       | TRAIN_KEYS | RUN_KEYS)
    payload = {
        "dataset": _dataset_payload(cfg, dataset_dir),
        "split": _split_payload(cfg),
        "model": model or cfg.get("model", "idcdm"),
        "architecture": _arch_payload(cfg),
        "training": _train_payload(cfg, seed),
        "out_dir": _out_dir(cfg, out_dir),
    }
    ckpt = from_checkpoint or cfg.get("from_checkpoint")
    if ckpt:
        payload["from_checkpoint"] = ckpt
    data = _post(ctx.obj["server"], "/train", payload)
    _echo_paths(data, ["checkpoint", "report", "epochs", "timing"])
    click.echo(f"epochs_run: {data['epochs_run']} (best {data['best_epoch'] + 1})")
    if data.get("test_loss") is not None:
        click.echo(f"test_loss: {data['test_loss']:.4f}")


@main.command()
@_CONFIG_OPT
@_SEED_OPT
@_MODEL_OPT
@_DATASET_OPT
@_OUT_OPT
@click.pass_context
def rq1(ctx, config, seed, models, dataset_dir, out_dir):
    """Identifiability scores on shadow-augmented data."""
    cfg = _load_config(config, DATASET_KEYS | ARCH_KEYS | TRAIN_KEYS | RUN_KEYS)
    payload = {
        "dataset": _dataset_payload(cfg, dataset_dir),
        "architecture": _arch_payload(cfg),
        "training": _train_payload(cfg, None),
        "out_dir": _out_dir(cfg, out_dir),
    }
    chosen = _models_payload(cfg, models)
    if chosen:
        payload["models"] = chosen
    seeds = _seeds_payload(cfg, seed)
    if seeds:
        payload["seeds"] = seeds
    if "modes" in cfg:
        payload["modes"] = [m.strip() for m in str(cfg["modes"]).split(",")
                            if m.strip()]
    data = _post(ctx.obj["server"], "/rq1", payload)
    _echo_paths(data, ["ids_csv", "runs_csv", "summary", "histograms"])
    for name, modes in data["results"].items():
        for mode, stats in modes.items():
            click.echo(f"{name} [{mode}]: ids={stats['mean']:.4f} "
                       f"(std {stats['std']:.4f})")


@main.command()
@_CONFIG_OPT
@_SEED_OPT
@_MODEL_OPT
@_DATASET_OPT
@_OUT_OPT
@_CKPT_OPT
@click.pass_context
def rq2(ctx, config, seed, models, dataset_dir, out_dir, from_checkpoint):
    """Trait-order consistency on train vs held-out logs, and its decay."""
    cfg = _load_config(config, DATASET_KEYS | SPLIT_KEYS | ARCH_KEYS
                       | TRAIN_KEYS | RUN_KEYS)
    payload = {
        "dataset": _dataset_payload(cfg, dataset_dir),
        "split": _split_payload(cfg),
        "architecture": _arch_payload(cfg),
        "training": _train_payload(cfg, None),
        "out_dir": _out_dir(cfg, out_dir),
    }
    chosen = _models_payload(cfg, models)
    if chosen:
        payload["models"] = chosen
    seeds = _seeds_payload(cfg, seed)
    if seeds:
        payload["seeds"] = seeds
    ckpt = from_checkpoint or cfg.get("from_checkpoint")
    if ckpt:
        payload["from_checkpoint"] = ckpt
    data = _post(ctx.obj["server"], "/rq2", payload)
    _echo_paths(data, ["doc_csv", "runs_csv", "summary"])
    for name, stats in data["results"].items():
        click.echo(f"{name}: doc_train={stats['doc_train']:.4f} "
                   f"doc_test={stats['doc_test']:.4f} reo={stats['reo']:.4f}")


@main.command()
@_CONFIG_OPT
@_SEED_OPT
@_MODEL_OPT
@_DATASET_OPT
@_OUT_OPT
@_CKPT_OPT
@click.pass_context
def rq3(ctx, config, seed, models, dataset_dir, out_dir, from_checkpoint):
    """Held-out score prediction quality per model."""
    cfg = _load_config(config, DATASET_KEYS | SPLIT_KEYS | ARCH_KEYS
                       | TRAIN_KEYS | RUN_KEYS)
    payload = {
        "dataset": _dataset_payload(cfg, dataset_dir),
        "split": _split_payload(cfg),
        "architecture": _arch_payload(cfg),
        "training": _train_payload(cfg, None),
        "out_dir": _out_dir(cfg, out_dir),
    }
    chosen = _models_payload(cfg, models)
    if chosen:
        payload["models"] = chosen
    seeds = _seeds_payload(cfg, seed)
    if seeds:
        payload["seeds"] = seeds
    ckpt = from_checkpoint or cfg.get("from_checkpoint")
    if ckpt:
        payload["from_checkpoint"] = ckpt
    data = _post(ctx.obj["server"], "/rq3", payload)
    _echo_paths(data, ["prediction_csv", "runs_csv", "summary"])
    for name, stats in data["results"].items():
        click.echo(f"{name}: acc={stats['acc']:.4f} rmse={stats['rmse']:.4f} "
                   f"f1={stats['f1']:.4f}")


@main.command()
@_CONFIG_OPT
@_CKPT_OPT
@_OUT_OPT
@click.pass_context
def export(ctx, config, from_checkpoint, out_dir):
    """Write learner traits and question parameters from a checkpoint."""
    cfg = _load_config(config, {"from_checkpoint", "out_dir"})
    ckpt = from_checkpoint or cfg.get("from_checkpoint")
    if not ckpt:
        _die("no checkpoint: pass --from-checkpoint or set it in the config")
    data = _post(ctx.obj["server"], "/export",
                 {"checkpoint": ckpt, "out_dir": _out_dir(cfg, out_dir)})
    _echo_paths(data, ["learner_traits", "question_params"])
    click.echo(f"{data['learners']} learners x {data['trait_width']} traits; "
               f"{data['questions']} questions x {data['param_width']} params")


if __name__ == "__main__":
    main()
