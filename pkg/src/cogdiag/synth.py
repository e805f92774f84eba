"""Synthetic exam-style response data.

Generates a dense learner-by-question log table from a latent proficiency
model: per-learner ability with concept-level variation, per-question
difficulty and discrimination, and a global offset calibrated by bisection
so the overall correct rate lands on a requested target. The output files
use the same CSV formats the loaders consume, so generated corpora are
drop-in stand-ins for real exam exports.
"""

from __future__ import annotations

import os

import numpy as np

from .diffcore import sigmoid_values
from .errors import ConfigError
from .fileio import write_csv

CONCEPT_COUNT_CHOICES = (2, 3, 4, 5)
CONCEPT_COUNT_WEIGHTS = (0.2, 0.4, 0.3, 0.1)


def _build_q_matrix(rng, n_questions, n_concepts):
    counts = rng.choice(CONCEPT_COUNT_CHOICES, size=n_questions,
                        p=CONCEPT_COUNT_WEIGHTS)
    counts = np.minimum(counts, n_concepts)
    q = np.zeros((n_questions, n_concepts), dtype=np.int8)
    for j in range(n_questions):
        picks = rng.choice(n_concepts, size=counts[j], replace=False)
        q[j, picks] = 1
    # every concept must appear somewhere or downstream traits are untestable
    for k in np.flatnonzero(q.sum(axis=0) == 0):
        q[rng.integers(0, n_questions), k] = 1
    return q


def _calibrate_offset(z0, disc, correct_rate):
    lo, hi = -6.0, 6.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if float(np.mean(sigmoid_values(z0 - disc * mid))) > correct_rate:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def synthesize_dataset(out_dir, n_learners=4209, n_questions=20, n_concepts=11,
                       seed=0, correct_rate=0.424, logs_per_learner=None,
                       duplicate_frac=0.0) -> dict:
    """Write logs.csv and q.csv under out_dir; returns a generation summary."""
    if n_learners < 1 or n_questions < 1 or n_concepts < 1:
        raise ConfigError("dataset dimensions must be positive")
    if not 0.0 < correct_rate < 1.0:
        raise ConfigError(f"correct_rate must be in (0,1), got {correct_rate}")
    if logs_per_learner is not None and not 1 <= logs_per_learner <= n_questions:
        raise ConfigError(
            f"logs_per_learner must be in [1, {n_questions}], got {logs_per_learner}")
    if not 0.0 <= duplicate_frac < 1.0:
        raise ConfigError(f"duplicate_frac must be in [0,1), got {duplicate_frac}")

    rng = np.random.default_rng(seed)
    q = _build_q_matrix(rng, n_questions, n_concepts)

    ability = rng.normal(size=(n_learners, 1))
    mastery = 0.8 * ability + 0.6 * rng.normal(size=(n_learners, n_concepts))
    difficulty = rng.normal(scale=0.7, size=n_questions)
    disc = rng.uniform(1.2, 2.2, size=n_questions)

    q_norm = q.astype(np.float64) / q.sum(axis=1, keepdims=True)
    skill = mastery @ q_norm.T
    z0 = disc[None, :] * (skill - difficulty[None, :])
    offset = _calibrate_offset(z0, disc[None, :], correct_rate)
    probs = sigmoid_values(z0 - disc[None, :] * offset)
    scores = (rng.uniform(size=probs.shape) < probs).astype(np.int64)

    with_order = duplicate_frac > 0.0
    rows = []
    for i in range(n_learners):
        if logs_per_learner is None:
            qids = np.arange(n_questions)
        else:
            qids = np.sort(rng.choice(n_questions, size=logs_per_learner,
                                      replace=False))
        for j in qids:
            rows.append([i, int(j), int(scores[i, j]), 1])

    if with_order:
        n_extra = int(round(duplicate_frac * len(rows)))
        attempt = {}
        extra = []
        for pick in rng.integers(0, len(rows), size=n_extra):
            i, j = rows[pick][0], rows[pick][1]
            attempt[(i, j)] = attempt.get((i, j), 1) + 1
            redo = int(rng.uniform() < probs[i, j])
            extra.append([i, j, redo, attempt[(i, j)]])
        rows.extend(extra)
        rows.sort(key=lambda r: (r[0], r[1], r[3]))

    os.makedirs(out_dir, exist_ok=True)
    logs_path = os.path.join(out_dir, "logs.csv")
    q_path = os.path.join(out_dir, "q.csv")
    header = ["learner_id", "question_id", "score"]
    if with_order:
        write_csv(logs_path, header + ["order"], rows)
    else:
        write_csv(logs_path, header, [r[:3] for r in rows])
    with open(q_path, "w", newline="") as fh:
        for row in q:
            fh.write(",".join(str(int(v)) for v in row) + "\n")

    return {
        "logs_path": logs_path,
        "q_matrix_path": q_path,
        "n_learners": n_learners,
        "n_questions": n_questions,
        "n_concepts": n_concepts,
        "n_logs": len(rows),
        "empirical_correct_rate": float(np.mean([r[2] for r in rows])),
        "seed": seed,
    }
