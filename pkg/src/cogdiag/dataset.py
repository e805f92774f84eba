"""Response-log and Q-matrix handling.

Loads CSV data, validates it, collapses repeated attempts, filters sparse
learners, splits per learner, builds {-1, 0, +1} response vectors, and
injects shadow copies of entities for identifiability measurement. Every
operation is a pure function of its inputs plus an explicit seed.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataFormatError, DataPipelineError
from .fileio import write_csv

log = logging.getLogger(__name__)

REQUIRED_LOG_COLUMNS = ("learner_id", "question_id", "score")


@dataclass(frozen=True)
class ResponseLog:
    learner_id: int
    question_id: int
    score: int
    order: int | None = None


@dataclass
class QMatrix:
    """Binary question-by-concept matrix; every question tags >= 1 concept."""

    entries: np.ndarray

    @property
    def n_questions(self) -> int:
        return self.entries.shape[0]

    @property
    def n_concepts(self) -> int:
        return self.entries.shape[1]

    def row(self, question_id: int) -> np.ndarray:
        return self.entries[question_id]


@dataclass
class LogTable:
    """Loaded logs with dense ids plus the dense-to-external id tables."""

    logs: list
    learner_index: list
    question_index: list


@dataclass
class ResponseDataset:
    n_learners: int
    n_questions: int
    n_concepts: int
    logs: list
    q_matrix: QMatrix
    learner_index: list
    question_index: list
    shadow_map: dict | None = None
    shadow_mode: str | None = None


@dataclass
class DataSplit:
    fit: list
    validation: list = field(default_factory=list)
    test: list = field(default_factory=list)


@dataclass
class PreprocessResult:
    logs: list
    learner_map: dict
    question_map: dict


def _parse_int(value, what, line_num):
    try:
        return int(value)
    except (TypeError, ValueError):
        raise DataFormatError(f"line {line_num}: {what} must be an integer, got {value!r}") from None


def load_response_logs(path) -> LogTable:
    """Read `learner_id,question_id,score[,order]` CSV into dense-id logs.

    External ids may be arbitrary integers; they are remapped to 0-based
    dense indices in sorted order and the remap tables kept for export.
    Duplicate (learner, question) rows are retained; preprocessing decides
    their fate.
    """
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot open logs file {path}: {exc}") from exc
    raw = []
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataFormatError(f"{path}: no logs (empty file)")
        missing = [c for c in REQUIRED_LOG_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataFormatError(f"{path}: missing columns {missing}")
        has_order = "order" in reader.fieldnames
        for row in reader:
            line = reader.line_num
            lid = _parse_int(row["learner_id"], "learner_id", line)
            qid = _parse_int(row["question_id"], "question_id", line)
            score = _parse_int(row["score"], "score", line)
            if score not in (0, 1):
                raise DataFormatError(f"line {line}: score must be 0 or 1, got {score}")
            order = None
            if has_order and row["order"] not in (None, ""):
                order = _parse_int(row["order"], "order", line)
            raw.append((lid, qid, score, order))
    if not raw:
        raise DataFormatError(f"{path}: no logs")

    learner_index = sorted({r[0] for r in raw})
    question_index = sorted({r[1] for r in raw})
    lmap = {ext: i for i, ext in enumerate(learner_index)}
    qmap = {ext: i for i, ext in enumerate(question_index)}
    logs = [ResponseLog(lmap[lid], qmap[qid], score, order) for lid, qid, score, order in raw]
    return LogTable(logs=logs, learner_index=learner_index, question_index=question_index)


def load_q_matrix(path) -> QMatrix:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise DataFormatError(f"cannot open Q-matrix file {path}: {exc}") from exc
    rows = []
    width = None
    with fh:
        for line_num, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DataFormatError(
                    f"line {line_num}: expected {width} columns, got {len(row)}")
            parsed = []
            for cell in row:
                v = _parse_int(cell.strip(), "Q-matrix entry", line_num)
                if v not in (0, 1):
                    raise DataFormatError(f"line {line_num}: entry must be 0 or 1, got {v}")
                parsed.append(v)
            if not any(parsed):
                raise DataFormatError(f"line {line_num}: question tags no concepts (all-zero row)")
            rows.append(parsed)
    if not rows:
        raise DataFormatError(f"{path}: empty Q-matrix")
    return QMatrix(entries=np.array(rows, dtype=np.int8))


def _first_attempt(group):
    # group entries are (position, log); prefer explicit order when every
    # attempt carries one, otherwise fall back to file position
    if all(entry[1].order is not None for entry in group):
        return min(group, key=lambda e: (e[1].order, e[0]))[1]
    return min(group, key=lambda e: e[0])[1]


def _majority(group):
    if len(group) == 1:
        return group[0][1]
    ones = sum(e[1].score for e in group)
    zeros = len(group) - ones
    score = 1 if ones > zeros else 0  # ties count as incorrect
    first = group[0][1]
    return ResponseLog(first.learner_id, first.question_id, score, None)


def preprocess(logs, min_logs: int = 0, first_attempt_only: bool = False) -> PreprocessResult:
    """Collapse repeated attempts, drop sparse learners, re-densify ids.

    One log survives per (learner, question) pair: the lowest-order attempt
    when first_attempt_only, else the majority score. Learners with fewer
    than min_logs remaining logs are removed. Idempotent.
    """
    if min_logs < 0:
        raise DataPipelineError(f"min_logs must be >= 0, got {min_logs}")
    groups: dict = {}
    for pos, entry in enumerate(logs):
        groups.setdefault((entry.learner_id, entry.question_id), []).append((pos, entry))

    pick = _first_attempt if first_attempt_only else _majority
    deduped = [pick(group) for group in groups.values()]

    counts: dict = {}
    for entry in deduped:
        counts[entry.learner_id] = counts.get(entry.learner_id, 0) + 1
    kept = [e for e in deduped if counts[e.learner_id] >= min_logs]
    if not kept:
        raise DataPipelineError("dataset exhausted by filters")

    learner_map = {old: new for new, old in enumerate(sorted({e.learner_id for e in kept}))}
    question_map = {old: new for new, old in enumerate(sorted({e.question_id for e in kept}))}
    identity = all(k == v for k, v in learner_map.items()) and \
        all(k == v for k, v in question_map.items())
    if identity:
        remapped = kept
    else:
        remapped = [
            ResponseLog(learner_map[e.learner_id], question_map[e.question_id], e.score, e.order)
            for e in kept
        ]
    return PreprocessResult(logs=remapped, learner_map=learner_map, question_map=question_map)


def build_dataset(logs_path, q_matrix_path, min_logs: int = 0,
                  first_attempt_only: bool = False) -> ResponseDataset:
    """Load, validate, and preprocess one dataset.

    External question ids are 0-based row indices into the Q-matrix file;
    only logged questions become part of the dataset, with their Q rows
    selected accordingly.
    """
    table = load_response_logs(logs_path)
    q = load_q_matrix(q_matrix_path)
    for ext in table.question_index:
        if not 0 <= ext < q.n_questions:
            raise DataFormatError(
                f"question id {ext} outside Q-matrix with {q.n_questions} rows")

    pre = preprocess(table.logs, min_logs=min_logs, first_attempt_only=first_attempt_only)
    learner_index = [table.learner_index[old] for old in sorted(pre.learner_map)]
    question_index = [table.question_index[old] for old in sorted(pre.question_map)]
    entries = q.entries[np.array(question_index, dtype=np.int64)]
    return ResponseDataset(
        n_learners=len(learner_index),
        n_questions=len(question_index),
        n_concepts=q.n_concepts,
        logs=pre.logs,
        q_matrix=QMatrix(entries=entries),
        learner_index=learner_index,
        question_index=question_index,
    )


def split_dataset(logs, test_ratio: float, val_ratio: float, seed: int) -> DataSplit:
    """Per-learner split: floor(test_ratio*n) logs to test, floor(val_ratio*m)
    of the remainder to validation, rest to fit; selection by seeded shuffle.
    """
    if not (0.0 <= test_ratio < 1.0 and 0.0 <= val_ratio < 1.0):
        raise DataPipelineError(f"ratios must lie in [0,1): test={test_ratio} val={val_ratio}")
    if test_ratio + val_ratio >= 1.0:
        raise DataPipelineError("test_ratio + val_ratio must be < 1")
    if seed < 0:
        raise DataPipelineError(f"seed must be >= 0, got {seed}")

    by_learner: dict = {}
    for pos, entry in enumerate(logs):
        by_learner.setdefault(entry.learner_id, []).append(pos)

    fit_pos, val_pos, test_pos = [], [], []
    for lid in sorted(by_learner):
        positions = by_learner[lid]
        n = len(positions)
        # independent stream per learner so membership of one learner never
        # shifts another learner's assignment
        rng = np.random.default_rng([seed, lid])
        perm = rng.permutation(n)
        n_test = int(np.floor(test_ratio * n))
        n_val = int(np.floor(val_ratio * (n - n_test)))
        if n - n_test - n_val == 0:
            log.warning("learner %d left with zero fit logs", lid)
        test_pos.extend(positions[i] for i in perm[:n_test])
        val_pos.extend(positions[i] for i in perm[n_test:n_test + n_val])
        fit_pos.extend(positions[i] for i in perm[n_test + n_val:])

    return DataSplit(
        fit=[logs[i] for i in sorted(fit_pos)],
        validation=[logs[i] for i in sorted(val_pos)],
        test=[logs[i] for i in sorted(test_pos)],
    )


def build_response_matrix(subset, n_learners: int, n_questions: int) -> np.ndarray:
    """Learner-by-question matrix over {-1, 0, +1} built from subset only:
    +1 correct log, -1 incorrect log, 0 unobserved. A pair that somehow has
    both outcomes in the subset reads as correct."""
    x = np.zeros((n_learners, n_questions), dtype=np.int8)
    for entry in subset:
        if entry.score == 0:
            x[entry.learner_id, entry.question_id] = -1
    for entry in subset:
        if entry.score == 1:
            x[entry.learner_id, entry.question_id] = 1
    return x


def build_response_vectors(dataset: ResponseDataset, subset, mode: str) -> np.ndarray:
    """Rows are entities: learners (length-M vectors) or questions (length-N)."""
    if mode not in ("learner", "question"):
        raise DataPipelineError(f"unknown vector mode {mode!r}")
    x = build_response_matrix(subset, dataset.n_learners, dataset.n_questions)
    return x if mode == "learner" else np.ascontiguousarray(x.T)


def augment_shadows(dataset: ResponseDataset, mode: str) -> ResponseDataset:
    """Duplicate every entity of the chosen side under a fresh id with
    identical logs; shadow of entity i is i + count. Shadow external ids are
    offset past the largest real external id."""
    if mode not in ("learner", "question"):
        raise DataPipelineError(f"unknown shadow mode {mode!r}")
    if dataset.shadow_map is not None:
        raise DataPipelineError("dataset already shadow-augmented")

    if mode == "learner":
        n = dataset.n_learners
        extra = [ResponseLog(e.learner_id + n, e.question_id, e.score, e.order)
                 for e in dataset.logs]
        offset = max(dataset.learner_index) + 1
        return ResponseDataset(
            n_learners=2 * n,
            n_questions=dataset.n_questions,
            n_concepts=dataset.n_concepts,
            logs=dataset.logs + extra,
            q_matrix=dataset.q_matrix,
            learner_index=dataset.learner_index + [offset + e for e in dataset.learner_index],
            question_index=dataset.question_index,
            shadow_map={i: i + n for i in range(n)},
            shadow_mode="learner",
        )

    m = dataset.n_questions
    extra = [ResponseLog(e.learner_id, e.question_id + m, e.score, e.order)
             for e in dataset.logs]
    offset = max(dataset.question_index) + 1
    return ResponseDataset(
        n_learners=dataset.n_learners,
        n_questions=2 * m,
        n_concepts=dataset.n_concepts,
        logs=dataset.logs + extra,
        q_matrix=QMatrix(entries=np.vstack([dataset.q_matrix.entries,
                                            dataset.q_matrix.entries])),
        learner_index=dataset.learner_index,
        question_index=dataset.question_index + [offset + e for e in dataset.question_index],
        shadow_map={j: j + m for j in range(m)},
        shadow_mode="question",
    )


def group_identical(vectors: np.ndarray) -> list:
    """Partition row indices so rows in one group are element-wise equal.

    Hashing row bytes keeps this linear; IDS then only compares within
    groups. Groups appear in first-occurrence order.
    """
    vectors = np.ascontiguousarray(vectors)
    buckets: dict = {}
    for i in range(vectors.shape[0]):
        buckets.setdefault(vectors[i].tobytes(), []).append(i)
    return list(buckets.values())


def write_remap_csv(path, index) -> None:
    write_csv(path, ["external_id", "dense_id"],
              [(ext, dense) for dense, ext in enumerate(index)])
