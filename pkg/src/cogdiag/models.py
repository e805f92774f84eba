"""Diagnosis models.

The main model diagnoses learner traits and question parameters directly
from {-1, 0, +1} response vectors through small sigmoid networks, which makes
equal response data map to equal diagnoses by construction. The baselines
(IRT, MIRT, DINA, NCDM) are transductive: per-entity embeddings fitted to
the logs. All models share one interface so the trainer, metrics, and
pipelines never branch on kind.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import diffcore as dc
from .dataset import build_response_matrix
from .diffcore import ParamTensor, sigmoid_values
from .errors import ConfigError, GraphShapeError

MODEL_NAMES = ("idcdm", "idcdm-nmono", "idcdm-nenc", "ncdm", "ncdm-const",
               "irt", "mirt", "dina")


@dataclass
class ModelConfig:
    """Architecture knobs. Widths default to sizes that fit the bundled
    exam-scale data; every one is overridable from configs."""

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

    def to_dict(self) -> dict:
        return asdict(self)


def _one_hot(ids, width) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    out = np.zeros((ids.size, width), dtype=np.float64)
    out[np.arange(ids.size), ids] = 1.0
    return out


def _zeros_bias(name, width) -> ParamTensor:
    return ParamTensor(name, np.zeros((1, width)))


class CDModel:
    """Shared surface: bind(fit_logs) -> training_loss_backward -> predict,
    learner_traits, question_traits."""

    name = "base"

    def __init__(self, n_learners, n_questions, n_concepts, q_entries):
        self.n_learners = int(n_learners)
        self.n_questions = int(n_questions)
        self.n_concepts = int(n_concepts)
        q = np.asarray(q_entries)
        if q.shape != (self.n_questions, self.n_concepts):
            raise GraphShapeError(
                f"Q-matrix {q.shape} vs (questions, concepts) "
                f"({self.n_questions}, {self.n_concepts})")
        self.q_float = q.astype(np.float64)
        self.params: list[ParamTensor] = []
        self.config = ModelConfig()

    def _register(self, param: ParamTensor) -> ParamTensor:
        if param.constrained:
            param.value = dc.project_nonnegative(param.value)
        self.params.append(param)
        return param

    def bind(self, fit_logs) -> None:
        """Attach the fit subset. Embedding models need nothing from it."""

    def _forward_graph(self, lids, qids) -> dc.Node:
        raise NotImplementedError

    def training_loss_backward(self, lids, qids, scores) -> float:
        """One batch: build graph, forward, backward into param.grad.
        Returns the mean loss; skips backward when the loss is non-finite
        so the trainer can abort with diagnostics."""
        root = dc.bce_loss(self._forward_graph(lids, qids),
                           np.asarray(scores, dtype=np.float64).reshape(-1, 1))
        loss = float(dc.evaluate(root).flat[0])
        if math.isfinite(loss):
            dc.backward(root)
        return loss

    def predict(self, lids, qids) -> np.ndarray:
        raise NotImplementedError

    def learner_traits(self) -> np.ndarray:
        raise NotImplementedError

    def question_traits(self) -> np.ndarray:
        raise NotImplementedError

    def state_arrays(self) -> dict:
        """Non-parameter state a checkpoint must carry (may be empty)."""
        return {}

    def load_state_arrays(self, arrays: dict) -> None:
        pass


def _mlp_sigmoid(x, layers):
    """Plain numpy forward through (weight, bias) pairs with sigmoid after
    each layer; mirrors the graph ops exactly."""
    h = x
    for w, b in layers:
        h = sigmoid_values(h @ w.value + b.value)
    return h


class IdcdmModel(CDModel):
    """Response-vector diagnosis with a monotone learner network, a free
    question network, and a subtraction-based prediction head.

    encoder=False swaps the diagnostic networks for free per-entity
    embeddings; monotonic=False drops the non-negativity constraint.
    """

    def __init__(self, n_learners, n_questions, n_concepts, q_entries,
                 config: ModelConfig | None = None, seed: int = 0,
                 monotonic: bool = True, encoder: bool = True, name: str = "idcdm"):
        super().__init__(n_learners, n_questions, n_concepts, q_entries)
        self.config = config or ModelConfig()
        self.monotonic = bool(monotonic)
        self.encoder = bool(encoder)
        self.name = name
        cfg = self.config
        rng = np.random.default_rng(seed)
        n, m, k = self.n_learners, self.n_questions, self.n_concepts

        if self.encoder:
            hs, h1, h2 = cfg.hidden_learner, cfg.hidden_question1, cfg.hidden_question2
            self.w1s = self._register(ParamTensor(
                "w1s", dc.xavier_normal_init(m, hs, rng), constrained=self.monotonic))
            self.b1s = self._register(_zeros_bias("b1s", hs))
            self.w2s = self._register(ParamTensor(
                "w2s", dc.xavier_normal_init(hs, k, rng), constrained=self.monotonic))
            self.b2s = self._register(_zeros_bias("b2s", k))
            self.w1e = self._register(ParamTensor("w1e", dc.xavier_normal_init(n, h1, rng)))
            self.b1e = self._register(_zeros_bias("b1e", h1))
            self.w2e = self._register(ParamTensor("w2e", dc.xavier_normal_init(h1, h2, rng)))
            self.b2e = self._register(_zeros_bias("b2e", h2))
            self.w3e = self._register(ParamTensor("w3e", dc.xavier_normal_init(h2, k, rng)))
            self.b3e = self._register(_zeros_bias("b3e", k))
        else:
            self.theta_emb = self._register(ParamTensor(
                "theta_emb", dc.xavier_normal_init(n, k, rng)))
            self.psi_emb = self._register(ParamTensor(
                "psi_emb", dc.xavier_normal_init(m, k, rng)))

        d, d1, d2 = cfg.agg_dim, cfg.pred_hidden1, cfg.pred_hidden2
        pm = cfg.pred_monotonic
        self.wu = self._register(ParamTensor("wu", dc.xavier_normal_init(k, d, rng)))
        self.bu = self._register(_zeros_bias("bu", d))
        self.wv = self._register(ParamTensor("wv", dc.xavier_normal_init(k, d, rng)))
        self.bv = self._register(_zeros_bias("bv", d))
        self.w1c = self._register(ParamTensor(
            "w1c", dc.xavier_normal_init(d, d1, rng), constrained=pm))
        self.b1c = self._register(_zeros_bias("b1c", d1))
        self.w2c = self._register(ParamTensor(
            "w2c", dc.xavier_normal_init(d1, d2, rng), constrained=pm))
        self.b2c = self._register(_zeros_bias("b2c", d2))
        self.w3c = self._register(ParamTensor(
            "w3c", dc.xavier_normal_init(d2, 1, rng), constrained=pm))
        self.b3c = self._register(_zeros_bias("b3c", 1))

        self._xs = None
        self._xe = None
        self._unique_rows_l = None
        self._unique_inv_l = None
        self._unique_rows_q = None
        self._unique_inv_q = None

    # ------------------------------------------------------------ binding

    def bind(self, fit_logs) -> None:
        x = build_response_matrix(fit_logs, self.n_learners, self.n_questions)
        self.bind_matrix(x)

    def bind_matrix(self, x: np.ndarray) -> None:
        """Attach the {-1,0,+1} learner-by-question matrix directly.

        Identical rows are collapsed to one representative before any
        network runs, so equal response data can never diverge, not even
        by a rounding artifact of row position.
        """
        if x.shape != (self.n_learners, self.n_questions):
            raise GraphShapeError(
                f"response matrix {x.shape} vs ({self.n_learners}, {self.n_questions})")
        self._x_int = np.asarray(x, dtype=np.int8)
        self._xs = self._x_int.astype(np.float64)
        self._xe = np.ascontiguousarray(self._xs.T)
        rows_l, inv_l = np.unique(self._xs, axis=0, return_inverse=True)
        rows_q, inv_q = np.unique(self._xe, axis=0, return_inverse=True)
        self._unique_rows_l, self._unique_inv_l = rows_l, inv_l.ravel()
        self._unique_rows_q, self._unique_inv_q = rows_q, inv_q.ravel()

    def _require_bound(self):
        if self.encoder and self._xs is None:
            raise GraphShapeError("model not bound to a fit subset yet")

    # ------------------------------------------------------------ graphs

    def _learner_diag_graph(self, x_node):
        f1 = dc.sigmoid(dc.add_bias(dc.matmul(x_node, dc.param_leaf(self.w1s)),
                                    dc.param_leaf(self.b1s)))
        return dc.sigmoid(dc.add_bias(dc.matmul(f1, dc.param_leaf(self.w2s)),
                                      dc.param_leaf(self.b2s)))

    def _question_diag_graph(self, x_node):
        g1 = dc.sigmoid(dc.add_bias(dc.matmul(x_node, dc.param_leaf(self.w1e)),
                                    dc.param_leaf(self.b1e)))
        g2 = dc.sigmoid(dc.add_bias(dc.matmul(g1, dc.param_leaf(self.w2e)),
                                    dc.param_leaf(self.b2e)))
        return dc.sigmoid(dc.add_bias(dc.matmul(g2, dc.param_leaf(self.w3e)),
                                      dc.param_leaf(self.b3e)))

    def _forward_graph(self, lids, qids) -> dc.Node:
        self._require_bound()
        lids = np.asarray(lids, dtype=np.int64)
        qids = np.asarray(qids, dtype=np.int64)
        uniq_l, inv_l = np.unique(lids, return_inverse=True)
        uniq_q, inv_q = np.unique(qids, return_inverse=True)

        if self.encoder:
            theta_u = self._learner_diag_graph(dc.constant(self._xs[uniq_l]))
            psi_u = self._question_diag_graph(dc.constant(self._xe[uniq_q]))
        else:
            theta_u = dc.sigmoid(dc.matmul(dc.constant(_one_hot(uniq_l, self.n_learners)),
                                           dc.param_leaf(self.theta_emb)))
            psi_u = dc.sigmoid(dc.matmul(dc.constant(_one_hot(uniq_q, self.n_questions)),
                                         dc.param_leaf(self.psi_emb)))

        # expand the per-unique-entity diagnoses to batch rows
        theta = dc.matmul(dc.constant(_one_hot(inv_l, len(uniq_l))), theta_u)
        psi = dc.matmul(dc.constant(_one_hot(inv_q, len(uniq_q))), psi_u)
        q_rows = self.q_float[qids]
        alpha = dc.sigmoid(dc.add_bias(
            dc.matmul(dc.mask(theta, q_rows), dc.param_leaf(self.wu)),
            dc.param_leaf(self.bu)))
        phi = dc.sigmoid(dc.add_bias(
            dc.matmul(dc.mask(psi, q_rows), dc.param_leaf(self.wv)),
            dc.param_leaf(self.bv)))
        h = dc.subtract(alpha, phi)
        h = dc.sigmoid(dc.add_bias(dc.matmul(h, dc.param_leaf(self.w1c)),
                                   dc.param_leaf(self.b1c)))
        h = dc.sigmoid(dc.add_bias(dc.matmul(h, dc.param_leaf(self.w2c)),
                                   dc.param_leaf(self.b2c)))
        return dc.sigmoid(dc.add_bias(dc.matmul(h, dc.param_leaf(self.w3c)),
                                      dc.param_leaf(self.b3c)))

    # ------------------------------------------------------------ numpy side

    def diagnose_learners(self, xs: np.ndarray) -> np.ndarray:
        """Trait vectors for a batch of length-M response vectors."""
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        if xs.shape[1] != self.n_questions:
            raise GraphShapeError(
                f"response vectors have {xs.shape[1]} entries, expected {self.n_questions}")
        if not self.encoder:
            raise ConfigError("free-embedding variant cannot diagnose from vectors")
        return _mlp_sigmoid(xs, [(self.w1s, self.b1s), (self.w2s, self.b2s)])

    def diagnose_learner(self, x) -> np.ndarray:
        return self.diagnose_learners(x)[0]

    def diagnose_questions(self, xs: np.ndarray) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        if xs.shape[1] != self.n_learners:
            raise GraphShapeError(
                f"response vectors have {xs.shape[1]} entries, expected {self.n_learners}")
        if not self.encoder:
            raise ConfigError("free-embedding variant cannot diagnose from vectors")
        return _mlp_sigmoid(
            xs, [(self.w1e, self.b1e), (self.w2e, self.b2e), (self.w3e, self.b3e)])

    def diagnose_question(self, x) -> np.ndarray:
        return self.diagnose_questions(x)[0]

    def predict_from_traits(self, theta, psi, q_row) -> np.ndarray:
        """Prediction head alone: batched trait/param vectors to probability."""
        theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
        psi = np.atleast_2d(np.asarray(psi, dtype=np.float64))
        q_row = np.atleast_2d(np.asarray(q_row, dtype=np.float64))
        k = self.n_concepts
        if theta.shape[1] != k or psi.shape[1] != k or q_row.shape[1] != k:
            raise GraphShapeError(
                f"trait widths {theta.shape[1]}/{psi.shape[1]}/{q_row.shape[1]}, expected {k}")
        alpha = sigmoid_values((theta * q_row) @ self.wu.value + self.bu.value)
        phi = sigmoid_values((psi * q_row) @ self.wv.value + self.bv.value)
        h = _mlp_sigmoid(alpha - phi, [(self.w1c, self.b1c), (self.w2c, self.b2c),
                                       (self.w3c, self.b3c)])
        return h.ravel()

    def _all_traits(self):
        if self.encoder:
            self._require_bound()
            theta_u = self.diagnose_learners(self._unique_rows_l)
            psi_u = self.diagnose_questions(self._unique_rows_q)
            return theta_u[self._unique_inv_l], psi_u[self._unique_inv_q]
        return sigmoid_values(self.theta_emb.value), sigmoid_values(self.psi_emb.value)

    def predict(self, lids, qids) -> np.ndarray:
        lids = np.asarray(lids, dtype=np.int64)
        qids = np.asarray(qids, dtype=np.int64)
        theta, psi = self._all_traits()
        q_rows = self.q_float[qids]
        return self.predict_from_traits(theta[lids], psi[qids], q_rows)

    def learner_traits(self) -> np.ndarray:
        return self._all_traits()[0]

    def question_traits(self) -> np.ndarray:
        return self._all_traits()[1]

    def state_arrays(self) -> dict:
        if self.encoder and self._xs is not None:
            return {"response_matrix": self._x_int}
        return {}

    def load_state_arrays(self, arrays: dict) -> None:
        if "response_matrix" in arrays:
            self.bind_matrix(arrays["response_matrix"])


class NcdmModel(CDModel):
    """Transductive baseline: sigmoid embeddings for traits, difficulty and
    discrimination, combined through a non-negative-weight MLP."""

    def __init__(self, n_learners, n_questions, n_concepts, q_entries,
                 config: ModelConfig | None = None, seed: int = 0,
                 embedding_init: str = "xavier", name: str = "ncdm"):
        super().__init__(n_learners, n_questions, n_concepts, q_entries)
        self.config = config or ModelConfig()
        self.name = name
        if embedding_init not in ("xavier", "constant"):
            raise ConfigError(f"unknown embedding init {embedding_init!r}")
        self.embedding_init = embedding_init
        cfg = self.config
        rng = np.random.default_rng(seed)
        n, m, k = self.n_learners, self.n_questions, self.n_concepts

        def emb(name_, rows, cols):
            if embedding_init == "constant":
                return ParamTensor(name_, np.full((rows, cols), cfg.init_constant))
            return ParamTensor(name_, dc.xavier_normal_init(rows, cols, rng))

        self.trait_emb = self._register(emb("trait_emb", n, k))
        self.diff_emb = self._register(emb("diff_emb", m, k))
        self.disc_emb = self._register(emb("disc_emb", m, 1))
        h1, h2 = cfg.ncdm_hidden1, cfg.ncdm_hidden2
        self.w1 = self._register(ParamTensor(
            "w1", dc.xavier_normal_init(k, h1, rng), constrained=True))
        self.b1 = self._register(_zeros_bias("b1", h1))
        self.w2 = self._register(ParamTensor(
            "w2", dc.xavier_normal_init(h1, h2, rng), constrained=True))
        self.b2 = self._register(_zeros_bias("b2", h2))
        self.w3 = self._register(ParamTensor(
            "w3", dc.xavier_normal_init(h2, 1, rng), constrained=True))
        self.b3 = self._register(_zeros_bias("b3", 1))

    def _forward_graph(self, lids, qids) -> dc.Node:
        lids = np.asarray(lids, dtype=np.int64)
        qids = np.asarray(qids, dtype=np.int64)
        hot_l = dc.constant(_one_hot(lids, self.n_learners))
        hot_q = dc.constant(_one_hot(qids, self.n_questions))
        traits = dc.sigmoid(dc.matmul(hot_l, dc.param_leaf(self.trait_emb)))
        diffs = dc.sigmoid(dc.matmul(hot_q, dc.param_leaf(self.diff_emb)))
        disc = dc.sigmoid(dc.matmul(hot_q, dc.param_leaf(self.disc_emb)))
        gap = dc.mask(dc.subtract(traits, diffs), self.q_float[qids])
        x = dc.elementwise_mul(disc, gap)
        h = dc.sigmoid(dc.add_bias(dc.matmul(x, dc.param_leaf(self.w1)),
                                   dc.param_leaf(self.b1)))
        h = dc.sigmoid(dc.add_bias(dc.matmul(h, dc.param_leaf(self.w2)),
                                   dc.param_leaf(self.b2)))
        return dc.sigmoid(dc.add_bias(dc.matmul(h, dc.param_leaf(self.w3)),
                                      dc.param_leaf(self.b3)))

    def predict(self, lids, qids) -> np.ndarray:
        lids = np.asarray(lids, dtype=np.int64)
        qids = np.asarray(qids, dtype=np.int64)
        traits = sigmoid_values(self.trait_emb.value)[lids]
        diffs = sigmoid_values(self.diff_emb.value)[qids]
        disc = sigmoid_values(self.disc_emb.value)[qids]
        x = disc * (traits - diffs) * self.q_float[qids]
        return _mlp_sigmoid(x, [(self.w1, self.b1), (self.w2, self.b2),
                                (self.w3, self.b3)]).ravel()

    def learner_traits(self) -> np.ndarray:
        return sigmoid_values(self.trait_emb.value)

    def question_traits(self) -> np.ndarray:
        return sigmoid_values(self.diff_emb.value)


class IrtModel(CDModel):
    """Two-parameter logistic baseline with scalar ability."""

    def __init__(self, n_learners, n_questions, n_concepts, q_entries,
                 config: ModelConfig | None = None, seed: int = 0, name: str = "irt"):
        super().__init__(n_learners, n_questions, n_concepts, q_entries)
        self.config = config or ModelConfig()
        self.name = name
        rng = np.random.default_rng(seed)
        self.theta = self._register(ParamTensor(
            "theta", dc.xavier_normal_init(n_learners, 1, rng)))
        self.a = self._register(ParamTensor("a", dc.xavier_normal_init(n_questions, 1, rng)))
        self.b = self._register(ParamTensor("b", dc.xavier_normal_init(n_questions, 1, rng)))

    def _forward_graph(self, lids, qids) -> dc.Node:
        hot_l = dc.constant(_one_hot(lids, self.n_learners))
        hot_q = dc.constant(_one_hot(qids, self.n_questions))
        th = dc.matmul(hot_l, dc.param_leaf(self.theta))
        a = dc.matmul(hot_q, dc.param_leaf(self.a))
        b = dc.matmul(hot_q, dc.param_leaf(self.b))
        return dc.sigmoid(dc.elementwise_mul(a, dc.subtract(th, b)))

    def predict(self, lids, qids) -> np.ndarray:
        th = self.theta.value[np.asarray(lids, dtype=np.int64), 0]
        a = self.a.value[np.asarray(qids, dtype=np.int64), 0]
        b = self.b.value[np.asarray(qids, dtype=np.int64), 0]
        return irt_predict(th, a, b)

    def learner_traits(self) -> np.ndarray:
        return self.theta.value.copy()

    def question_traits(self) -> np.ndarray:
        return np.hstack([self.a.value, self.b.value])


class MirtModel(CDModel):
    """Compensatory multidimensional logistic baseline."""

    def __init__(self, n_learners, n_questions, n_concepts, q_entries,
                 config: ModelConfig | None = None, seed: int = 0, name: str = "mirt"):
        super().__init__(n_learners, n_questions, n_concepts, q_entries)
        self.config = config or ModelConfig()
        self.name = name
        dim = self.config.mirt_dim
        rng = np.random.default_rng(seed)
        self.theta = self._register(ParamTensor(
            "theta", dc.xavier_normal_init(n_learners, dim, rng)))
        self.a = self._register(ParamTensor("a", dc.xavier_normal_init(n_questions, dim, rng)))
        self.b = self._register(ParamTensor("b", dc.xavier_normal_init(n_questions, 1, rng)))

    def _forward_graph(self, lids, qids) -> dc.Node:
        dim = self.config.mirt_dim
        th = dc.matmul(dc.constant(_one_hot(lids, self.n_learners)),
                       dc.param_leaf(self.theta))
        a = dc.matmul(dc.constant(_one_hot(qids, self.n_questions)), dc.param_leaf(self.a))
        b = dc.matmul(dc.constant(_one_hot(qids, self.n_questions)), dc.param_leaf(self.b))
        dot = dc.matmul(dc.elementwise_mul(th, a), dc.constant(np.ones((dim, 1))))
        return dc.sigmoid(dc.subtract(dot, b))

    def predict(self, lids, qids) -> np.ndarray:
        lids = np.asarray(lids, dtype=np.int64)
        qids = np.asarray(qids, dtype=np.int64)
        dot = np.sum(self.theta.value[lids] * self.a.value[qids], axis=1)
        return sigmoid_values(dot - self.b.value[qids, 0])

    def learner_traits(self) -> np.ndarray:
        return self.theta.value.copy()

    def question_traits(self) -> np.ndarray:
        return np.hstack([self.a.value, self.b.value])


class DinaModel(CDModel):
    """Guess/slip baseline with a soft mastery relaxation.

    The product over mastery powers does not fit the shared op set, so this
    model evaluates its forward and analytic gradients in closed form; the
    finite-difference tests cover it like every graph op.
    """

    def __init__(self, n_learners, n_questions, n_concepts, q_entries,
                 config: ModelConfig | None = None, seed: int = 0, name: str = "dina"):
        super().__init__(n_learners, n_questions, n_concepts, q_entries)
        self.config = config or ModelConfig()
        self.name = name
        rng = np.random.default_rng(seed)
        self.mastery = self._register(ParamTensor(
            "mastery", dc.xavier_normal_init(n_learners, n_concepts, rng)))
        self.guess = self._register(ParamTensor(
            "guess", dc.xavier_normal_init(n_questions, 1, rng)))
        self.slip = self._register(ParamTensor(
            "slip", dc.xavier_normal_init(n_questions, 1, rng)))

    def _forward_parts(self, lids, qids):
        m = sigmoid_values(self.mastery.value)[lids]
        q_rows = self.q_float[qids]
        eta = np.exp(np.sum(q_rows * np.log(m), axis=1, keepdims=True))
        g = sigmoid_values(self.guess.value)[qids]
        s = sigmoid_values(self.slip.value)[qids]
        ln_g = np.log(g)
        ln_1ms = np.log1p(-s)
        p = np.exp(eta * ln_1ms + (1.0 - eta) * ln_g)
        return m, q_rows, eta, g, s, ln_g, ln_1ms, p

    def training_loss_backward(self, lids, qids, scores) -> float:
        lids = np.asarray(lids, dtype=np.int64)
        qids = np.asarray(qids, dtype=np.int64)
        r = np.asarray(scores, dtype=np.float64).reshape(-1, 1)
        m, q_rows, eta, g, s, ln_g, ln_1ms, p = self._forward_parts(lids, qids)
        pc = np.clip(p, dc.BCE_CLAMP, 1.0 - dc.BCE_CLAMP)
        loss = float(-np.mean(r * np.log(pc) + (1.0 - r) * np.log1p(-pc)))
        if not math.isfinite(loss):
            return loss
        d_p = (pc - r) / (pc * (1.0 - pc)) / r.size
        d_eta = d_p * p * (ln_1ms - ln_g)
        np.add.at(self.mastery.grad, lids, d_eta * eta * q_rows * (1.0 - m))
        np.add.at(self.guess.grad, qids, d_p * p * (1.0 - eta) * (1.0 - g))
        np.add.at(self.slip.grad, qids, d_p * p * eta * (-s))
        return loss

    def predict(self, lids, qids) -> np.ndarray:
        lids = np.asarray(lids, dtype=np.int64)
        qids = np.asarray(qids, dtype=np.int64)
        return self._forward_parts(lids, qids)[-1].ravel()

    def learner_traits(self) -> np.ndarray:
        return sigmoid_values(self.mastery.value)

    def question_traits(self) -> np.ndarray:
        return np.hstack([sigmoid_values(self.guess.value),
                          sigmoid_values(self.slip.value)])


# ---------------------------------------------------------------- pure forms


def irt_predict(theta, a, b) -> np.ndarray:
    return sigmoid_values(np.asarray(a, dtype=np.float64)
                          * (np.asarray(theta, dtype=np.float64)
                             - np.asarray(b, dtype=np.float64)))


def mirt_predict(theta, a, b) -> float:
    theta = np.asarray(theta, dtype=np.float64).ravel()
    a = np.asarray(a, dtype=np.float64).ravel()
    if theta.shape != a.shape:
        raise GraphShapeError(f"mirt_predict: {theta.shape} vs {a.shape}")
    return float(sigmoid_values(float(theta @ a) - float(b)))


def dina_predict(mastery, q_row, guess, slip) -> float:
    mastery = np.asarray(mastery, dtype=np.float64).ravel()
    q_row = np.asarray(q_row, dtype=np.float64).ravel()
    if mastery.shape != q_row.shape:
        raise GraphShapeError(f"dina_predict: {mastery.shape} vs {q_row.shape}")
    eta = float(np.prod(mastery ** q_row))
    return float(np.exp(eta * np.log1p(-slip) + (1.0 - eta) * np.log(guess)))


def ncdm_predict(trait_logits, diff_logits, disc_logit, q_row, layers) -> float:
    """layers: three (weight, bias) array pairs of the interaction MLP."""
    traits = sigmoid_values(np.asarray(trait_logits, dtype=np.float64).reshape(1, -1))
    diffs = sigmoid_values(np.asarray(diff_logits, dtype=np.float64).reshape(1, -1))
    if traits.shape != diffs.shape:
        raise GraphShapeError(f"ncdm_predict: {traits.shape} vs {diffs.shape}")
    disc = float(sigmoid_values(float(disc_logit)))
    x = disc * (traits - diffs) * np.asarray(q_row, dtype=np.float64).reshape(1, -1)
    h = x
    for w, b in layers:
        h = sigmoid_values(h @ np.asarray(w, dtype=np.float64)
                           + np.asarray(b, dtype=np.float64))
    return float(h.ravel()[0])


def diagnose_all(model: CDModel, fit_logs=None):
    """All learner traits and question parameters, ordered by dense id.
    Passing fit_logs (re)binds first; embedding models ignore the binding."""
    if fit_logs is not None:
        model.bind(fit_logs)
    return model.learner_traits(), model.question_traits()


# ---------------------------------------------------------------- factory


def build_model(name: str, n_learners, n_questions, n_concepts, q_entries,
                config: ModelConfig | None = None, seed: int = 0) -> CDModel:
    key = name.strip().lower()
    common = dict(n_learners=n_learners, n_questions=n_questions,
                  n_concepts=n_concepts, q_entries=q_entries,
                  config=config, seed=seed)
    if key == "idcdm":
        return IdcdmModel(**common, name=key)
    if key == "idcdm-nmono":
        return IdcdmModel(**common, monotonic=False, name=key)
    if key == "idcdm-nenc":
        return IdcdmModel(**common, encoder=False, name=key)
    if key == "ncdm":
        return NcdmModel(**common, name=key)
    if key == "ncdm-const":
        return NcdmModel(**common, embedding_init="constant", name=key)
    if key == "irt":
        return IrtModel(**common, name=key)
    if key == "mirt":
        return MirtModel(**common, name=key)
    if key == "dina":
        return DinaModel(**common, name=key)
    raise ConfigError(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
