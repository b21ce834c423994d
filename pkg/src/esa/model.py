"""The ranking network: per-triple embedding, BiLSTM encoder, attention head.

Per entity, triple i becomes x_i = concat(predicate_row, object_vector); the
predicate rows are trainable, object vectors come from the frozen translation
lookup. Two independent LSTM chains scan the triple sequence in opposite
directions, each step's outputs are concatenated into h_i, and the query
state h_s = concat(forward output at the last step, backward output at the
first position) scores every h_i by dot product. Softmax over the scores is
the machine attention vector; cross-entropy against the gold attention vector
is the training loss.

All gradients are derived by hand (see _scan_backward); the finite-difference
checker in esa.nn guards them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .nn import DimensionMismatch, Parameter, cross_entropy, make_rng, sigmoid, softmax
from .transe import MissingNode, export_object_table

MODEL_FORMAT = "esa-model-v1"

UnknownObject = MissingNode


class UnknownPredicate(KeyError):
    pass


class KTooLarge(ValueError):
    pass


class EmptyEntity(ValueError):
    pass


@dataclass
class EsaConfig:
    d_p: int = 100
    d_h: int = 100
    optimizer: str = "adam"
    learning_rate: float = 1e-4
    epochs: int = 200
    patience: int = 20
    init_scale: float = 0.08

    def __post_init__(self):
        if min(self.d_p, self.d_h) <= 0:
            raise ValueError("dimensions must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


class EntityInputs(NamedTuple):
    entity_id: str
    p_ids: np.ndarray
    o_ids: np.ndarray


def entity_inputs(description, vocab):
    """Resolve a description to (predicate id, object id) arrays."""
    p_ids = np.array([vocab.predicate_id(t.predicate.lexical) for t in description.triples], dtype=np.int64)
    o_ids = np.array([vocab.node_id(t.object) for t in description.triples], dtype=np.int64)
    return EntityInputs(description.entity_id, p_ids, o_ids)


def embed_triple(p_id, o_id, predicate_table, object_table):
    """x = concat(predicate row, frozen object vector)."""
    table = predicate_table.value if isinstance(predicate_table, Parameter) else predicate_table
    if not (0 <= p_id < table.shape[0]):
        raise UnknownPredicate(f"predicate id {p_id} out of range")
    return np.concatenate([table[p_id], object_table.lookup(int(o_id))])


class LstmDirection:
    """One LSTM chain. Gate rows are stacked [input, forget, output, candidate]."""

    def __init__(self, name, input_dim, hidden_dim, rng, init_scale):
        s = init_scale
        self.name = name
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.W = Parameter(f"{name}.W", rng.uniform(-s, s, size=(4 * hidden_dim, input_dim)))
        self.U = Parameter(f"{name}.U", rng.uniform(-s, s, size=(4 * hidden_dim, hidden_dim)))
        self.b = Parameter(f"{name}.b", rng.uniform(-s, s, size=4 * hidden_dim))

    def parameters(self):
        return [self.W, self.U, self.b]


def lstm_cell(x, h_prev, c_prev, direction):
    """One step: i,f,o = sigmoid gates, g = tanh candidate, c = f*c_prev + i*g, h = o*tanh(c)."""
    dh = direction.hidden_dim
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.asarray(h_prev, dtype=np.float64)
    c_prev = np.asarray(c_prev, dtype=np.float64)
    if x.shape != (direction.input_dim,) or h_prev.shape != (dh,) or c_prev.shape != (dh,):
        raise DimensionMismatch(
            f"expected x({direction.input_dim},), h_prev({dh},), c_prev({dh},); "
            f"got {x.shape}, {h_prev.shape}, {c_prev.shape}"
        )
    z = direction.W.value @ x + direction.U.value @ h_prev + direction.b.value
    i = sigmoid(z[:dh])
    f = sigmoid(z[dh : 2 * dh])
    o = sigmoid(z[2 * dh : 3 * dh])
    g = np.tanh(z[3 * dh :])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


class _ScanCache:
    __slots__ = ("X", "gates", "C", "TC", "H")

    def __init__(self, X, gates, C, TC, H):
        self.X = X
        self.gates = gates
        self.C = C
        self.TC = TC
        self.H = H


def _scan(direction, X_scan):
    """Run one chain over the whole sequence, keeping what backward needs."""
    dh = direction.hidden_dim
    n = X_scan.shape[0]
    A = X_scan @ direction.W.value.T + direction.b.value
    U = direction.U.value
    gates = np.empty((n, 4 * dh))
    C = np.empty((n, dh))
    TC = np.empty((n, dh))
    H = np.empty((n, dh))
    h = np.zeros(dh)
    c = np.zeros(dh)
    z = np.empty(4 * dh)
    with np.errstate(over="ignore"):  # exp overflow saturates the gate to 0, which is correct
        for t in range(n):
            np.matmul(U, h, out=z)
            z += A[t]
            act = gates[t]
            np.exp(-z[: 3 * dh], out=act[: 3 * dh])
            act[: 3 * dh] += 1.0
            np.divide(1.0, act[: 3 * dh], out=act[: 3 * dh])
            np.tanh(z[3 * dh :], out=act[3 * dh :])
            c = act[dh : 2 * dh] * c + act[:dh] * act[3 * dh :]
            tc = np.tanh(c)
            h = act[2 * dh : 3 * dh] * tc
            C[t] = c
            TC[t] = tc
            H[t] = h
    return _ScanCache(X_scan, gates, C, TC, H)


def _scan_backward(direction, cache, dH_out):
    """BPTT through one chain; accumulates into the direction's grads.

    `dH_out` holds the loss gradient on each step's output, in scan order.
    Returns the gradient on the scan-order inputs.
    """
    dh = direction.hidden_dim
    n = dH_out.shape[0]
    gates, C, TC = cache.gates, cache.C, cache.TC
    dA = np.empty((n, 4 * dh))
    Ut = direction.U.value.T

    # everything without a sequential dependency is precomputed in bulk:
    # gate derivatives (s(1-s) = s - s^2, tanh' = 1 - g^2), o*(1-tanh(c)^2),
    # and the shifted cell/hidden histories
    deriv = gates - gates * gates
    deriv[:, 3 * dh :] += 1.0 - gates[:, 3 * dh :]
    o_tc = gates[:, 2 * dh : 3 * dh] * (1.0 - TC * TC)
    C_prev = np.vstack([np.zeros((1, dh)), C[:-1]])
    H_prev = np.vstack([np.zeros((1, dh)), cache.H[:-1]])

    dht = np.empty(dh)
    dc = np.zeros(dh)
    dh_next = np.zeros(dh)
    for t in range(n - 1, -1, -1):
        act = gates[t]
        np.add(dH_out[t], dh_next, out=dht)
        dc += dht * o_tc[t]  # entering value is dc_{t+1} * f_{t+1}
        row = dA[t]
        np.multiply(dc, act[3 * dh :], out=row[:dh])
        np.multiply(dc, C_prev[t], out=row[dh : 2 * dh])
        np.multiply(dht, TC[t], out=row[2 * dh : 3 * dh])
        np.multiply(dc, act[:dh], out=row[3 * dh :])
        row *= deriv[t]
        dc *= act[dh : 2 * dh]  # becomes the next step's carried cell gradient
        dh_next = Ut @ row
    direction.W.grad += dA.T @ cache.X
    direction.U.grad += dA.T @ H_prev
    direction.b.grad += dA.sum(axis=0)
    return dA @ direction.W.value


@dataclass
class EncodedEntity:
    h: np.ndarray  # (n, 2*d_h), h_i = concat(forward_i, backward_i)
    h_s: np.ndarray  # (2*d_h,) query state
    _fwd: _ScanCache = field(repr=False, default=None)
    _bwd: _ScanCache = field(repr=False, default=None)


def bilstm_encode(X, fwd, bwd):
    """Encode inputs X (n, d_p+d_o) with both chains; zero initial states."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise EmptyEntity("need at least one triple to encode")
    fwd_cache = _scan(fwd, X)
    bwd_cache = _scan(bwd, X[::-1])
    h = np.concatenate([fwd_cache.H, bwd_cache.H[::-1]], axis=1)
    h_s = np.concatenate([fwd_cache.H[-1], bwd_cache.H[-1]])
    return EncodedEntity(h=h, h_s=h_s, _fwd=fwd_cache, _bwd=bwd_cache)


@dataclass
class AttentionResult:
    alpha: np.ndarray
    scores: np.ndarray

    def topk(self, k):
        return topk_indices(self.alpha, k)


def attention_forward(encoded):
    """score_i = h_s . h_i, attention = softmax(scores)."""
    scores = encoded.h @ encoded.h_s
    return AttentionResult(alpha=softmax(scores), scores=scores)


def esa_loss(alpha, gold_alpha):
    """Cross-entropy of the machine attention against the gold target."""
    return cross_entropy(gold_alpha, alpha)


def topk_indices(alpha, k):
    """Indices of the k largest entries, descending, ties by lower index."""
    alpha = np.asarray(alpha)
    if k > alpha.size:
        raise KTooLarge(f"k={k} exceeds {alpha.size} triples")
    order = np.argsort(-alpha, kind="stable")
    return [int(i) for i in order[:k]]


class EsaModel:
    """Trainable parameters plus the frozen object lookup."""

    def __init__(self, n_predicates, object_table, config, seed):
        self.config = config
        self.seed = seed
        self.n_predicates = n_predicates
        self.object_table = object_table
        self.d_o = object_table.dim
        input_dim = config.d_p + self.d_o
        rng = make_rng(seed, 3)
        s = config.init_scale
        self.predicate_table = Parameter("predicates", rng.uniform(-s, s, size=(n_predicates, config.d_p)))
        self.fwd = LstmDirection("forward", input_dim, config.d_h, rng, s)
        self.bwd = LstmDirection("backward", input_dim, config.d_h, rng, s)

    def parameters(self):
        return [self.predicate_table] + self.fwd.parameters() + self.bwd.parameters()

    def zero_grads(self):
        for p in self.parameters():
            p.zero_grad()

    def inputs_matrix(self, inputs):
        if np.any(inputs.p_ids < 0) or np.any(inputs.p_ids >= self.n_predicates):
            raise UnknownPredicate(f"entity {inputs.entity_id}: predicate id out of range")
        return np.concatenate(
            [self.predicate_table.value[inputs.p_ids], self.object_table.rows(inputs.o_ids)], axis=1
        )

    def encode(self, inputs):
        return bilstm_encode(self.inputs_matrix(inputs), self.fwd, self.bwd)

    def attention(self, inputs):
        return attention_forward(self.encode(inputs))

    def loss(self, inputs, gold_alpha):
        return esa_loss(self.attention(inputs).alpha, gold_alpha)

    def loss_and_backward(self, inputs, gold_alpha):
        """Forward, loss, and gradient accumulation into every parameter."""
        encoded = self.encode(inputs)
        att = attention_forward(encoded)
        loss = esa_loss(att.alpha, gold_alpha)

        n = att.alpha.size
        dh = self.config.d_h
        g_scores = att.alpha - gold_alpha  # d(loss)/d(scores) through the softmax
        dH = np.outer(g_scores, encoded.h_s)
        dHs = encoded.h.T @ g_scores
        dH_fwd = dH[:, :dh].copy()
        dH_fwd[n - 1] += dHs[:dh]
        dH_bwd_scan = dH[:, dh:][::-1].copy()
        dH_bwd_scan[n - 1] += dHs[dh:]

        dX = _scan_backward(self.fwd, encoded._fwd, dH_fwd)
        dX = dX + _scan_backward(self.bwd, encoded._bwd, dH_bwd_scan)[::-1]
        np.add.at(self.predicate_table.grad, inputs.p_ids, dX[:, : self.config.d_p])
        return loss

    def rank_topk(self, inputs, k):
        return topk_indices(self.attention(inputs).alpha, k)


def rank_topk(model, inputs, k):
    return model.rank_topk(inputs, k)


def train_epoch(model, training_pairs, optimizer, rng):
    """One pass over (EntityInputs, gold_alpha) pairs in rng-shuffled order.

    One optimizer step per entity; returns the mean pre-update loss.
    """
    order = rng.permutation(len(training_pairs))
    params = model.parameters()
    total = 0.0
    for idx in order:
        inputs, gold_alpha = training_pairs[idx]
        total += model.loss_and_backward(inputs, gold_alpha)
        optimizer.step(params)
    return total / len(training_pairs)


def save_model(path, model, epoch=0):
    blobs = [[p.name, [[float(x) for x in row] for row in np.atleast_2d(p.value)]] for p in model.parameters()]
    payload = {
        "format": MODEL_FORMAT,
        "d_p": model.config.d_p,
        "d_o": model.d_o,
        "d_h": model.config.d_h,
        "n_predicates": model.n_predicates,
        "seed": model.seed,
        "epoch": epoch,
        "config": asdict(model.config),
        "parameters": blobs,
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path, vocab, embeddings):
    """Rebuild a checkpoint; dims are cross-checked against vocab and embeddings."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != MODEL_FORMAT:
        raise ValueError(f"expected format {MODEL_FORMAT!r}, got {payload.get('format')!r}")
    if payload["n_predicates"] != vocab.n_predicates:
        raise ValueError(
            f"checkpoint indexes {payload['n_predicates']} predicates, vocabulary has {vocab.n_predicates}"
        )
    if payload["d_o"] != embeddings.dim:
        raise ValueError(f"checkpoint expects object dim {payload['d_o']}, embedding file has {embeddings.dim}")
    config = EsaConfig(**{k: v for k, v in payload["config"].items()})
    model = EsaModel(payload["n_predicates"], export_object_table(embeddings, vocab), config, payload["seed"])
    for param, (name, rows) in zip(model.parameters(), payload["parameters"]):
        if param.name != name:
            raise ValueError(f"parameter order mismatch: expected {param.name}, file has {name}")
        value = np.array(rows, dtype=np.float64)
        value = value.reshape(param.value.shape)
        param.value[...] = value
    return model
