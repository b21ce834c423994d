"""Translation embeddings pretrained over the whole triple set.

Subjects, predicates and objects share one d-dimensional space; training
pushes s + p close to o for observed facts and away from corrupted ones via
a margin ranking loss. The trained object vectors are exported as a frozen
lookup table that the ranker consumes but never updates.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .nn import DimensionMismatch, make_rng

EMBEDDING_FORMAT = "esa-transe-v1"


class MissingNode(KeyError):
    pass


@dataclass
class TransEConfig:
    dim: int = 100
    margin: float = 1.0
    learning_rate: float = 0.01
    epochs: int = 1000
    batch_size: int = 512
    negative_samples_per_positive: int = 1
    seed: int = 13

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be positive")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.epochs <= 0:
            raise ValueError("epochs must be positive")


@dataclass
class TranslationEmbeddings:
    node_vectors: np.ndarray
    relation_vectors: np.ndarray
    dim: int
    loss_history: list = field(default_factory=list, repr=False, compare=False)

    def score(self, s_id, p_id, o_id):
        return transe_score(self.node_vectors[s_id], self.relation_vectors[p_id], self.node_vectors[o_id])


def transe_score(s_vec, p_vec, o_vec):
    """Squared L2 distance between s + p and o. Zero iff the translation is exact."""
    s_vec = np.asarray(s_vec, dtype=np.float64)
    p_vec = np.asarray(p_vec, dtype=np.float64)
    o_vec = np.asarray(o_vec, dtype=np.float64)
    if not (s_vec.shape == p_vec.shape == o_vec.shape):
        raise DimensionMismatch(f"shapes differ: {s_vec.shape}, {p_vec.shape}, {o_vec.shape}")
    diff = s_vec + p_vec - o_vec
    return float(np.dot(diff, diff))


def negative_sample(triple, vocab, rng, observed=frozenset(), max_tries=100):
    """Corrupt one side of an id-triple (s, p, o).

    With probability 1/2 the subject is replaced, otherwise the object, by a
    uniformly drawn *different* node id. Corruptions that collide with an
    observed triple are resampled up to `max_tries` times, then accepted.
    `vocab` may be a Vocabulary or a plain node count.
    """
    n_nodes = vocab if isinstance(vocab, int) else vocab.n_nodes
    if n_nodes < 2:
        raise ValueError("need at least 2 nodes to corrupt")
    s, p, o = triple
    corrupt_subject = rng.random() < 0.5
    kept = o if corrupt_subject else s
    original = s if corrupt_subject else o
    candidate = None
    for _ in range(max_tries):
        # uniform over node ids != original, in a single draw
        replacement = int(rng.integers(0, n_nodes - 1))
        if replacement >= original:
            replacement += 1
        candidate = (replacement, p, kept) if corrupt_subject else (kept, p, replacement)
        if candidate not in observed:
            return candidate
    return candidate


def _project_to_unit_ball(vectors):
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    np.maximum(norms, 1.0, out=norms)
    vectors /= norms


def train_transe(triples, vocab, config, log=None):
    """Minimize sum(max(0, margin + d(pos) - d(neg))) with mini-batch SGD.

    `triples` are (s_id, p_id, o_id) rows over `vocab` ids. Node vectors are
    projected back onto the unit ball after every epoch; relation vectors are
    left unconstrained. Fully deterministic for a given config.seed.
    """
    rng = make_rng(config.seed, 1)
    n_nodes = vocab.n_nodes
    n_rel = vocab.n_predicates
    bound = 6.0 / np.sqrt(config.dim)
    node_vectors = rng.uniform(-bound, bound, size=(n_nodes, config.dim))
    relation_vectors = rng.uniform(-bound, bound, size=(n_rel, config.dim))
    _project_to_unit_ball(node_vectors)

    triples = [tuple(int(x) for x in t) for t in triples]
    observed = frozenset(triples)
    order = np.arange(len(triples))
    lr = config.learning_rate
    history = []

    for _ in range(config.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        for start in range(0, len(order), config.batch_size):
            batch = [triples[i] for i in order[start : start + config.batch_size]]
            pos = np.array(batch, dtype=np.int64)
            for _rep in range(config.negative_samples_per_positive):
                neg = np.array(
                    [negative_sample(t, n_nodes, rng, observed) for t in batch], dtype=np.int64
                )
                s, p, o = pos[:, 0], pos[:, 1], pos[:, 2]
                sc, oc = neg[:, 0], neg[:, 2]

                diff_pos = node_vectors[s] + relation_vectors[p] - node_vectors[o]
                diff_neg = node_vectors[sc] + relation_vectors[p] - node_vectors[oc]
                d_pos = np.einsum("ij,ij->i", diff_pos, diff_pos)
                d_neg = np.einsum("ij,ij->i", diff_neg, diff_neg)
                violation = config.margin + d_pos - d_neg
                active = violation > 0
                epoch_loss += float(violation[active].sum())
                if not np.any(active):
                    continue

                g_pos = 2.0 * lr * diff_pos[active]
                g_neg = 2.0 * lr * diff_neg[active]
                np.add.at(node_vectors, s[active], -g_pos)
                np.add.at(node_vectors, o[active], g_pos)
                np.add.at(relation_vectors, p[active], -g_pos)
                np.add.at(node_vectors, sc[active], g_neg)
                np.add.at(node_vectors, oc[active], -g_neg)
                np.add.at(relation_vectors, p[active], g_neg)
        _project_to_unit_ball(node_vectors)
        history.append(epoch_loss)
        if log is not None:
            log(len(history), epoch_loss)

    return TranslationEmbeddings(
        node_vectors=node_vectors, relation_vectors=relation_vectors, dim=config.dim, loss_history=history
    )


def random_embeddings(vocab, dim, seed):
    """Untrained baseline with the same init scheme, for probe comparisons."""
    rng = make_rng(seed, 1)
    bound = 6.0 / np.sqrt(dim)
    node_vectors = rng.uniform(-bound, bound, size=(vocab.n_nodes, dim))
    relation_vectors = rng.uniform(-bound, bound, size=(vocab.n_predicates, dim))
    _project_to_unit_ball(node_vectors)
    return TranslationEmbeddings(node_vectors=node_vectors, relation_vectors=relation_vectors, dim=dim)


class ObjectLookupTable:
    """Frozen per-node object vectors; only ids observed as objects resolve."""

    def __init__(self, vectors, valid_ids):
        self._vectors = np.array(vectors, dtype=np.float64)
        self._vectors.setflags(write=False)
        self._valid = frozenset(int(i) for i in valid_ids)
        self.dim = self._vectors.shape[1]

    def lookup(self, node_id):
        if node_id not in self._valid:
            raise MissingNode(f"node {node_id} never appears as an object")
        return self._vectors[node_id]

    def rows(self, node_ids):
        """Vector block for many object ids at once (all must be valid)."""
        node_ids = np.asarray(node_ids, dtype=np.int64)
        for i in node_ids:
            if int(i) not in self._valid:
                raise MissingNode(f"node {int(i)} never appears as an object")
        return self._vectors[node_ids]

    @property
    def valid_ids(self):
        return self._valid

    def content_hash(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self._vectors).tobytes())
        h.update(",".join(str(i) for i in sorted(self._valid)).encode())
        return h.hexdigest()


def export_object_table(embeddings, vocab):
    """Copy the trained vector of every node that occurs as an object."""
    if not vocab.object_ids:
        raise MissingNode("vocabulary records no object nodes")
    return ObjectLookupTable(embeddings.node_vectors, vocab.object_ids)


def mean_rank(embeddings, triples, sample=None, seed=0):
    """Average rank of the true object among all nodes, lower is better."""
    triples = list(triples)
    if sample is not None and sample < len(triples):
        rng = make_rng(seed, 2)
        picks = rng.choice(len(triples), size=sample, replace=False)
        triples = [triples[i] for i in picks]
    nodes = embeddings.node_vectors
    ranks = []
    for s, p, o in triples:
        query = nodes[s] + embeddings.relation_vectors[p]
        d = np.einsum("ij,ij->i", nodes - query, nodes - query)
        ranks.append(1 + int(np.sum(d < d[o])))
    return float(np.mean(ranks))


def save_embeddings(path, embeddings, config):
    payload = {
        "format": EMBEDDING_FORMAT,
        "dim": embeddings.dim,
        "node_count": int(embeddings.node_vectors.shape[0]),
        "relation_count": int(embeddings.relation_vectors.shape[0]),
        "seed": config.seed,
        "config": asdict(config),
        "node_vectors": [[float(x) for x in row] for row in embeddings.node_vectors],
        "relation_vectors": [[float(x) for x in row] for row in embeddings.relation_vectors],
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n", encoding="utf-8")


def load_embeddings(path, vocab=None):
    """Read an embedding file; validates counts against `vocab` when given."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != EMBEDDING_FORMAT:
        raise ValueError(f"expected format {EMBEDDING_FORMAT!r}, got {payload.get('format')!r}")
    node_vectors = np.array(payload["node_vectors"], dtype=np.float64)
    relation_vectors = np.array(payload["relation_vectors"], dtype=np.float64)
    if node_vectors.shape != (payload["node_count"], payload["dim"]):
        raise ValueError("node vector block does not match header counts")
    if relation_vectors.shape != (payload["relation_count"], payload["dim"]):
        raise ValueError("relation vector block does not match header counts")
    if vocab is not None:
        if payload["node_count"] != vocab.n_nodes or payload["relation_count"] != vocab.n_predicates:
            raise ValueError(
                f"embedding file indexes {payload['node_count']} nodes / {payload['relation_count']} relations, "
                f"vocabulary has {vocab.n_nodes} / {vocab.n_predicates}"
            )
    return TranslationEmbeddings(node_vectors=node_vectors, relation_vectors=relation_vectors, dim=payload["dim"])
