"""Benchmark ingestion: entity descriptions, ground truth, vocabulary, folds.

A benchmark directory is described by a manifest.json:

    {
      "entities": [
        {"id": "1", "source": "dbpedia", "desc": "dbpedia/1/desc.nt",
         "top5": ["dbpedia/1/top5_0.nt", ...5 paths],
         "top10": ["dbpedia/1/top10_0.nt", ...5 paths]},
        ...
      ],
      "splits": "splits.json"   # optional, predefined cross-validation folds
    }

Paths are relative to the manifest's directory. Gold files are N-Triples;
each gold statement is resolved to a triple index inside the entity's
description by exact (predicate IRI, object term) equality, first occurrence
winning when the description contains duplicate facts.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .nn import make_rng
from .ntriples import RdfTerm, Triple, parse_ntriples, term_to_ntriples, triple_to_ntriples

DATASET_FORMAT = "esa-dataset-v1"
SPLITS_FORMAT = "esa-splits-v1"

SOURCE_DBPEDIA = "dbpedia"
SOURCE_LMDB = "lmdb"


class DatasetError(Exception):
    """Base for everything that can go wrong while loading a benchmark."""


class MissingFile(DatasetError):
    pass


class BadManifest(DatasetError):
    pass


class GoldTripleNotInDescription(DatasetError):
    def __init__(self, entity_id, triple):
        self.entity_id = entity_id
        self.triple = triple
        super().__init__(f"entity {entity_id}: gold triple not in description: {triple_to_ntriples(triple)}")


class BadGoldSet(DatasetError):
    pass


class BadSplitFile(DatasetError):
    pass


@dataclass(frozen=True)
class EntityDescription:
    """All facts of one subject, in file order."""

    entity_id: str
    subject: RdfTerm
    triples: tuple
    source: str

    def __post_init__(self):
        if not self.triples:
            raise BadManifest(f"entity {self.entity_id}: empty description")
        if self.source not in (SOURCE_DBPEDIA, SOURCE_LMDB):
            raise BadManifest(f"entity {self.entity_id}: unknown source {self.source!r}")
        for t in self.triples:
            if t.subject != self.subject:
                raise BadManifest(f"entity {self.entity_id}: description mixes subjects")

    def __len__(self):
        return len(self.triples)


@dataclass(frozen=True)
class GroundTruth:
    """Per-entity gold summaries: five users, each a top-5 and a top-10 index set."""

    entity_id: str
    per_user_top5: tuple
    per_user_top10: tuple

    def sets_for(self, k):
        if k == 5:
            return self.per_user_top5
        if k == 10:
            return self.per_user_top10
        raise ValueError(f"k must be 5 or 10, got {k}")


class Vocabulary:
    """Deterministic id maps: predicate IRI <-> id and node term <-> id.

    Nodes are all subjects and all objects, literals included. Ids are
    contiguous from 0 and sorted by the term's canonical serialization, so
    two loads of the same dataset always agree.
    """

    def __init__(self, predicates, nodes, object_ids):
        self.predicates = list(predicates)
        self.nodes = list(nodes)
        self.predicate_index = {iri: i for i, iri in enumerate(self.predicates)}
        self.node_index = {term: i for i, term in enumerate(self.nodes)}
        self.object_ids = frozenset(object_ids)

    @property
    def n_predicates(self):
        return len(self.predicates)

    @property
    def n_nodes(self):
        return len(self.nodes)

    def predicate_id(self, iri):
        return self.predicate_index[iri]

    def node_id(self, term):
        return self.node_index[term]


def build_vocabulary(descriptions):
    """Index every predicate and every node appearing in the descriptions."""
    if not descriptions:
        raise ValueError("no descriptions")
    predicates = set()
    nodes = set()
    objects = set()
    for desc in descriptions:
        for t in desc.triples:
            predicates.add(t.predicate.lexical)
            nodes.add(t.subject)
            nodes.add(t.object)
            objects.add(t.object)
    sorted_nodes = sorted(nodes, key=term_to_ntriples)
    node_index = {term: i for i, term in enumerate(sorted_nodes)}
    return Vocabulary(sorted(predicates), sorted_nodes, (node_index[o] for o in objects))


@dataclass(frozen=True)
class FoldSplit:
    fold_id: int
    train_entity_ids: tuple
    test_entity_ids: tuple


def build_folds(entity_ids, n_folds=5, seed=0, provided_splits=None):
    """Partition entities into cross-validation folds.

    With `provided_splits` (a splits.json path or its parsed payload) the
    predefined assignment is used verbatim; otherwise a seeded shuffle
    followed by a contiguous partition whose fold sizes differ by at most one.
    """
    entity_ids = list(entity_ids)
    if len(set(entity_ids)) != len(entity_ids):
        raise ValueError("duplicate entity ids")
    all_ids = set(entity_ids)

    if provided_splits is not None:
        if isinstance(provided_splits, dict):
            payload = provided_splits
        else:
            path = Path(provided_splits)
            if not path.is_file():
                raise MissingFile(str(path))
            payload = json.loads(path.read_text(encoding="utf-8"))
        if payload.get("format") != SPLITS_FORMAT:
            raise BadSplitFile(f"expected format {SPLITS_FORMAT!r}")
        folds_raw = payload.get("folds")
        if not isinstance(folds_raw, list) or len(folds_raw) != n_folds:
            raise BadSplitFile(f"expected {n_folds} folds")
        seen = set()
        test_sets = []
        for i, fold in enumerate(folds_raw):
            if fold.get("fold_id") != i:
                raise BadSplitFile("fold ids must be 0..n-1 in order")
            test = list(fold.get("test", []))
            if any(e not in all_ids for e in test):
                raise BadSplitFile("split references unknown entity ids")
            if seen.intersection(test) or len(set(test)) != len(test):
                raise BadSplitFile("entity assigned to more than one test fold")
            seen.update(test)
            test_sets.append(test)
        if seen != all_ids:
            raise BadSplitFile("splits do not cover every entity exactly once")
    else:
        order = list(entity_ids)
        perm = make_rng(seed, 101).permutation(len(order))
        shuffled = [order[i] for i in perm]
        base = len(shuffled) // n_folds
        extra = len(shuffled) % n_folds
        test_sets = []
        pos = 0
        for i in range(n_folds):
            size = base + (1 if i < extra else 0)
            test_sets.append(shuffled[pos : pos + size])
            pos += size

    folds = []
    for i, test in enumerate(test_sets):
        test_set = set(test)
        train = tuple(e for e in entity_ids if e not in test_set)
        folds.append(FoldSplit(fold_id=i, train_entity_ids=train, test_entity_ids=tuple(test)))
    return folds


def _read_triples(path):
    if not path.is_file():
        raise MissingFile(str(path))
    return parse_ntriples(path)


def _resolve_gold(entity_id, desc, gold_triples, expected_size):
    """Map gold statements to description indices by (predicate, object)."""
    pair_to_index = {}
    for i, t in enumerate(desc.triples):
        key = (t.predicate.lexical, t.object)
        pair_to_index.setdefault(key, i)
    indices = []
    for g in gold_triples:
        key = (g.predicate.lexical, g.object)
        idx = pair_to_index.get(key)
        if idx is None:
            raise GoldTripleNotInDescription(entity_id, g)
        indices.append(idx)
    unique = frozenset(indices)
    if len(unique) != expected_size:
        raise BadGoldSet(
            f"entity {entity_id}: gold set resolves to {len(unique)} distinct triples, expected {expected_size}"
        )
    return unique


def load_esbm(root_dir, shuffle_seed=None):
    """Load a benchmark directory into (descriptions, ground_truths).

    `shuffle_seed`, when given, deterministically permutes each entity's
    triple order before gold resolution; the default keeps file order.
    """
    root = Path(root_dir)
    manifest_path = root / "manifest.json"
    if not manifest_path.is_file():
        raise MissingFile(str(manifest_path))
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise BadManifest(f"manifest.json is not valid JSON: {exc}") from None
    entries = manifest.get("entities")
    if not isinstance(entries, list) or not entries:
        raise BadManifest("manifest has no entities")

    shuffle_rng = make_rng(shuffle_seed, 17) if shuffle_seed is not None else None

    descriptions = []
    ground_truths = []
    seen_ids = set()
    for entry in entries:
        try:
            entity_id = str(entry["id"])
            source = entry["source"]
            desc_rel = entry["desc"]
            top5_rel = list(entry["top5"])
            top10_rel = list(entry["top10"])
        except (KeyError, TypeError) as exc:
            raise BadManifest(f"bad entity entry: {exc}") from None
        if entity_id in seen_ids:
            raise BadManifest(f"duplicate entity id {entity_id}")
        seen_ids.add(entity_id)
        if len(top5_rel) != 5 or len(top10_rel) != 5:
            raise BadManifest(f"entity {entity_id}: expected 5 gold files per k")

        triples = _read_triples(root / desc_rel)
        if not triples:
            raise BadManifest(f"entity {entity_id}: empty description file {desc_rel}")
        if shuffle_rng is not None:
            triples = [triples[i] for i in shuffle_rng.permutation(len(triples))]
        desc = EntityDescription(
            entity_id=entity_id,
            subject=triples[0].subject,
            triples=tuple(triples),
            source=source,
        )
        top5 = tuple(_resolve_gold(entity_id, desc, _read_triples(root / rel), 5) for rel in top5_rel)
        top10 = tuple(_resolve_gold(entity_id, desc, _read_triples(root / rel), 10) for rel in top10_rel)
        descriptions.append(desc)
        ground_truths.append(GroundTruth(entity_id=entity_id, per_user_top5=top5, per_user_top10=top10))
    return descriptions, ground_truths


class Dataset:
    """Loaded benchmark bundle: descriptions, ground truth, vocabulary.

    `provided_splits` holds the benchmark's predefined fold assignment
    (the parsed splits payload) when the manifest ships one.
    """

    def __init__(self, descriptions, ground_truths, vocabulary, provided_splits=None):
        self.descriptions = list(descriptions)
        self.ground_truths = {gt.entity_id: gt for gt in ground_truths}
        self.vocabulary = vocabulary
        self.provided_splits = provided_splits
        self.by_id = {d.entity_id: d for d in self.descriptions}
        self.by_subject = {}
        for d in self.descriptions:
            self.by_subject.setdefault(d.subject.lexical, d)

    @property
    def entity_ids(self):
        return [d.entity_id for d in self.descriptions]

    def ground_truth(self, entity_id):
        return self.ground_truths[entity_id]

    def lookup(self, key):
        """Find a description by entity id or by subject IRI."""
        desc = self.by_id.get(str(key))
        if desc is None:
            desc = self.by_subject.get(str(key))
        if desc is None:
            raise KeyError(f"no entity with id or subject {key!r}")
        return desc

    def all_triples(self):
        for d in self.descriptions:
            yield from d.triples

    def id_triples(self):
        """All triples as (subject_id, predicate_id, object_id) rows."""
        vocab = self.vocabulary
        rows = []
        for d in self.descriptions:
            for t in d.triples:
                rows.append((vocab.node_id(t.subject), vocab.predicate_id(t.predicate.lexical), vocab.node_id(t.object)))
        return rows


def load_dataset_dir(root_dir, shuffle_seed=None):
    descriptions, gts = load_esbm(root_dir, shuffle_seed=shuffle_seed)
    root = Path(root_dir)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    splits = None
    if manifest.get("splits"):
        splits_path = root / manifest["splits"]
        if not splits_path.is_file():
            raise MissingFile(str(splits_path))
        splits = json.loads(splits_path.read_text(encoding="utf-8"))
        build_folds([d.entity_id for d in descriptions],
                    n_folds=len(splits.get("folds", [])), provided_splits=splits)
    return Dataset(descriptions, gts, build_vocabulary(descriptions), provided_splits=splits)


def _term_to_dict(term):
    return {
        "kind": term.kind,
        "lexical": term.lexical,
        "language_tag": term.language_tag,
        "datatype_iri": term.datatype_iri,
    }


def _term_from_dict(d):
    return RdfTerm(d["kind"], d["lexical"], d.get("language_tag"), d.get("datatype_iri"))


def save_dataset(dataset, path, run_config=None):
    """Write the canonical single-file dump (vocabulary + descriptions + gold)."""
    payload = {
        "format": DATASET_FORMAT,
        "run_config": run_config or {},
        "splits": dataset.provided_splits,
        "vocabulary": {
            "predicates": dataset.vocabulary.predicates,
            "nodes": [_term_to_dict(t) for t in dataset.vocabulary.nodes],
            "object_ids": sorted(dataset.vocabulary.object_ids),
        },
        "entities": [
            {
                "id": d.entity_id,
                "source": d.source,
                "subject": _term_to_dict(d.subject),
                "triples": [
                    {
                        "predicate": t.predicate.lexical,
                        "object": _term_to_dict(t.object),
                    }
                    for t in d.triples
                ],
                "top5": [sorted(s) for s in dataset.ground_truths[d.entity_id].per_user_top5],
                "top10": [sorted(s) for s in dataset.ground_truths[d.entity_id].per_user_top10],
            }
            for d in dataset.descriptions
        ],
    }
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_dataset(path):
    """Read a dump written by save_dataset."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    payload = json.loads(path.read_text(encoding="utf-8"))
    if payload.get("format") != DATASET_FORMAT:
        raise BadManifest(f"expected format {DATASET_FORMAT!r}, got {payload.get('format')!r}")
    vocab = Vocabulary(
        payload["vocabulary"]["predicates"],
        [_term_from_dict(d) for d in payload["vocabulary"]["nodes"]],
        payload["vocabulary"]["object_ids"],
    )
    provided_splits = payload.get("splits")
    descriptions = []
    gts = []
    for e in payload["entities"]:
        subject = _term_from_dict(e["subject"])
        triples = tuple(
            Triple(subject, RdfTerm.iri(t["predicate"]), _term_from_dict(t["object"])) for t in e["triples"]
        )
        descriptions.append(
            EntityDescription(entity_id=e["id"], subject=subject, triples=triples, source=e["source"])
        )
        gts.append(
            GroundTruth(
                entity_id=e["id"],
                per_user_top5=tuple(frozenset(s) for s in e["top5"]),
                per_user_top10=tuple(frozenset(s) for s in e["top10"]),
            )
        )
    return Dataset(descriptions, gts, vocab, provided_splits=provided_splits)
