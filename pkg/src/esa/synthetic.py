"""Deterministic generator of a benchmark-shaped corpus.

Real benchmark data cannot be redistributed with this package, so the test
suite and the demo path run on a generated stand-in with the same layout:
N-Triples descriptions plus five top-5 and five top-10 gold files per entity,
wired together by a manifest.json.

The generator plants learnable structure. Every predicate carries a hidden
salience score; each simulated user ranks an entity's triples by salience
plus user noise and keeps the top 5/10. Salience is decoupled from how often
a predicate occurs, so a plain frequency ranker stays weak while a model that
learns per-predicate weights can do well. Objects are drawn from small
per-predicate pools, which gives the translation embeddings something to fit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .nn import make_rng
from .ntriples import RdfTerm, Triple, triple_to_ntriples

_XSD = "http://www.w3.org/2001/XMLSchema#"

# Predicates present in every entity of a source, with pinned salience:
# a name-like fact users almost always keep, and bookkeeping facts they skip.
_COMMON = {
    "dbpedia": [("name", 2.5), ("label", -0.6), ("type", -1.2), ("subject", -1.6)],
    "lmdb": [("title", 2.5), ("label", -0.6), ("type", -1.2), ("page", -1.6)],
}

_POOL = {
    "dbpedia": [
        "kingdom", "family", "genus", "order", "class", "division", "birthPlace",
        "deathPlace", "occupation", "almaMater", "spouse", "team", "league",
        "position", "city", "country", "region", "population", "area", "elevation",
    ],
    "lmdb": [
        "director", "actor", "producer", "writer", "editor", "music", "runtime",
        "language", "country", "releaseDate", "genre", "studio", "distributor",
        "cinematography", "budget", "rating",
    ],
}

_LITERAL_PREDS = {"name", "title", "label", "runtime", "population", "area", "elevation", "budget", "releaseDate", "rating"}


def _predicate_iri(source, name):
    return f"http://synth.example/{source}/ontology/{name}"


def _resource_iri(source, name):
    return f"http://synth.example/{source}/resource/{name}"


def _object_term(source, pred_name, variant):
    if pred_name in ("name", "title", "label"):
        return RdfTerm.literal(f"{pred_name.capitalize()} {variant}", language_tag="en")
    if pred_name in ("runtime", "population", "area", "elevation", "budget"):
        return RdfTerm.literal(str(int(variant) * 7 + 13), datatype_iri=f"{_XSD}integer")
    if pred_name == "releaseDate":
        return RdfTerm.literal(f"19{50 + int(variant) % 50:02d}-01-01", datatype_iri=f"{_XSD}date")
    if pred_name == "rating":
        return RdfTerm.literal(f"{1 + (int(variant) % 9)}.{int(variant) % 10}")
    return RdfTerm.iri(_resource_iri(source, f"{pred_name}_{variant}"))


def make_benchmark(out_dir, n_dbpedia=125, n_lmdb=50, seed=2024, min_triples=12, max_triples=28, user_noise=0.65):
    """Write a full benchmark directory; returns the manifest path.

    Layout: <out>/<source>/<id>/desc.nt plus top5_0..4.nt and top10_0..4.nt,
    indexed by <out>/manifest.json. Deterministic for a given seed.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed, 11)

    salience = {}
    pools = {}
    for source in ("dbpedia", "lmdb"):
        for name, pinned in _COMMON[source]:
            salience[(source, name)] = pinned
        for name in _POOL[source]:
            salience[(source, name)] = float(rng.normal(0.0, 1.2))
            # small per-predicate object pools so translations are learnable
            pools[(source, name)] = int(rng.integers(3, 12))
        for name, _ in _COMMON[source]:
            pools[(source, name)] = int(rng.integers(3, 12))

    entries = []
    entity_no = 0
    for source, count in (("dbpedia", n_dbpedia), ("lmdb", n_lmdb)):
        pool_names = _POOL[source]
        for _ in range(count):
            entity_no += 1
            entity_id = str(entity_no)
            subject = RdfTerm.iri(_resource_iri(source, f"entity_{entity_id}"))

            pred_names = [name for name, _ in _COMMON[source]]
            n_triples = int(rng.integers(min_triples, max_triples + 1))
            extra = [pool_names[i] for i in rng.permutation(len(pool_names))][: n_triples - len(pred_names)]
            pred_names.extend(extra)
            while len(pred_names) < n_triples:  # reuse a predicate with a new object
                pred_names.append(pool_names[int(rng.integers(0, len(pool_names)))])

            triples = []
            seen_pairs = set()
            for slot, name in enumerate(pred_names):
                if name in ("name", "title"):
                    obj = RdfTerm.literal(f"Entity {entity_id}", language_tag="en")
                elif name == "label" and int(entity_id) % 20 == 0:
                    obj = RdfTerm.blank(f"b{entity_id}")
                else:
                    obj = _object_term(source, name, int(rng.integers(0, pools[(source, name)])))
                if (name, obj) in seen_pairs:  # descriptions must not repeat a fact
                    obj = _object_term(source, name, pools[(source, name)] + slot)
                seen_pairs.add((name, obj))
                triples.append(Triple(subject, RdfTerm.iri(_predicate_iri(source, name)), obj))

            base_scores = np.array([salience[(source, name)] for name in pred_names])
            top5_sets, top10_sets = [], []
            for _user in range(5):
                noisy = base_scores + rng.normal(0.0, user_noise, size=len(triples))
                order = np.argsort(-noisy, kind="stable")
                top5_sets.append(sorted(int(i) for i in order[:5]))
                top10_sets.append(sorted(int(i) for i in order[:10]))

            ent_dir = out / source / entity_id
            ent_dir.mkdir(parents=True, exist_ok=True)
            _write_nt(ent_dir / "desc.nt", triples)
            entry = {
                "id": entity_id,
                "source": source,
                "desc": f"{source}/{entity_id}/desc.nt",
                "top5": [],
                "top10": [],
            }
            for u, sel in enumerate(top5_sets):
                rel = f"{source}/{entity_id}/top5_{u}.nt"
                _write_nt(out / rel, [triples[i] for i in sel])
                entry["top5"].append(rel)
            for u, sel in enumerate(top10_sets):
                rel = f"{source}/{entity_id}/top10_{u}.nt"
                _write_nt(out / rel, [triples[i] for i in sel])
                entry["top10"].append(rel)
            entries.append(entry)

    manifest = {"entities": entries, "splits": None}
    manifest_path = out / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return manifest_path


def _write_nt(path, triples):
    lines = [triple_to_ntriples(t) for t in triples]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
