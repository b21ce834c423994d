"""F-measure and MAP scoring, the frequency baseline, and 5-fold cross-validation.

Aggregation convention: every metric is first averaged over the five users of
one entity, then macro-averaged over entities. The ALL rows therefore weight
every entity equally rather than averaging the two subset means.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gold import build_gold_attention
from .kg import SOURCE_DBPEDIA, SOURCE_LMDB, build_folds
from .model import EsaModel, entity_inputs, topk_indices, train_epoch
from .nn import make_optimizer, make_rng
from .transe import export_object_table

METRICS_FORMAT = "esa-metrics-v1"

SUBSETS = (SOURCE_DBPEDIA, SOURCE_LMDB, "all")


class SizeMismatch(ValueError):
    pass


class EmptyGold(ValueError):
    pass


def fmeasure_entity(selected, ground_truth, k):
    """Mean over users of |selected ∩ gold_u| / k.

    Selected and gold sets both have size k, so precision equals recall and
    the harmonic mean collapses to the overlap fraction.
    """
    selected = frozenset(selected)
    if len(selected) != k:
        raise SizeMismatch(f"selected size {len(selected)} != k={k}")
    scores = []
    for gold in ground_truth.sets_for(k):
        if len(gold) != k:
            raise SizeMismatch(f"gold set size {len(gold)} != k={k}")
        scores.append(len(selected & gold) / k)
    return float(np.mean(scores))


def average_precision(ranking, gold):
    """AP over a full ranking: mean of precision-at-rank at each gold hit."""
    if not gold:
        raise EmptyGold("gold set is empty")
    gold = frozenset(gold)
    hits = 0
    total = 0.0
    for pos, idx in enumerate(ranking, start=1):
        if idx in gold:
            hits += 1
            total += hits / pos
    return total / len(gold)


def map_entity(ranking, ground_truth, k):
    """Mean of per-user average precision, with the k-sized gold sets."""
    return float(np.mean([average_precision(ranking, gold) for gold in ground_truth.sets_for(k)]))


def predicate_frequencies(descriptions):
    """Global predicate occurrence counts over a training corpus."""
    counts = Counter()
    for desc in descriptions:
        for t in desc.triples:
            counts[t.predicate.lexical] += 1
    return counts


def frequency_baseline(description, frequencies):
    """Rank triples by descending global predicate frequency, ties by index."""
    keyed = [(-frequencies.get(t.predicate.lexical, 0), i) for i, t in enumerate(description.triples)]
    keyed.sort()
    return [i for _, i in keyed]


@dataclass
class MetricsReport:
    """Aggregated results plus per-fold breakdown; serializes deterministically."""

    seed: int
    config: dict
    results: dict  # system -> metric -> subset -> str(k) -> value
    delta_vs_baseline: dict  # metric -> subset -> str(k) -> value
    folds: list = field(default_factory=list)

    def value(self, system, metric, subset, k):
        return self.results[system][metric][subset][str(k)]

    def to_dict(self):
        return {
            "format": METRICS_FORMAT,
            "seed": self.seed,
            "config": self.config,
            "results": self.results,
            "delta_vs_baseline": self.delta_vs_baseline,
            "folds": self.folds,
        }

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @property
    def ks(self):
        any_system = next(iter(self.results.values()))
        return sorted(int(k) for k in any_system["f_measure"]["all"])

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["system", "metric", "subset", "k", "value"])
            for system in sorted(self.results):
                per_metric = self.results[system]
                for metric in sorted(per_metric):
                    for subset in SUBSETS:
                        for k in self.ks:
                            v = per_metric[metric][subset][str(k)]
                            writer.writerow([system, metric, subset, k, "" if v is None else f"{v:.17g}"])


def _aggregate(records):
    """records: list of dicts with source, k, system, f_measure, map."""
    results = {}
    systems = sorted({r["system"] for r in records})
    ks = sorted({r["k"] for r in records})
    for system in systems:
        results[system] = {"f_measure": {}, "map": {}}
        for subset in SUBSETS:
            results[system]["f_measure"][subset] = {}
            results[system]["map"][subset] = {}
            for k in ks:
                rows = [
                    r
                    for r in records
                    if r["system"] == system and r["k"] == k and (subset == "all" or r["source"] == subset)
                ]
                results[system]["f_measure"][subset][str(k)] = float(np.mean([r["f_measure"] for r in rows])) if rows else None
                results[system]["map"][subset][str(k)] = float(np.mean([r["map"] for r in rows])) if rows else None
    return results


def _deltas(results, system="esa", baseline="frequency_baseline"):
    deltas = {}
    ks = sorted(int(k) for k in results[system]["f_measure"]["all"])
    for metric in ("f_measure", "map"):
        deltas[metric] = {}
        for subset in SUBSETS:
            deltas[metric][subset] = {}
            for k in ks:
                a = results[system][metric][subset][str(k)]
                b = results[baseline][metric][subset][str(k)]
                deltas[metric][subset][str(k)] = None if a is None or b is None else a - b
    return deltas


def train_fold_model(dataset, object_table, train_ids, config, k, gold_mode, seed, log=None):
    """Train one fold's model with early stopping on a validation slice.

    10% of the training entities (at least one) are held out; training stops
    once the validation F-measure has not improved for `config.patience`
    epochs, and the best-scoring parameters are restored.
    """
    vocab = dataset.vocabulary
    rng = make_rng(seed, 5)
    train_ids = list(train_ids)
    perm = rng.permutation(len(train_ids))
    n_val = max(1, len(train_ids) // 10) if len(train_ids) > 1 else 0
    val_ids = [train_ids[i] for i in perm[:n_val]]
    fit_ids = [train_ids[i] for i in perm[n_val:]]

    mode = "both" if gold_mode == "both" else k
    pairs = []
    for eid in fit_ids:
        desc = dataset.by_id[eid]
        gold = build_gold_attention(desc, dataset.ground_truth(eid), mode)
        pairs.append((entity_inputs(desc, vocab), gold.alpha_bar))
    val_entities = [(dataset.by_id[eid], dataset.ground_truth(eid)) for eid in val_ids]

    model = EsaModel(vocab.n_predicates, object_table, config, seed)
    optimizer = make_optimizer(config.optimizer, config.learning_rate)

    def validation_f():
        if not val_entities:
            return 0.0
        scores = []
        for desc, gt in val_entities:
            selected = model.rank_topk(entity_inputs(desc, vocab), k)
            scores.append(fmeasure_entity(selected, gt, k))
        return float(np.mean(scores))

    best_f = -1.0
    best_epoch = 0
    best_params = None
    epochs_run = 0
    for epoch in range(1, config.epochs + 1):
        mean_loss = train_epoch(model, pairs, optimizer, rng)
        epochs_run = epoch
        val_f = validation_f()
        if log is not None:
            log(epoch, mean_loss, val_f)
        if val_f > best_f + 1e-12:
            best_f = val_f
            best_epoch = epoch
            best_params = [p.value.copy() for p in model.parameters()]
        elif val_entities and epoch - best_epoch >= config.patience:
            break
    if best_params is not None:
        for p, v in zip(model.parameters(), best_params):
            p.value[...] = v
    return model, {"epochs_run": epochs_run, "best_epoch": best_epoch, "best_val_f": best_f}


def _score_test_entity(dataset, model, frequencies, eid, k):
    desc = dataset.by_id[eid]
    gt = dataset.ground_truth(eid)
    inputs = entity_inputs(desc, dataset.vocabulary)
    alpha = model.attention(inputs).alpha
    ranking = topk_indices(alpha, len(alpha))
    base_ranking = frequency_baseline(desc, frequencies)
    rows = [
        {
            "entity_id": eid,
            "source": desc.source,
            "k": k,
            "system": "esa",
            "f_measure": fmeasure_entity(set(ranking[:k]), gt, k),
            "map": map_entity(ranking, gt, k),
        },
        {
            "entity_id": eid,
            "source": desc.source,
            "k": k,
            "system": "frequency_baseline",
            "f_measure": fmeasure_entity(set(base_ranking[:k]), gt, k),
            "map": map_entity(base_ranking, gt, k),
        },
    ]
    return rows


def train_fold_models(dataset, object_table, folds, config, seed, ks=(5, 10), gold_mode="per-k", log=None):
    """Train every fold's model(s). Returns ({(fold_id, k): model}, fold_infos).

    With gold_mode "per-k" a separate model is trained per k; with "both" one
    model trained on the combined gold counts serves both k values.
    """
    trained = {}
    fold_infos = []
    for fold in folds:
        info = {"fold_id": fold.fold_id, "test_size": len(fold.test_entity_ids), "training": {}}
        if gold_mode == "both":
            model, stats = train_fold_model(
                dataset, object_table, fold.train_entity_ids, config, ks[0], "both", seed + fold.fold_id, log=log
            )
            for k in ks:
                trained[(fold.fold_id, k)] = model
            info["training"]["both"] = stats
        else:
            for k in ks:
                model, stats = train_fold_model(
                    dataset, object_table, fold.train_entity_ids, config, k, "per-k", seed + fold.fold_id, log=log
                )
                trained[(fold.fold_id, k)] = model
                info["training"][str(k)] = stats
        fold_infos.append(info)
    return trained, fold_infos


def score_models(dataset, folds, trained, seed, config_echo, ks=(5, 10), jobs=1, fold_infos=None):
    """Score trained fold models (and the frequency baseline) on test folds."""
    records = []
    fold_summaries = []
    infos = {i["fold_id"]: i for i in fold_infos} if fold_infos else {}
    for fold in folds:
        frequencies = predicate_frequencies([dataset.by_id[e] for e in fold.train_entity_ids])
        fold_records = []
        for k in ks:
            model = trained[(fold.fold_id, k)]
            if jobs > 1:
                with ThreadPoolExecutor(max_workers=jobs) as pool:
                    chunks = list(
                        pool.map(
                            lambda eid: _score_test_entity(dataset, model, frequencies, eid, k),
                            fold.test_entity_ids,
                        )
                    )
            else:
                chunks = [_score_test_entity(dataset, model, frequencies, eid, k) for eid in fold.test_entity_ids]
            for rows in chunks:
                fold_records.extend(rows)
        summary = dict(infos.get(fold.fold_id, {"fold_id": fold.fold_id, "test_size": len(fold.test_entity_ids)}))
        summary["results"] = _aggregate(fold_records)
        fold_summaries.append(summary)
        records.extend(fold_records)

    results = _aggregate(records)
    return MetricsReport(
        seed=seed,
        config=config_echo,
        results=results,
        delta_vs_baseline=_deltas(results),
        folds=fold_summaries,
    )


def cross_validate(dataset, embeddings, config, seed, n_folds=5, folds=None, ks=(5, 10), gold_mode="per-k", jobs=1, log=None):
    """Train and evaluate over cross-validation folds; returns a MetricsReport.

    The frequency baseline is scored on identical folds.
    """
    if folds is None:
        folds = build_folds(dataset.entity_ids, n_folds=n_folds, seed=seed)
    object_table = export_object_table(embeddings, dataset.vocabulary)
    trained, fold_infos = train_fold_models(dataset, object_table, folds, config, seed, ks, gold_mode, log=log)
    config_echo = dict(config.__dict__) | {"gold_mode": gold_mode, "n_folds": len(folds)}
    return score_models(dataset, folds, trained, seed, config_echo, ks=ks, jobs=jobs, fold_infos=fold_infos)


def oracle_user_fmeasure(dataset, entity_ids, k, user=0):
    """Upper-bound fixture: score user `user`'s own gold set as the summary."""
    scores = []
    for eid in entity_ids:
        gt = dataset.ground_truth(eid)
        scores.append(fmeasure_entity(gt.sets_for(k)[user], gt, k))
    return float(np.mean(scores))
