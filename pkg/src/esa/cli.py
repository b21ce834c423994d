"""Command-line front end.

Pipeline: synth (optional demo data) -> ingest -> pretrain -> train ->
evaluate, plus summarize / export-attention / export-gold for inspecting a
trained model. Exit codes: 0 ok, 1 internal error, 2 usage or input error;
failures print one structured `E_*` line to stderr. Every run echoes its
effective configuration, and identical inputs plus identical --seed produce
hash-identical artifacts.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import evaluation, kg, report, synthetic
from .gold import ZeroTotalCount, build_gold_attention, write_gold_csv
from .kg import (
    BadGoldSet,
    BadManifest,
    BadSplitFile,
    DatasetError,
    GoldTripleNotInDescription,
    MissingFile,
    build_folds,
    load_dataset,
    load_dataset_dir,
    save_dataset,
)
from .model import EsaConfig, KTooLarge, entity_inputs, load_model, save_model
from .ntriples import NTriplesSyntaxError, term_to_ntriples
from .transe import TransEConfig, export_object_table, load_embeddings, save_embeddings, train_transe

FOLDS_FORMAT = "esa-folds-v1"

_ERROR_CODES = [
    (MissingFile, "E_MISSING_INPUT", 2),
    (GoldTripleNotInDescription, "E_GOLD_NOT_IN_DESCRIPTION", 2),
    (BadGoldSet, "E_BAD_GOLD_SET", 2),
    (BadSplitFile, "E_BAD_SPLITS", 2),
    (BadManifest, "E_BAD_MANIFEST", 2),
    (NTriplesSyntaxError, "E_SYNTAX", 2),
    (KTooLarge, "E_K_TOO_LARGE", 2),
    (ZeroTotalCount, "E_ZERO_COUNTS", 2),
    (DatasetError, "E_BAD_INPUT", 2),
    (KeyError, "E_MISSING_INPUT", 2),
    (ValueError, "E_BAD_INPUT", 2),
]


def _handled(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except click.ClickException:
            raise
        except Exception as exc:  # noqa: BLE001 - module boundary
            for exc_type, code, exit_code in _ERROR_CODES:
                if isinstance(exc, exc_type):
                    click.echo(f"{code}: {exc}", err=True)
                    sys.exit(exit_code)
            click.echo(f"E_INTERNAL: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _usage_error(message):
    click.echo(f"E_BAD_FLAG: {message}", err=True)
    sys.exit(2)


def _load_config_file(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise MissingFile(str(p))
    return json.loads(p.read_text(encoding="utf-8"))


def _pick(flag_value, cfg, key, default):
    """Flag beats config file beats default."""
    if flag_value is not None:
        return flag_value
    if key in cfg:
        return cfg[key]
    return default


def _echo_config(command, config):
    click.echo(json.dumps({"command": command, "config": config}, sort_keys=True))


def _embeddable(config):
    """Artifact bytes must depend on inputs and seeds, not on where they are written."""
    return {k: v for k, v in config.items() if k != "out"}


def _write_json(path, payload):
    Path(path).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")


@click.group()
def main():
    """Entity summarization pipeline: ingest, pretrain, train, evaluate."""


@main.command()
@click.option("--out", required=True, type=click.Path())
@click.option("--seed", default=2024, show_default=True, type=int)
@click.option("--dbpedia", default=125, show_default=True, type=int)
@click.option("--lmdb", default=50, show_default=True, type=int)
@click.option("--min-triples", default=12, show_default=True, type=int)
@click.option("--max-triples", default=28, show_default=True, type=int)
@click.option("--user-noise", default=0.65, show_default=True, type=float)
@_handled
def synth(out, seed, dbpedia, lmdb, min_triples, max_triples, user_noise):
    """Generate a benchmark-shaped synthetic corpus for demos and testing."""
    if min_triples < 10:
        _usage_error("--min-triples must be at least 10 (top-10 gold sets need 10 triples)")
    config = {
        "out": str(out), "seed": seed, "dbpedia": dbpedia, "lmdb": lmdb,
        "min_triples": min_triples, "max_triples": max_triples, "user_noise": user_noise,
    }
    _echo_config("synth", config)
    manifest = synthetic.make_benchmark(
        out, n_dbpedia=dbpedia, n_lmdb=lmdb, seed=seed,
        min_triples=min_triples, max_triples=max_triples, user_noise=user_noise,
    )
    click.echo(f"wrote {manifest}")


@main.command()
@click.option("--esbm-dir", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--shuffle-triples", default=None, type=int, help="Permute each entity's triple order with this seed.")
@_handled
def ingest(esbm_dir, out, shuffle_triples):
    """Parse a benchmark directory into the canonical dataset file."""
    config = {"esbm_dir": str(esbm_dir), "out": str(out), "shuffle_triples": shuffle_triples}
    _echo_config("ingest", config)
    dataset = load_dataset_dir(esbm_dir, shuffle_seed=shuffle_triples)
    save_dataset(dataset, out, run_config=_embeddable(config))
    click.echo(
        f"wrote {out}: {len(dataset.descriptions)} entities, "
        f"{dataset.vocabulary.n_predicates} predicates, {dataset.vocabulary.n_nodes} nodes"
    )


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--dim", default=None, type=int)
@click.option("--epochs", default=None, type=int)
@click.option("--margin", default=None, type=float)
@click.option("--lr", default=None, type=float)
@click.option("--batch-size", default=None, type=int)
@click.option("--negatives", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--config", "config_path", default=None, type=click.Path())
@_handled
def pretrain(dataset_path, out, dim, epochs, margin, lr, batch_size, negatives, seed, config_path):
    """Pretrain translation embeddings over the whole dataset."""
    cfg = _load_config_file(config_path)
    values = {
        "dim": _pick(dim, cfg, "dim", 100),
        "epochs": _pick(epochs, cfg, "epochs", 1000),
        "margin": _pick(margin, cfg, "margin", 1.0),
        "learning_rate": _pick(lr, cfg, "learning_rate", 0.01),
        "batch_size": _pick(batch_size, cfg, "batch_size", 512),
        "negative_samples_per_positive": _pick(negatives, cfg, "negatives", 1),
        "seed": _pick(seed, cfg, "seed", 13),
    }
    if values["dim"] <= 0:
        _usage_error("--dim must be positive")
    if values["epochs"] <= 0:
        _usage_error("--epochs must be positive")
    transe_config = TransEConfig(**values)
    _echo_config("pretrain", {"dataset": str(dataset_path), "out": str(out)} | values)
    dataset = load_dataset(dataset_path)
    embeddings = train_transe(dataset.id_triples(), dataset.vocabulary, transe_config)
    save_embeddings(out, embeddings, transe_config)
    click.echo(f"wrote {out}: dim={embeddings.dim}, final epoch loss={embeddings.loss_history[-1]:.6g}")


def _parse_ks(k):
    if k == "both":
        return (5, 10)
    if k in ("5", "10"):
        return (int(k),)
    _usage_error("--k must be 5, 10 or both")


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--embeddings", "embeddings_path", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--k", default=None, help="5, 10 or both  [default: both]")
@click.option("--gold-mode", default=None, type=click.Choice(["per-k", "both"]), help="[default: per-k]")
@click.option("--folds", default=None, type=int, help="[default: 5]")
@click.option("--splits", default=None, type=click.Path(), help="Predefined splits file; overrides seeded folds.")
@click.option("--seed", default=None, type=int)
@click.option("--d-p", default=None, type=int)
@click.option("--d-h", default=None, type=int)
@click.option("--optimizer", default=None, type=click.Choice(["adam", "sgd"]))
@click.option("--lr", default=None, type=float)
@click.option("--epochs", default=None, type=int)
@click.option("--patience", default=None, type=int)
@click.option("--config", "config_path", default=None, type=click.Path())
@_handled
def train(dataset_path, embeddings_path, out, k, gold_mode, folds, splits, seed,
          d_p, d_h, optimizer, lr, epochs, patience, config_path):
    """Train fold models against the gold attention vectors."""
    cfg = _load_config_file(config_path)
    ks = _parse_ks(str(_pick(k, cfg, "k", "both")))
    gold_mode = _pick(gold_mode, cfg, "gold_mode", "per-k")
    folds = _pick(folds, cfg, "folds", 5)
    splits = _pick(splits, cfg, "splits", None)
    seed = _pick(seed, cfg, "seed", 0)
    esa_config = EsaConfig(
        d_p=_pick(d_p, cfg, "d_p", 100),
        d_h=_pick(d_h, cfg, "d_h", 100),
        optimizer=_pick(optimizer, cfg, "optimizer", "adam"),
        learning_rate=_pick(lr, cfg, "learning_rate", 1e-4),
        epochs=_pick(epochs, cfg, "epochs", 200),
        patience=_pick(patience, cfg, "patience", 20),
    )
    dataset = load_dataset(dataset_path)
    embeddings = load_embeddings(embeddings_path, vocab=dataset.vocabulary)
    provided = splits if splits is not None else dataset.provided_splits
    splits_origin = str(splits) if splits is not None else ("embedded" if provided is not None else None)
    run_config = {
        "dataset": str(dataset_path), "embeddings": str(embeddings_path), "out": str(out),
        "k": list(ks), "gold_mode": gold_mode, "folds": folds, "splits": splits_origin, "seed": seed,
        "d_o": embeddings.dim,
    } | dict(esa_config.__dict__)
    _echo_config("train", run_config)

    fold_splits = build_folds(dataset.entity_ids, n_folds=folds, seed=seed, provided_splits=provided)
    object_table = export_object_table(embeddings, dataset.vocabulary)

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    trained, fold_infos = evaluation.train_fold_models(
        dataset, object_table, fold_splits, esa_config, seed, ks=ks, gold_mode=gold_mode
    )
    for (fold_id, kk), model in sorted(trained.items()):
        save_model(out_dir / f"fold{fold_id}_k{kk}.model.json", model)
    _write_json(out_dir / "folds.json", {
        "format": FOLDS_FORMAT,
        "seed": seed,
        "run_config": _embeddable(run_config),
        "folds": [
            {"fold_id": f.fold_id, "train": list(f.train_entity_ids), "test": list(f.test_entity_ids)}
            for f in fold_splits
        ],
    })
    _write_json(out_dir / "fold_logs.json", {"format": "esa-foldlogs-v1", "run_config": _embeddable(run_config), "folds": fold_infos})
    click.echo(f"wrote {len(trained)} checkpoints to {out_dir}")


@main.command()
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--embeddings", "embeddings_path", required=True, type=click.Path())
@click.option("--models", "models_dir", required=True, type=click.Path())
@click.option("--out", required=True, type=click.Path())
@click.option("--jobs", default=1, show_default=True, type=int)
@_handled
def evaluate(dataset_path, embeddings_path, models_dir, out, jobs):
    """Score trained fold models; writes metrics, comparison table and figures."""
    run_config = {
        "dataset": str(dataset_path), "embeddings": str(embeddings_path),
        "models": str(models_dir), "out": str(out), "jobs": jobs,
    }
    _echo_config("evaluate", run_config)
    dataset = load_dataset(dataset_path)
    embeddings = load_embeddings(embeddings_path, vocab=dataset.vocabulary)
    models_dir = Path(models_dir)
    folds_payload = json.loads((models_dir / "folds.json").read_text(encoding="utf-8"))
    if folds_payload.get("format") != FOLDS_FORMAT:
        raise BadManifest(f"expected format {FOLDS_FORMAT!r} in folds.json")
    fold_splits = [
        kg.FoldSplit(fold_id=f["fold_id"], train_entity_ids=tuple(f["train"]), test_entity_ids=tuple(f["test"]))
        for f in folds_payload["folds"]
    ]
    trained = {}
    ks = set()
    for path in sorted(models_dir.glob("fold*_k*.model.json")):
        stem = path.name.split(".")[0]
        fold_id = int(stem.split("_")[0][4:])
        kk = int(stem.split("_")[1][1:])
        trained[(fold_id, kk)] = load_model(path, dataset.vocabulary, embeddings)
        ks.add(kk)
    if not trained:
        raise MissingFile(f"no checkpoints under {models_dir}")
    config_echo = folds_payload.get("run_config", {}) | {"jobs": jobs}
    metrics_report = evaluation.score_models(
        dataset, fold_splits, trained, folds_payload["seed"], config_echo, ks=tuple(sorted(ks)), jobs=jobs
    )
    path = report.write_metrics_outputs(metrics_report, out)
    for kk in sorted(ks):
        f = metrics_report.value("esa", "f_measure", "all", kk)
        m = metrics_report.value("esa", "map", "all", kk)
        click.echo(f"ALL k={kk}: f_measure={f:.4f} map={m:.4f}")
    click.echo(f"wrote {path}")


def _load_for_inference(dataset_path, embeddings_path, model_path):
    dataset = load_dataset(dataset_path)
    embeddings = load_embeddings(embeddings_path, vocab=dataset.vocabulary)
    model = load_model(model_path, dataset.vocabulary, embeddings)
    return dataset, model


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--embeddings", "embeddings_path", required=True, type=click.Path())
@click.option("--entity", required=True)
@click.option("--k", default=5, show_default=True, type=int)
@_handled
def summarize(model_path, dataset_path, embeddings_path, entity, k):
    """Print the top-k triples of one entity with their attention weights."""
    dataset, model = _load_for_inference(dataset_path, embeddings_path, model_path)
    desc = dataset.lookup(entity)
    inputs = entity_inputs(desc, dataset.vocabulary)
    att = model.attention(inputs)
    for rank, idx in enumerate(att.topk(k), start=1):
        t = desc.triples[idx]
        click.echo(f"{rank}\t{att.alpha[idx]:.6f}\t{t.predicate.lexical}\t{term_to_ntriples(t.object)}")


@main.command("export-attention")
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--embeddings", "embeddings_path", required=True, type=click.Path())
@click.option("--entity", required=True)
@click.option("--gold-k", default="5", show_default=True, type=click.Choice(["5", "10", "both"]))
@click.option("--out", required=True, type=click.Path())
@click.option("--figure/--no-figure", default=True, show_default=True)
@_handled
def export_attention(model_path, dataset_path, embeddings_path, entity, gold_k, out, figure):
    """Write (triple_index, gold_alpha, machine_alpha) CSV plus a bar chart."""
    run_config = {
        "model": str(model_path), "dataset": str(dataset_path), "embeddings": str(embeddings_path),
        "entity": str(entity), "gold_k": gold_k, "out": str(out),
    }
    _echo_config("export-attention", run_config)
    dataset, model = _load_for_inference(dataset_path, embeddings_path, model_path)
    desc = dataset.lookup(entity)
    mode = "both" if gold_k == "both" else int(gold_k)
    gold = build_gold_attention(desc, dataset.ground_truth(desc.entity_id), mode)
    alpha = model.attention(entity_inputs(desc, dataset.vocabulary)).alpha

    out = Path(out)
    lines = ["triple_index,gold_alpha,machine_alpha"]
    for i in range(len(desc.triples)):
        lines.append(f"{i},{gold.alpha_bar[i]:.17g},{alpha[i]:.17g}")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _write_json(Path(str(out) + ".run.json"), {"format": "esa-attention-export-v1", "run_config": _embeddable(run_config)})
    if figure:
        fig_path = out.with_suffix(".png")
        report.attention_figure(desc.entity_id, gold.alpha_bar, alpha, fig_path)
        click.echo(f"wrote {out} and {fig_path}")
    else:
        click.echo(f"wrote {out}")


@main.command("export-gold")
@click.option("--dataset", "dataset_path", required=True, type=click.Path())
@click.option("--k", default="5", show_default=True, type=click.Choice(["5", "10", "both"]))
@click.option("--out", required=True, type=click.Path())
@_handled
def export_gold(dataset_path, k, out):
    """Write every entity's gold counts and normalized attention as CSV."""
    dataset = load_dataset(dataset_path)
    mode = "both" if k == "both" else int(k)
    rows = (
        build_gold_attention(desc, dataset.ground_truth(desc.entity_id), mode)
        for desc in dataset.descriptions
    )
    write_gold_csv(out, rows)
    click.echo(f"wrote {out}")


if __name__ == "__main__":
    main()
