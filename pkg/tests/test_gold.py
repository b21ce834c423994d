import csv

import numpy as np
import pytest

from esa.gold import GoldAttention, ZeroTotalCount, build_gold_attention, write_gold_csv
from esa.kg import EntityDescription, GroundTruth
from esa.ntriples import RdfTerm, Triple


def _desc(n, entity_id="1"):
    s = RdfTerm.iri("http://x/s")
    triples = tuple(Triple(s, RdfTerm.iri(f"http://x/p{i}"), RdfTerm.iri(f"http://x/o{i}")) for i in range(n))
    return EntityDescription(entity_id=entity_id, subject=s, triples=triples, source="dbpedia")


def test_normalization_matches_worked_example():
    # counts (1, 0, 8, ..., 5) with a total of 50: 1 -> 0.02, 8 -> 0.16, 5 -> 0.1
    counts = [1, 0, 8, 9, 9, 9, 9, 5]
    assert sum(counts) == 50
    gold = GoldAttention.from_counts("e", "both", counts)
    assert gold.alpha_bar[0] == 0.02
    assert gold.alpha_bar[1] == 0.0
    assert gold.alpha_bar[2] == 0.16
    assert gold.alpha_bar[-1] == 0.1
    assert gold.alpha_bar.sum() == pytest.approx(1.0, abs=1e-12)


def test_identical_users_concentrate():
    sets5 = tuple(frozenset(range(5)) for _ in range(5))
    sets10 = tuple(frozenset(range(10)) for _ in range(5))
    gt = GroundTruth(entity_id="1", per_user_top5=sets5, per_user_top10=sets10)
    gold = build_gold_attention(_desc(10), gt, 5)
    np.testing.assert_array_equal(gold.counts, [5] * 5 + [0] * 5)
    np.testing.assert_allclose(gold.alpha_bar, [0.2] * 5 + [0.0] * 5, atol=0)


def test_disjoint_users_uniform():
    sets5 = tuple(frozenset(range(5 * u, 5 * u + 5)) for u in range(5))
    sets10 = tuple(frozenset(range(10)) for _ in range(5))  # unused for k=5
    gt = GroundTruth(entity_id="1", per_user_top5=sets5, per_user_top10=sets10)
    gold = build_gold_attention(_desc(25), gt, 5)
    np.testing.assert_allclose(gold.alpha_bar, np.full(25, 1 / 25), atol=1e-15)


@pytest.mark.parametrize("mode,total,cap", [(5, 25, 5), (10, 50, 5), ("both", 75, 10)])
def test_modes_on_synthetic_dataset(small_dataset, mode, total, cap):
    for desc in small_dataset.descriptions:
        gt = small_dataset.ground_truth(desc.entity_id)
        gold = build_gold_attention(desc, gt, mode)
        assert int(gold.counts.sum()) == total
        assert gold.counts.max() <= cap
        assert abs(gold.alpha_bar.sum() - 1.0) <= 1e-12
        assert len(gold.alpha_bar) == len(desc.triples)


def test_monotonicity(small_dataset):
    desc = small_dataset.descriptions[0]
    gold = build_gold_attention(desc, small_dataset.ground_truth(desc.entity_id), 10)
    c = gold.counts
    a = gold.alpha_bar
    for i in range(len(c)):
        for j in range(len(c)):
            if c[i] > c[j]:
                assert a[i] > a[j]


def test_zero_total_count():
    with pytest.raises(ZeroTotalCount):
        GoldAttention.from_counts("e", 5, [0, 0, 0])


def test_negative_counts_rejected():
    with pytest.raises(ValueError):
        GoldAttention.from_counts("e", 5, [1, -1, 2])


def test_out_of_range_gold_index():
    sets5 = tuple(frozenset({0, 1, 2, 3, 99}) for _ in range(5))
    sets10 = tuple(frozenset(range(10)) for _ in range(5))
    gt = GroundTruth(entity_id="1", per_user_top5=sets5, per_user_top10=sets10)
    with pytest.raises(IndexError):
        build_gold_attention(_desc(10), gt, 5)


def test_bad_mode_rejected():
    gt = GroundTruth(
        entity_id="1",
        per_user_top5=tuple(frozenset(range(5)) for _ in range(5)),
        per_user_top10=tuple(frozenset(range(10)) for _ in range(5)),
    )
    with pytest.raises(ValueError):
        build_gold_attention(_desc(10), gt, 7)


def test_csv_export_roundtrip(tmp_path, small_dataset):
    golds = [
        build_gold_attention(d, small_dataset.ground_truth(d.entity_id), 5)
        for d in small_dataset.descriptions[:3]
    ]
    path = tmp_path / "gold.csv"
    write_gold_csv(path, golds)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == sum(len(g.counts) for g in golds)
    by_entity = {}
    for r in rows:
        by_entity.setdefault(r["entity_id"], []).append(r)
    for g in golds:
        got = by_entity[g.entity_id]
        assert [int(r["count"]) for r in got] == list(g.counts)
        # %.17g round-trips float64 exactly
        assert [float(r["alpha_bar"]) for r in got] == list(g.alpha_bar)
