import math

import numpy as np
import pytest

from esa.gold import build_gold_attention
from esa.model import (
    AttentionResult,
    EmptyEntity,
    EncodedEntity,
    EsaConfig,
    EsaModel,
    KTooLarge,
    LstmDirection,
    UnknownObject,
    UnknownPredicate,
    attention_forward,
    bilstm_encode,
    embed_triple,
    entity_inputs,
    esa_loss,
    load_model,
    lstm_cell,
    save_model,
    topk_indices,
    train_epoch,
)
from esa.nn import Parameter, entropy, finite_diff_check, make_optimizer, make_rng, softmax
from esa.transe import ObjectLookupTable


def _table(rng, n_nodes, d_o, valid=None):
    return ObjectLookupTable(rng.normal(size=(n_nodes, d_o)), valid if valid is not None else range(n_nodes))


def _direction(name, dx, dh, seed):
    return LstmDirection(name, dx, dh, make_rng(seed), 0.3)


# ---------------------------------------------------------------- embedding


class TestEmbedTriple:
    def test_concatenation_forced(self):
        pred = Parameter("p", np.array([[9.0, 9.0], [1.0, 2.0]]))
        table = ObjectLookupTable(np.array([[0.0, 0.0], [3.0, 4.0]]), [0, 1])
        np.testing.assert_array_equal(embed_triple(1, 1, pred, table), [1.0, 2.0, 3.0, 4.0])

    def test_deterministic(self):
        rng = make_rng(1)
        pred = Parameter("p", rng.normal(size=(3, 4)))
        table = _table(rng, 5, 6)
        np.testing.assert_array_equal(embed_triple(2, 3, pred, table), embed_triple(2, 3, pred, table))

    def test_unknown_ids(self):
        rng = make_rng(2)
        pred = Parameter("p", rng.normal(size=(3, 4)))
        table = _table(rng, 5, 6, valid=[0, 1])
        with pytest.raises(UnknownPredicate):
            embed_triple(7, 0, pred, table)
        with pytest.raises(UnknownObject):
            embed_triple(0, 3, pred, table)


# ---------------------------------------------------------------- lstm cell


def _oracle_cell(x, h_prev, c_prev, W, U, b, dh):
    """Independent transcription of the gate equations."""

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    z = W @ x + U @ h_prev + b
    i = sig(z[:dh])
    f = sig(z[dh : 2 * dh])
    o = sig(z[2 * dh : 3 * dh])
    g = np.tanh(z[3 * dh :])
    c = f * c_prev + i * g
    return o * np.tanh(c), c


class TestLstmCell:
    def test_all_zero(self):
        d = _direction("z", 3, 2, 0)
        for p in d.parameters():
            p.value[:] = 0.0
        h, c = lstm_cell(np.array([5.0, -1.0, 2.0]), np.zeros(2), np.zeros(2), d)
        np.testing.assert_array_equal(h, np.zeros(2))
        np.testing.assert_array_equal(c, np.zeros(2))

    def test_bias_driven_hand_computation(self):
        d = _direction("b", 2, 2, 0)
        for p in d.parameters():
            p.value[:] = 0.0
        d.b.value[0:2] = 30.0  # input gate ~ 1
        d.b.value[6:8] = 30.0  # candidate ~ 1
        h, c = lstm_cell(np.zeros(2), np.zeros(2), np.zeros(2), d)
        np.testing.assert_allclose(c, [1.0, 1.0], atol=1e-12)
        np.testing.assert_allclose(h, [0.5 * math.tanh(1.0)] * 2, atol=1e-12)

    def test_matches_oracle(self):
        rng = make_rng(7)
        d = _direction("o", 3, 2, 7)
        x = rng.normal(size=3)
        h_prev = rng.normal(size=2)
        c_prev = rng.normal(size=2)
        h, c = lstm_cell(x, h_prev, c_prev, d)
        h2, c2 = _oracle_cell(x, h_prev, c_prev, d.W.value, d.U.value, d.b.value, 2)
        np.testing.assert_allclose(h, h2, atol=1e-12)
        np.testing.assert_allclose(c, c2, atol=1e-12)

    def test_shape_check(self):
        d = _direction("s", 3, 2, 1)
        from esa.nn import DimensionMismatch

        with pytest.raises(DimensionMismatch):
            lstm_cell(np.zeros(4), np.zeros(2), np.zeros(2), d)


# ---------------------------------------------------------------- bilstm


def _oracle_bilstm(X, fwd, bwd):
    """Step-by-step transcription: forward scan, backward scan, concat."""
    n = X.shape[0]
    dh = fwd.hidden_dim
    h_fwd = []
    h, c = np.zeros(dh), np.zeros(dh)
    for t in range(n):
        h, c = _oracle_cell(X[t], h, c, fwd.W.value, fwd.U.value, fwd.b.value, dh)
        h_fwd.append(h)
    h_bwd = [None] * n
    h, c = np.zeros(dh), np.zeros(dh)
    for t in range(n - 1, -1, -1):
        h, c = _oracle_cell(X[t], h, c, bwd.W.value, bwd.U.value, bwd.b.value, dh)
        h_bwd[t] = h
    H = np.array([np.concatenate([h_fwd[t], h_bwd[t]]) for t in range(n)])
    h_s = np.concatenate([h_fwd[-1], h_bwd[0]])
    return H, h_s


class TestBilstm:
    def test_single_step_query_equals_only_output(self):
        fwd = _direction("f", 4, 3, 1)
        bwd = _direction("r", 4, 3, 2)
        X = make_rng(3).normal(size=(1, 4))
        enc = bilstm_encode(X, fwd, bwd)
        assert enc.h.shape == (1, 6)
        np.testing.assert_array_equal(enc.h_s, enc.h[0])

    def test_matches_oracle(self):
        fwd = _direction("f", 4, 2, 5)
        bwd = _direction("r", 4, 2, 6)
        X = make_rng(8).normal(size=(3, 4))
        enc = bilstm_encode(X, fwd, bwd)
        H, h_s = _oracle_bilstm(X, fwd, bwd)
        np.testing.assert_allclose(enc.h, H, atol=1e-12)
        np.testing.assert_allclose(enc.h_s, h_s, atol=1e-12)

    def test_reversal_swaps_direction_roles(self):
        fwd = _direction("f", 3, 2, 9)
        bwd = _direction("r", 3, 2, 10)
        X = make_rng(11).normal(size=(5, 3))
        enc = bilstm_encode(X, fwd, bwd)
        swapped = bilstm_encode(X[::-1], bwd, fwd)
        n, dh = 5, 2
        for t in range(n):
            np.testing.assert_allclose(swapped.h[t, :dh], enc.h[n - 1 - t, dh:], atol=1e-12)
            np.testing.assert_allclose(swapped.h[t, dh:], enc.h[n - 1 - t, :dh], atol=1e-12)
        np.testing.assert_allclose(swapped.h_s[:dh], enc.h_s[dh:], atol=1e-12)
        np.testing.assert_allclose(swapped.h_s[dh:], enc.h_s[:dh], atol=1e-12)

    def test_empty_entity(self):
        with pytest.raises(EmptyEntity):
            bilstm_encode(np.zeros((0, 3)), _direction("f", 3, 2, 1), _direction("r", 3, 2, 2))


# ---------------------------------------------------------------- attention


class TestAttention:
    def test_identical_rows_uniform(self):
        h = np.tile([1.0, -2.0, 0.5, 3.0], (4, 1))
        enc = EncodedEntity(h=h, h_s=np.array([0.3, 1.0, -0.7, 0.2]))
        np.testing.assert_allclose(attention_forward(enc).alpha, np.full(4, 0.25), atol=1e-12)

    def test_orthogonal_query_uniform(self):
        h = np.array([[1.0, 0.0, 0, 0], [0.0, 1.0, 0, 0], [-1.0, 1.0, 0, 0]])
        enc = EncodedEntity(h=h, h_s=np.array([0.0, 0.0, 5.0, -2.0]))
        np.testing.assert_allclose(attention_forward(enc).alpha, np.full(3, 1 / 3), atol=1e-12)

    def test_matches_dot_softmax_oracle(self):
        rng = make_rng(13)
        h = rng.normal(size=(3, 4))
        h_s = rng.normal(size=4)
        enc = EncodedEntity(h=h, h_s=h_s)
        scores = np.array([float(np.dot(h_s, h[i])) for i in range(3)])
        np.testing.assert_allclose(attention_forward(enc).alpha, softmax(scores), atol=1e-12)


class TestLossAndTopk:
    def test_uniform_loss_is_log_n(self):
        u = np.full(4, 0.25)
        assert esa_loss(u, u) == pytest.approx(math.log(4), abs=1e-12)

    def test_one_hot_near_match(self):
        gold = np.array([0.0, 1.0, 0.0])
        alpha = np.array([0.005, 0.99, 0.005])
        assert esa_loss(alpha, gold) == pytest.approx(-math.log(0.99), abs=1e-12)

    def test_worked_gold_vs_uniform(self):
        gold = np.zeros(50)
        gold[0], gold[2], gold[49] = 0.02, 0.16, 0.1
        gold[3:9] = (1 - gold.sum()) / 6
        alpha = np.full(50, 1 / 50)
        expected = -sum(g * math.log(1 / 50) for g in gold if g > 0)  # independent summation
        assert esa_loss(alpha, gold) == pytest.approx(expected, abs=1e-12)

    def test_topk_forced(self):
        assert topk_indices(np.array([0.1, 0.5, 0.4]), 2) == [1, 2]

    def test_topk_full_permutation(self):
        alpha = np.array([0.2, 0.5, 0.1, 0.2])
        assert sorted(topk_indices(alpha, 4)) == [0, 1, 2, 3]

    def test_topk_tie_breaks_by_lower_index(self):
        assert topk_indices(np.array([0.3, 0.4, 0.3]), 3) == [1, 0, 2]

    def test_topk_matches_sort_oracle(self):
        rng = make_rng(17)
        for _ in range(200):
            n = int(rng.integers(1, 12))
            alpha = rng.random(n)
            alpha[rng.integers(0, n)] = alpha[0]  # force occasional ties
            k = int(rng.integers(1, n + 1))
            expected = [i for _, i in sorted(((-alpha[i], i) for i in range(n)))][:k]
            assert topk_indices(alpha, k) == expected

    def test_k_too_large(self):
        with pytest.raises(KTooLarge):
            topk_indices(np.array([0.5, 0.5]), 3)


# ---------------------------------------------------------------- full model


def _toy_model(n_predicates=6, n_nodes=9, d_p=4, d_o=4, d_h=3, seed=0, **cfg):
    config = EsaConfig(d_p=d_p, d_h=d_h, **cfg)
    table = _table(make_rng(seed, 99), n_nodes, d_o)
    return EsaModel(n_predicates, table, config, seed)


def _toy_entity(model, n, seed, entity_id="t"):
    rng = make_rng(seed, 7)
    from esa.model import EntityInputs

    p_ids = rng.integers(0, model.n_predicates, size=n)
    o_ids = rng.integers(0, model.object_table._vectors.shape[0], size=n)
    gold = rng.random(n)
    gold /= gold.sum()
    return EntityInputs(entity_id, p_ids.astype(np.int64), o_ids.astype(np.int64)), gold


class TestGradients:
    def test_composed_loss_passes_finite_difference(self):
        for seed in range(3):
            model = _toy_model(seed=seed)
            rng = make_rng(seed, 21)
            n = int(rng.integers(2, 6))
            inputs, gold = _toy_entity(model, n, seed)
            model.zero_grads()
            model.loss_and_backward(inputs, gold)
            err = finite_diff_check(
                lambda: model.loss(inputs, gold), model.parameters(), max_coords_per_param=10_000, rng=rng
            )
            assert err < 1e-4, f"seed {seed}: max relative error {err}"

    def test_gradients_match_at_every_scale(self):
        # floor-free variant: mixed absolute/relative agreement over every
        # coordinate; a genuinely wrong gradient term fails this by orders
        # of magnitude, while central-difference noise stays ~1 ulp of loss.
        for seed in range(8):
            model = _toy_model(seed=seed)
            rng = make_rng(seed, 21)
            n = int(rng.integers(2, 6))
            inputs, gold = _toy_entity(model, n, seed)
            model.zero_grads()
            model.loss_and_backward(inputs, gold)
            eps = 1e-4
            for p in model.parameters():
                flat_value = p.value.reshape(-1)
                flat_grad = p.grad.reshape(-1)
                for idx in range(flat_value.size):
                    orig = flat_value[idx]
                    flat_value[idx] = orig + eps
                    f_plus = model.loss(inputs, gold)
                    flat_value[idx] = orig - eps
                    f_minus = model.loss(inputs, gold)
                    flat_value[idx] = orig
                    numeric = (f_plus - f_minus) / (2 * eps)
                    analytic = flat_grad[idx]
                    assert abs(analytic - numeric) <= 2e-10 + 1e-4 * (abs(analytic) + abs(numeric)), (
                        f"seed {seed} {p.name}[{idx}]: analytic={analytic} numeric={numeric}"
                    )

    def test_object_vectors_never_move_predicates_do(self):
        model = _toy_model(seed=3)
        inputs, gold = _toy_entity(model, 4, 3)
        table_hash = model.object_table.content_hash()
        pred_before = model.predicate_table.value.copy()
        opt = make_optimizer("adam", 0.01)
        model.loss_and_backward(inputs, gold)
        opt.step(model.parameters())
        assert model.object_table.content_hash() == table_hash
        touched = np.unique(inputs.p_ids)
        assert not np.array_equal(model.predicate_table.value[touched], pred_before[touched])


class TestTraining:
    def test_single_entity_overfits_to_gold_entropy(self):
        model = _toy_model(d_h=8, seed=5, learning_rate=0.05)
        inputs, gold = _toy_entity(model, 6, 5)
        opt = make_optimizer("adam", 0.05)
        rng = make_rng(5, 13)
        losses = [train_epoch(model, [(inputs, gold)], opt, rng) for _ in range(200)]
        target = entropy(gold)
        assert losses[-1] - target < 0.01
        # decreasing in trend: first quarter mean above last quarter mean
        assert np.mean(losses[:50]) > np.mean(losses[-50:])

    def test_same_seed_identical_parameters(self):
        runs = []
        for _ in range(2):
            model = _toy_model(seed=9)
            inputs, gold = _toy_entity(model, 5, 9)
            opt = make_optimizer("adam", 0.01)
            rng = make_rng(9, 31)
            for _epoch in range(5):
                train_epoch(model, [(inputs, gold)], opt, rng)
            runs.append([p.value.copy() for p in model.parameters()])
        for a, b in zip(*runs):
            np.testing.assert_array_equal(a, b)

    def test_attention_sums_to_one_every_epoch(self):
        model = _toy_model(seed=12)
        pairs = [_toy_entity(model, n, 12 + n) for n in (3, 5, 7)]
        opt = make_optimizer("adam", 0.01)
        rng = make_rng(12, 1)
        for _ in range(5):
            train_epoch(model, pairs, opt, rng)
            for inputs, _gold in pairs:
                assert abs(model.attention(inputs).alpha.sum() - 1.0) <= 1e-9

    def test_untrained_model_attention_near_uniform(self):
        model = _toy_model(d_p=16, d_o=4, d_h=16, seed=2)
        inputs, _ = _toy_entity(model, 8, 2)
        alpha = model.attention(inputs).alpha
        np.testing.assert_allclose(alpha, np.full(8, 1 / 8), atol=0.02)


class TestDatasetIntegration:
    def test_entity_inputs_resolution(self, small_dataset):
        desc = small_dataset.descriptions[0]
        inputs = entity_inputs(desc, small_dataset.vocabulary)
        assert len(inputs.p_ids) == len(desc.triples)
        for i, t in enumerate(desc.triples):
            assert small_dataset.vocabulary.predicates[inputs.p_ids[i]] == t.predicate.lexical
            assert small_dataset.vocabulary.nodes[inputs.o_ids[i]] == t.object

    def test_overfit_one_synthetic_entity_recovers_gold_topk(self, small_dataset):
        from esa.transe import TranslationEmbeddings, export_object_table

        vocab = small_dataset.vocabulary
        rng = make_rng(4)
        emb = TranslationEmbeddings(
            node_vectors=rng.normal(size=(vocab.n_nodes, 8)) * 0.3,
            relation_vectors=rng.normal(size=(vocab.n_predicates, 8)),
            dim=8,
        )
        table = export_object_table(emb, vocab)
        model = EsaModel(vocab.n_predicates, table, EsaConfig(d_p=8, d_h=8, learning_rate=0.05), seed=1)

        desc = small_dataset.descriptions[0]
        gt = small_dataset.ground_truth(desc.entity_id)
        gold = build_gold_attention(desc, gt, 5)
        inputs = entity_inputs(desc, vocab)
        opt = make_optimizer("adam", 0.05)
        rng = make_rng(1, 2)
        for _ in range(300):
            loss = train_epoch(model, [(inputs, gold.alpha_bar)], opt, rng)
            if loss - entropy(gold.alpha_bar) < 0.005:
                break
        gold_top5 = topk_indices(gold.alpha_bar, 5)
        got = model.rank_topk(inputs, 5)
        assert len(set(got) & set(gold_top5)) >= 4


class TestCheckpoint:
    def test_roundtrip_preserves_attention(self, tmp_path, small_dataset):
        from esa.transe import TransEConfig, train_transe, export_object_table

        vocab = small_dataset.vocabulary
        config = TransEConfig(dim=6, epochs=3, seed=1)
        emb = train_transe(small_dataset.id_triples(), vocab, config)
        model = EsaModel(vocab.n_predicates, export_object_table(emb, vocab), EsaConfig(d_p=5, d_h=4), seed=2)
        path = tmp_path / "m.json"
        save_model(path, model, epoch=17)
        loaded = load_model(path, vocab, emb)
        inputs = entity_inputs(small_dataset.descriptions[3], vocab)
        np.testing.assert_array_equal(loaded.attention(inputs).alpha, model.attention(inputs).alpha)

    def test_dim_cross_checks(self, tmp_path, small_dataset):
        from esa.transe import TransEConfig, train_transe, export_object_table, random_embeddings

        vocab = small_dataset.vocabulary
        emb = train_transe(small_dataset.id_triples(), vocab, TransEConfig(dim=6, epochs=2, seed=1))
        model = EsaModel(vocab.n_predicates, export_object_table(emb, vocab), EsaConfig(d_p=5, d_h=4), seed=2)
        path = tmp_path / "m.json"
        save_model(path, model)
        wrong_dim = random_embeddings(vocab, 9, seed=1)
        with pytest.raises(ValueError):
            load_model(path, vocab, wrong_dim)
