import copy

import numpy as np
import pytest

from oracles import fd_gradient_check as _fd_check
from wordeq import nn
from wordeq.dataset import EqCurve, default_band_centers, filter_english, normalize_curve
from wordeq.embeddings import EmbeddingTable, cosine_similarity
from wordeq.errors import DivergenceError, FormatError, ModelStateError, UnresolvableDescriptorError
from wordeq.metrics import pcm_distance


def test_gradient_check_full_stack():
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        model = nn.init_model(nn.EMBEDDING, seed)
        for b in model.biases:
            b += rng.normal(scale=0.05, size=b.shape)
        x = rng.normal(size=(4, 300))
        y = rng.uniform(0.05, 0.95, size=(4, 40))
        worst, checked = _fd_check(model, x, y, seed=seed)
        assert checked > 200
        assert worst < 1e-4, (seed, worst)


def test_gradient_respects_dropout_masks():
    rng = np.random.default_rng(7)
    model = nn.init_model(nn.EMBEDDING, 3, layer_units=(30, 20, 40), input_dim=12)
    x = rng.normal(size=(3, 12))
    y = rng.uniform(0.1, 0.9, size=(3, 40))
    masks = [(rng.random((3, 30)) < 0.9) / 0.9, (rng.random((3, 20)) < 0.9) / 0.9, None]
    worst, checked = _fd_check(model, x, y, masks=masks, per_tensor=60)
    assert checked > 100 and worst < 1e-4


def test_init_deterministic_and_seeded():
    a, b, c = nn.init_model(seed=1), nn.init_model(seed=1), nn.init_model(seed=2)
    assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))
    assert any(not np.array_equal(p, q) for p, q in zip(a.params(), c.params()))
    assert all(np.all(bias == 0) for bias in a.biases)
    assert a.layer_units == (300, 200, 100, 80, 60, 40)


def test_init_scale_matches_fan_in():
    model = nn.init_model(seed=0)
    fan_in = 300
    for w in model.weights[:-1]:
        if w.size >= 1e4:
            assert abs(w.std() / np.sqrt(2.0 / fan_in) - 1) < 0.1
        fan_in = w.shape[1]
    out = nn.init_model(seed=0, input_dim=300, layer_units=(300, 200, 40)).weights[-1]
    assert abs(out.std() / np.sqrt(2.0 / 240) - 1) < 0.1


def test_one_hot_mode_needs_vocab():
    with pytest.raises(ValueError):
        nn.init_model(nn.ONE_HOT, 0, vocab=[])
    m = nn.init_model(nn.ONE_HOT, 0, vocab=["a", "B", "c"])
    assert m.input_dim == 3 and m.vocab == ("a", "b", "c")
    with pytest.raises(ValueError):
        nn.init_model(nn.ONE_HOT, 0, vocab=["a", "A"])


def test_forward_zero_model_gives_half():
    m = nn.init_model(seed=0)
    for w in m.weights:
        w[:] = 0
    out, _ = nn.forward(m, np.zeros(300))
    assert out.tolist() == [0.5] * 40


def test_forward_hand_computed():
    m = nn.init_model(nn.EMBEDDING, 0, input_dim=2, layer_units=(1, 2))
    m.weights[0][:] = [[0.5], [-1.0]]
    m.biases[0][:] = [0.25]
    m.weights[1][:] = [[2.0, -3.0]]
    m.biases[1][:] = [0.1, 0.2]
    out, _ = nn.forward(m, [3.0, 1.0])
    h = max(0.5 * 3.0 - 1.0 * 1.0 + 0.25, 0.0)  # 0.75
    expected = [1 / (1 + np.exp(-(2.0 * h + 0.1))), 1 / (1 + np.exp(-(-3.0 * h + 0.2)))]
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)


def test_forward_errors():
    m = nn.init_model(seed=0)
    with pytest.raises(ValueError):
        nn.forward(m, np.zeros(299))
    with pytest.raises(FloatingPointError):
        nn.forward(m, np.full(300, np.nan))
    with pytest.raises(ValueError):
        nn.forward(m, np.zeros(300), training=True)


def test_inference_repeatable_and_in_range():
    m = nn.init_model(seed=0)
    x = np.random.default_rng(1).normal(scale=5, size=(50, 300))
    a, _ = nn.forward(m, x)
    b, _ = nn.forward(m, x)
    assert np.array_equal(a, b)
    assert np.all((a > 0) & (a < 1))


def test_dropout_zero_equals_inference():
    m = nn.init_model(seed=0)
    x = np.random.default_rng(1).normal(size=(5, 300))
    a, _ = nn.forward(m, x)
    b, _ = nn.forward(m, x, training=True, rng=np.random.default_rng(0), dropout_rate=0.0)
    assert np.array_equal(a, b)


def test_inverted_dropout_masks():
    m = nn.init_model(seed=0)
    x = np.random.default_rng(1).normal(size=(64, 300))
    _, cache = nn.forward(m, x, training=True, rng=np.random.default_rng(0), dropout_rate=0.1)
    for mask in cache.masks:
        assert set(np.unique(mask)) <= {0.0, 1 / 0.9}
        assert 0.05 < np.mean(mask == 0) < 0.15


def test_mae_loss():
    t = np.random.default_rng(0).uniform(size=40)
    assert nn.mae_loss(t, t) == 0.0
    assert nn.mae_loss(np.zeros(40), np.ones(40)) == 1.0
    p = np.random.default_rng(1).uniform(size=40)
    acc = 0.0
    for a, b in zip(p, t):
        acc += abs(float(a) - float(b))
    assert abs(nn.mae_loss(p, t) - acc / 40) < 1e-12
    with pytest.raises(ValueError):
        nn.mae_loss(np.zeros(40), np.zeros(39))


def test_zero_gradient_at_exact_fit():
    m = nn.init_model(seed=0)
    x = np.random.default_rng(0).normal(size=(1, 300))
    out, cache = nn.forward(m, x, training=True, rng=np.random.default_rng(0), dropout_rate=0.0)
    assert all(np.all(g == 0) for g in nn.backward(m, cache, out.copy()))


def test_output_bias_gradient_sign():
    m = nn.init_model(seed=0)
    x = np.random.default_rng(0).normal(size=(1, 300))
    out, cache = nn.forward(m, x, training=True, rng=np.random.default_rng(0), dropout_rate=0.0)
    target = np.clip(out + np.random.default_rng(1).choice([-0.2, 0.2], size=out.shape), 0.01, 0.99)
    grad_b = nn.backward(m, cache, target)[-1]
    assert np.array_equal(np.sign(grad_b), np.sign(out - target)[0])


def test_backward_cache_errors():
    m = nn.init_model(seed=0)
    with pytest.raises(ModelStateError):
        nn.backward(m, None, np.zeros(40))
    _, cache = nn.forward(m, np.zeros((1, 300)), training=True, rng=np.random.default_rng(0))
    m.step += 1
    with pytest.raises(ModelStateError):
        nn.backward(m, cache, np.zeros((1, 40)))


def test_train_config_validation():
    for bad in ({"learning_rate": 0}, {"dropout_rate": 1.0}, {"optimizer": "rmsprop"},
                {"batch_size": 0}, {"early_stop_patience": 0}):
        with pytest.raises(ValueError):
            nn.TrainConfig(**bad)


def test_overfit_single_example():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(1, 300))
    y = rng.uniform(0.1, 0.9, size=(1, 40))
    # dropout noise alone keeps a single-example fit above 0.01, so memorization runs without it
    cfg = nn.TrainConfig(max_epochs=200, seed=1, dropout_rate=0.0)
    model, trace = nn.train(nn.init_model(seed=0), x, y, cfg)
    out, _ = nn.forward(model, x)
    assert nn.mae_loss(out, y) < 0.01
    assert trace[-1] < 0.01


def test_train_deterministic_and_pure():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(70, 300)), rng.uniform(size=(70, 40))
    init = nn.init_model(seed=3)
    before = copy.deepcopy(init)
    cfg = nn.TrainConfig(max_epochs=5, seed=9)
    a, ta = nn.train(init, x, y, cfg)
    b, tb = nn.train(init, x, y, cfg)
    assert ta == tb
    assert nn.model_to_bytes(a) == nn.model_to_bytes(b)
    assert nn.model_to_bytes(init) == nn.model_to_bytes(before)


def test_sgd_optimizer_runs():
    rng = np.random.default_rng(0)
    x, y = rng.normal(size=(10, 300)), rng.uniform(size=(10, 40))
    _, trace = nn.train(nn.init_model(seed=0), x, y, nn.TrainConfig(max_epochs=3, optimizer="sgd", learning_rate=0.5))
    assert len(trace) == 3


def test_divergence_error_carries_epoch():
    x = np.zeros((2, 300))
    y = np.full((2, 40), np.nan)
    with pytest.raises(DivergenceError) as info:
        nn.train(nn.init_model(seed=0), x, y, nn.TrainConfig(max_epochs=3))
    assert info.value.epoch == 0


def test_empty_training_set():
    with pytest.raises(ValueError):
        nn.train(nn.init_model(seed=0), np.zeros((0, 300)), np.zeros((0, 40)))


def test_early_stopping_on_training_loss():
    x = np.zeros((4, 300))
    y = np.full((4, 40), 0.5)
    _, trace = nn.train(nn.init_model(seed=0), x, y, nn.TrainConfig(max_epochs=100, early_stop_patience=3, dropout_rate=0.0))
    assert len(trace) < 100


@pytest.fixture(scope="module")
def trained_synthetic(corpus):
    english = filter_english(corpus.examples)
    table = corpus.table
    model = nn.init_model(nn.EMBEDDING, 0)
    matrix_before = table.matrix.copy()
    x = nn.encode_inputs(model, [e.descriptor for e in english], table)
    y = np.array([normalize_curve(e.curve) for e in english])
    trained, trace = nn.train(model, x, y, nn.TrainConfig(max_epochs=60, seed=0))
    return trained, trace, matrix_before


def test_loss_trace_windows_non_increasing(trained_synthetic):
    trace = np.array(trained_synthetic[1])
    windows = trace[: len(trace) // 10 * 10].reshape(-1, 10).mean(axis=1)
    assert np.all(np.diff(windows) <= 0), windows


def test_embedding_table_frozen(trained_synthetic, corpus):
    assert np.array_equal(trained_synthetic[2], corpus.table.matrix)
    assert not corpus.table.matrix.flags.writeable


def test_synonyms_closer_than_unrelated(trained_synthetic, corpus):
    model = trained_synthetic[0]
    by_cluster = {}
    for w, c in corpus.clusters.items():
        by_cluster.setdefault(c, []).append(w)
    c0, c1 = sorted(by_cluster, key=lambda c: -len(by_cluster[c]))[:2]
    w1, w2 = by_cluster[c0][:2]
    w3 = by_cluster[c1][0]
    t = corpus.table
    assert cosine_similarity(t.matrix[t.index[w1]], t.matrix[t.index[w2]]) > 0.8
    centers = default_band_centers()
    curve = {w: EqCurve(nn.predict(model, w, t).gains_db, centers) for w in (w1, w2, w3)}
    assert pcm_distance(curve[w1], curve[w2]) < pcm_distance(curve[w1], curve[w3])


def test_predict_modes():
    table = EmbeddingTable.from_dict({"warm": np.ones(300), "cold": -np.ones(300)})
    emb = nn.init_model(nn.EMBEDDING, 0)
    p = nn.predict(emb, "warm", table)
    assert np.array_equal(p.normalized, nn.predict(emb, "WARM", table).normalized)
    assert np.all(np.abs(p.gains_db) < 4)
    with pytest.raises(UnresolvableDescriptorError):
        nn.predict(emb, "qqq", table)
    with pytest.raises(ValueError):
        nn.predict(emb, "warm")
    oh = nn.init_model(nn.ONE_HOT, 0, vocab=["warm", "cold"])
    unseen = [nn.predict(oh, w).normalized for w in ("bright", "dark", "boomy")]
    assert all(np.array_equal(unseen[0], u) for u in unseen[1:])
    assert not np.array_equal(unseen[0], nn.predict(oh, "warm").normalized)
    with pytest.raises(ValueError):
        nn.predict(oh, "  ")


def test_serialization_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    for model in (nn.init_model(nn.EMBEDDING, 1), nn.init_model(nn.ONE_HOT, 2, vocab=["a", "b-c", "é"])):
        path = tmp_path / "m.weq"
        nn.save_model(model, path)
        back = nn.load_model(path)
        assert back.input_mode == model.input_mode and back.vocab == model.vocab
        x = rng.normal(size=(8, model.input_dim))
        a, _ = nn.forward(model, x)
        b, _ = nn.forward(back, x)
        assert np.max(np.abs(a - b)) <= 1e-12


def test_serialization_detects_damage():
    blob = bytearray(nn.model_to_bytes(nn.init_model(seed=0)))
    blob[100] ^= 0xFF
    with pytest.raises(FormatError, match="checksum"):
        nn.model_from_bytes(bytes(blob))
    with pytest.raises(FormatError):
        nn.model_from_bytes(b"NOTMODEL" + bytes(64))
