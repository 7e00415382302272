import numpy as np
import pytest

from hmdact import model, nn
from hmdact.errors import (
    ConfigError,
    TrainingDivergedError,
    WeightMagicError,
    WeightTopologyError,
    WeightTruncationError,
    WeightVersionError,
)

from oracles import central_difference, max_relative_error


TINY = model.NetworkConfig(
    streams=(("body", 2), ("head", 3)),
    window_len=12,
    conv_channels=(4, 8, 8),
    kernel=3,
    padding=1,
    pool=3,
    fc=(16, 12),
    n_classes=5,
    dropout=0.2,
)


def _random_inputs(rng, config, n):
    return [
        rng.standard_normal((n, config.window_len, ch)) for _, ch in config.streams
    ]


# ---------------------------------------------------------------------------
# configuration / shape contract
# ---------------------------------------------------------------------------

def test_default_length_trace_and_feature_sizes():
    cfg = model.two_stream_config()
    assert cfg.length_trace() == [38, 12, 10, 3, 1]
    assert cfg.stream_feature_len() == 256
    assert cfg.concat_len() == 512
    assert cfg.n_classes == 18


def test_single_stream_trace_matches():
    cfg = model.single_stream_config(in_channels=9)
    assert cfg.length_trace() == [38, 12, 10, 3, 1]
    assert cfg.stream_feature_len() == 256
    assert cfg.concat_len() == 256


def test_bad_topology_fails_loudly():
    with pytest.raises(ConfigError):
        model.two_stream_config(window_len=8).validate()
    with pytest.raises(ConfigError):
        model.two_stream_config(pool=50)
    with pytest.raises(ConfigError):
        model.two_stream_config(dropout=1.5)


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------

def test_init_is_deterministic_per_seed():
    a = model.TwoStreamNetwork.initialize(model.two_stream_config(), seed=5)
    b = model.TwoStreamNetwork.initialize(model.two_stream_config(), seed=5)
    for (na, pa), (nb, pb) in zip(a.params().items(), b.params().items()):
        assert na == nb
        assert np.array_equal(pa, pb)
    c = model.TwoStreamNetwork.initialize(model.two_stream_config(), seed=6)
    assert not np.array_equal(a.params()["fc1.weights"], c.params()["fc1.weights"])


def test_init_scale_matches_fan_in():
    net = model.TwoStreamNetwork.initialize(model.two_stream_config(), seed=1)
    fc2 = net.fc_layers[1]
    expected = np.sqrt(2.0 / fc2.in_dim)
    assert fc2.in_dim >= 1000
    assert abs(fc2.weights.std() - expected) < 0.1 * expected


def test_init_biases_are_zero():
    net = model.TwoStreamNetwork.initialize(model.two_stream_config(), seed=2)
    for name, p in net.params().items():
        if name.endswith(".bias"):
            assert not p.any()


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def test_eval_forward_is_deterministic():
    rng = np.random.default_rng(0)
    net = model.TwoStreamNetwork.initialize(TINY, seed=3)
    body = rng.standard_normal((12, 2))
    head = rng.standard_normal((12, 3))
    s1 = net.forward(body, head)
    s2 = net.forward(body, head)
    assert np.array_equal(s1, s2)
    assert s1.shape == (5,)


def test_forward_rejects_wrong_window_shape():
    net = model.TwoStreamNetwork.initialize(TINY, seed=3)
    with pytest.raises(ConfigError):
        net.forward(np.zeros((12, 2)), np.zeros((11, 3)))
    with pytest.raises(ConfigError):
        net.forward(np.zeros((12, 2)), np.zeros((12, 4)))


def test_untrained_accuracy_is_chance_level():
    cfg = model.two_stream_config()
    net = model.TwoStreamNetwork.initialize(cfg, seed=11)
    rng = np.random.default_rng(12)
    n_per_class = 30
    labels = np.repeat(np.arange(18), n_per_class)
    data = model.ArrayDataset(_random_inputs(rng, cfg, len(labels)), labels)
    accuracy, _ = model.evaluate(net, data)
    assert 0.02 <= accuracy <= 0.12


def test_argmax_invariant_under_constant_score_shift():
    rng = np.random.default_rng(13)
    for _ in range(50):
        scores = rng.standard_normal(18) * rng.uniform(0.1, 100.0)
        shift = rng.uniform(-1e3, 1e3)
        assert np.argmax(scores) == np.argmax(scores + shift)


# ---------------------------------------------------------------------------
# gradients through the full composition
# ---------------------------------------------------------------------------

def test_network_gradients_match_finite_differences():
    net = model.TwoStreamNetwork.initialize(TINY, seed=21)
    rng = np.random.default_rng(22)
    inputs = _random_inputs(rng, TINY, 3)
    labels = np.array([0, 2, 4])
    loss, grads, mask = net.batch_loss_and_grads(
        inputs, labels, rng=np.random.default_rng(23)
    )
    params = net.params()
    numeric = central_difference(
        lambda: net.batch_loss(inputs, labels, dropout_mask=mask), params, h=1e-5
    )
    assert max_relative_error(grads, numeric) < 1e-4


def test_grad_logits_sum_to_zero():
    net = model.TwoStreamNetwork.initialize(TINY, seed=24)
    rng = np.random.default_rng(25)
    scores = net.forward_batch(_random_inputs(rng, TINY, 4))
    _, grad = nn.softmax_cross_entropy_batch(scores, [1, 0, 3, 2])
    assert np.abs(grad.sum(axis=1)).max() < 1e-12


def test_backward_requires_cache():
    net = model.TwoStreamNetwork.initialize(TINY, seed=26)
    with pytest.raises(ValueError):
        net.backward(None, np.zeros((1, 5)))


def test_gradients_bit_identical_across_runs():
    net = model.TwoStreamNetwork.initialize(TINY, seed=27)
    rng = np.random.default_rng(28)
    inputs = _random_inputs(rng, TINY, 4)
    labels = np.array([0, 1, 2, 3])
    _, g1, _ = net.batch_loss_and_grads(inputs, labels, rng=np.random.default_rng(5))
    _, g2, _ = net.batch_loss_and_grads(inputs, labels, rng=np.random.default_rng(5))
    for name in g1:
        assert np.array_equal(g1[name], g2[name])


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _separable_two_class_dataset(rng, n_per_class=100):
    """Idle-like (zero-mean noise) vs jump-like (strong vertical pattern)."""
    cfg = TINY
    n = 2 * n_per_class
    labels = np.array([0] * n_per_class + [3] * n_per_class)
    streams = _random_inputs(rng, cfg, n)
    for a in streams:
        a *= 0.1
    t = np.linspace(0.0, 1.0, cfg.window_len)
    streams[0][n_per_class:, :, 1] += 3.0 * np.sin(2 * np.pi * t)[None, :]
    return model.ArrayDataset(streams, labels)


def test_fit_reaches_perfect_accuracy_on_separable_toy():
    rng = np.random.default_rng(31)
    data = _separable_two_class_dataset(rng)
    net = model.TwoStreamNetwork.initialize(TINY, seed=32)
    cfg = model.TrainConfig(batch_size=32, learning_rate=1e-3, epochs=20, seed=33)
    history = model.fit(net, data, data, cfg)
    assert len(history) <= 20
    accuracy, _ = model.evaluate(net, data)
    assert accuracy == 1.0
    assert history[-1].mean_loss < history[0].mean_loss


def test_fit_is_invariant_to_presentation_order():
    rng = np.random.default_rng(41)
    data = _separable_two_class_dataset(rng, n_per_class=20)
    perm = np.random.default_rng(42).permutation(data.n)
    permuted = model.ArrayDataset(
        [a[perm] for a in data.arrays], data.labels[perm], ranks=perm
    )
    cfg = model.TrainConfig(batch_size=16, learning_rate=1e-3, epochs=2, seed=43)
    net_a = model.TwoStreamNetwork.initialize(TINY, seed=44)
    net_b = model.TwoStreamNetwork.initialize(TINY, seed=44)
    model.fit(net_a, data, data, cfg)
    model.fit(net_b, permuted, permuted, cfg)
    for name in net_a.params():
        assert np.array_equal(net_a.params()[name], net_b.params()[name])


def test_fit_same_seed_is_bit_identical():
    rng = np.random.default_rng(45)
    data = _separable_two_class_dataset(rng, n_per_class=20)
    cfg = model.TrainConfig(batch_size=16, learning_rate=1e-3, epochs=2, seed=46)
    nets = []
    for _ in range(2):
        net = model.TwoStreamNetwork.initialize(TINY, seed=47)
        model.fit(net, data, data, cfg)
        nets.append(net)
    for name in nets[0].params():
        assert np.array_equal(nets[0].params()[name], nets[1].params()[name])


def test_fit_rejects_empty_dataset():
    net = model.TwoStreamNetwork.initialize(TINY, seed=48)
    empty = model.ArrayDataset(
        [np.zeros((0, 12, 2)), np.zeros((0, 12, 3))], np.zeros(0, dtype=int)
    )
    with pytest.raises(ConfigError):
        model.fit(net, empty, empty, model.TrainConfig(epochs=1))


def test_fit_aborts_on_poisoned_weights():
    rng = np.random.default_rng(49)
    data = _separable_two_class_dataset(rng, n_per_class=10)
    net = model.TwoStreamNetwork.initialize(TINY, seed=50)
    net.fc_layers[0].weights[0, 0] = np.nan
    with pytest.raises(TrainingDivergedError):
        model.fit(net, data, data, model.TrainConfig(batch_size=8, epochs=1))


# ---------------------------------------------------------------------------
# evaluation bookkeeping
# ---------------------------------------------------------------------------

class _OracleStub:
    """Perfect predictor: reads the label planted in the first channel."""

    def __init__(self, config):
        self.config = config

    def forward_batch(self, stream_inputs, mode="eval"):
        planted = stream_inputs[0][:, 0, 0].astype(int)
        scores = np.zeros((len(planted), self.config.n_classes))
        scores[np.arange(len(planted)), planted] = 1.0
        return scores


def test_evaluate_perfect_predictor_gives_identity_confusion():
    labels = np.repeat(np.arange(5), 4)
    arrays = [np.zeros((20, 12, 2)), np.zeros((20, 12, 3))]
    arrays[0][:, 0, 0] = labels
    data = model.ArrayDataset(arrays, labels)
    accuracy, confusion = model.evaluate(_OracleStub(TINY), data)
    assert accuracy == 1.0
    assert np.array_equal(confusion, np.diag([4] * 5))


def test_evaluate_accuracy_equals_frequency_weighted_recall():
    cfg = TINY
    net = model.TwoStreamNetwork.initialize(cfg, seed=51)
    rng = np.random.default_rng(52)
    labels = rng.integers(0, 5, size=200)
    data = model.ArrayDataset(_random_inputs(rng, cfg, 200), labels)
    accuracy, confusion = model.evaluate(net, data)
    assert confusion.sum() == 200
    support = confusion.sum(axis=0)
    recalls = np.divide(
        np.diag(confusion), support, out=np.zeros(5), where=support > 0
    )
    weighted = float((recalls * support).sum() / support.sum())
    assert abs(accuracy - weighted) < 1e-12


def test_evaluate_empty_dataset_raises():
    net = model.TwoStreamNetwork.initialize(TINY, seed=53)
    empty = model.ArrayDataset(
        [np.zeros((0, 12, 2)), np.zeros((0, 12, 3))], np.zeros(0, dtype=int)
    )
    with pytest.raises(ConfigError):
        model.evaluate(net, empty)


# ---------------------------------------------------------------------------
# weight files
# ---------------------------------------------------------------------------

def test_weight_round_trip_is_bit_exact(tmp_path):
    net = model.TwoStreamNetwork.initialize(TINY, seed=61)
    path = tmp_path / "w.bin"
    model.save_weights(net, path)
    loaded = model.load_weights(path)
    assert loaded.config == net.config
    for name in net.params():
        assert np.array_equal(net.params()[name], loaded.params()[name])


def test_weight_file_bytes_are_deterministic(tmp_path):
    net = model.TwoStreamNetwork.initialize(TINY, seed=62)
    p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
    model.save_weights(net, p1)
    model.save_weights(net, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_weight_load_bad_magic(tmp_path):
    path = tmp_path / "w.bin"
    net = model.TwoStreamNetwork.initialize(TINY, seed=63)
    model.save_weights(net, path)
    blob = bytearray(path.read_bytes())
    blob[0] ^= 0xFF
    path.write_bytes(bytes(blob))
    with pytest.raises(WeightMagicError):
        model.load_weights(path)


def test_weight_load_bad_version(tmp_path):
    path = tmp_path / "w.bin"
    net = model.TwoStreamNetwork.initialize(TINY, seed=64)
    model.save_weights(net, path)
    blob = bytearray(path.read_bytes())
    blob[8] = 99
    path.write_bytes(bytes(blob))
    with pytest.raises(WeightVersionError):
        model.load_weights(path)


def test_weight_load_truncated(tmp_path):
    path = tmp_path / "w.bin"
    net = model.TwoStreamNetwork.initialize(TINY, seed=65)
    model.save_weights(net, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:len(blob) - 100])
    with pytest.raises(WeightTruncationError):
        model.load_weights(path)


def test_weight_load_topology_mismatch(tmp_path):
    path = tmp_path / "w.bin"
    net = model.TwoStreamNetwork.initialize(TINY, seed=66)
    model.save_weights(net, path)
    with pytest.raises(WeightTopologyError):
        model.load_weights(path, expected_config=model.two_stream_config())


def test_weight_load_trailing_garbage(tmp_path):
    path = tmp_path / "w.bin"
    net = model.TwoStreamNetwork.initialize(TINY, seed=67)
    model.save_weights(net, path)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(WeightTopologyError):
        model.load_weights(path)
