"""Two-stream 1-D CNN over head-tracking windows, plus its single-stream
variants, the training loop and weight-file serialization.

The default network has a body stream over linear velocity ([40 x 3]) and a
head stream over angular velocity + angular acceleration ([40 x 6]). Each
stream runs three convolutions (channels 64/128/256, kernel 7, stride 1,
padding 2) with ReLU, max-pooling (kernel 3) after the first two; stream
features are flattened, concatenated (256 + 256 = 512), passed through
dropout and two ReLU dense layers (1024, 512) into a linear 18-way output.
The output scores are raw (no softmax): downstream thresholds compare against
raw score values.

The same class also builds single-stream networks (e.g. all 9 kinematic
channels, or one stream over a channel subset with a reduced class count) for
ablation and comparison runs.
"""

import json
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import nn
from .errors import (
    ConfigError,
    TrainingDivergedError,
    WeightMagicError,
    WeightTopologyError,
    WeightTruncationError,
    WeightVersionError,
)
from .labels import N_CLASSES

WEIGHT_MAGIC = b"HMDACTW1"
WEIGHT_VERSION = 1


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkConfig:
    """Topology of a (multi-)stream 1-D CNN classifier.

    ``streams`` maps stream name -> input channel count, in declared order;
    declared order is also the concatenation and serialization order.
    """

    streams: tuple = (("body", 3), ("head", 6))
    window_len: int = 40
    conv_channels: tuple = (64, 128, 256)
    kernel: int = 7
    stride: int = 1
    padding: int = 2
    pool: int = 3
    fc: tuple = (1024, 512)
    n_classes: int = N_CLASSES
    dropout: float = 0.2

    def length_trace(self):
        """Per-stream feature lengths after each conv/pool stage.

        Pooling follows every convolution except the last; raises ConfigError
        if any stage would produce an empty feature map.
        """
        trace = []
        length = self.window_len
        for i in range(len(self.conv_channels)):
            padded = length + 2 * self.padding
            if padded < self.kernel:
                raise ConfigError(
                    f"conv stage {i + 1}: length {length} too short for "
                    f"kernel {self.kernel} with padding {self.padding}"
                )
            length = (padded - self.kernel) // self.stride + 1
            trace.append(length)
            if i < len(self.conv_channels) - 1:
                if length < self.pool:
                    raise ConfigError(
                        f"pool after conv {i + 1}: length {length} shorter "
                        f"than pool kernel {self.pool}"
                    )
                length = (length - self.pool) // self.pool + 1
                trace.append(length)
        return trace

    def stream_feature_len(self):
        return self.conv_channels[-1] * self.length_trace()[-1]

    def concat_len(self):
        return self.stream_feature_len() * len(self.streams)

    def validate(self):
        if not self.streams:
            raise ConfigError("at least one stream required")
        if any(ch < 1 for _, ch in self.streams):
            raise ConfigError("stream channel counts must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")
        self.length_trace()
        return self

    def to_json_dict(self):
        return {
            "streams": [[name, ch] for name, ch in self.streams],
            "window_len": self.window_len,
            "conv_channels": list(self.conv_channels),
            "kernel": self.kernel,
            "stride": self.stride,
            "padding": self.padding,
            "pool": self.pool,
            "fc": list(self.fc),
            "n_classes": self.n_classes,
            "dropout": self.dropout,
        }

    @classmethod
    def from_json_dict(cls, d):
        try:
            return cls(
                streams=tuple((str(n), int(c)) for n, c in d["streams"]),
                window_len=int(d["window_len"]),
                conv_channels=tuple(int(c) for c in d["conv_channels"]),
                kernel=int(d["kernel"]),
                stride=int(d["stride"]),
                padding=int(d["padding"]),
                pool=int(d["pool"]),
                fc=tuple(int(f) for f in d["fc"]),
                n_classes=int(d["n_classes"]),
                dropout=float(d["dropout"]),
            ).validate()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad network config block: {exc}") from exc


def two_stream_config(**overrides) -> NetworkConfig:
    return replace(NetworkConfig(), **overrides).validate()


def single_stream_config(in_channels=9, n_classes=N_CLASSES, **overrides) -> NetworkConfig:
    cfg = NetworkConfig(streams=(("combined", in_channels),), n_classes=n_classes)
    return replace(cfg, **overrides).validate()


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

class ForwardCache:
    """Intermediate activations kept from a cached forward pass."""

    __slots__ = (
        "conv_inputs", "conv_pre", "pool_args", "pool_in_len", "stream_feats",
        "concat", "dropout_mask", "fc_inputs", "fc_pre", "scores",
    )

    def __init__(self):
        self.conv_inputs = []
        self.conv_pre = []
        self.pool_args = []
        self.pool_in_len = []
        self.stream_feats = []
        self.fc_inputs = []
        self.fc_pre = []


class TwoStreamNetwork:
    """The classifier: per-stream conv stacks fused by a dense head.

    Weights are owned as ``nn`` layer objects; ``params()`` exposes them as a
    name -> array dict in the frozen declared order used by Adam and by the
    weight-file format.
    """

    def __init__(self, config: NetworkConfig, stream_layers, fc_layers):
        self.config = config.validate()
        self.stream_layers = stream_layers    # {name: [Conv1DLayer, ...]}
        self.fc_layers = fc_layers            # [fc..., output]
        self._check_topology()

    # -- construction -------------------------------------------------------

    @classmethod
    def initialize(cls, config: NetworkConfig, seed: int):
        """He-initialized network: N(0, sqrt(2/fan_in)) weights, zero biases,
        drawn in declared parameter order from a single seeded generator."""
        config.validate()
        rng = np.random.default_rng(seed)
        stream_layers = {}
        for name, in_ch in config.streams:
            layers = []
            prev = in_ch
            for out_ch in config.conv_channels:
                fan_in = prev * config.kernel
                w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_ch, prev, config.kernel))
                layers.append(nn.Conv1DLayer(
                    w, np.zeros(out_ch), stride=config.stride, padding=config.padding,
                ))
                prev = out_ch
            stream_layers[name] = layers
        fc_layers = []
        prev = config.concat_len()
        for width in list(config.fc) + [config.n_classes]:
            w = rng.normal(0.0, np.sqrt(2.0 / prev), (width, prev))
            fc_layers.append(nn.DenseLayer(w, np.zeros(width)))
            prev = width
        return cls(config, stream_layers, fc_layers)

    def _check_topology(self):
        cfg = self.config
        names = [name for name, _ in cfg.streams]
        if list(self.stream_layers) != names:
            raise ConfigError("stream layer dict does not match config streams")
        for name, in_ch in cfg.streams:
            layers = self.stream_layers[name]
            if len(layers) != len(cfg.conv_channels):
                raise ConfigError(f"stream {name}: wrong number of conv layers")
            prev = in_ch
            for layer, out_ch in zip(layers, cfg.conv_channels):
                if layer.in_channels != prev or layer.out_channels != out_ch:
                    raise ConfigError(f"stream {name}: conv shape mismatch")
                prev = out_ch
        widths = list(cfg.fc) + [cfg.n_classes]
        if len(self.fc_layers) != len(widths):
            raise ConfigError("wrong number of dense layers")
        prev = cfg.concat_len()
        for layer, width in zip(self.fc_layers, widths):
            if layer.in_dim != prev or layer.out_dim != width:
                raise ConfigError("dense layer shape mismatch")
            prev = width

    # -- parameters ---------------------------------------------------------

    def params(self) -> dict:
        out = {}
        for name, _ in self.config.streams:
            for i, layer in enumerate(self.stream_layers[name], start=1):
                out[f"{name}.conv{i}.weights"] = layer.weights
                out[f"{name}.conv{i}.bias"] = layer.bias
        n_fc = len(self.fc_layers)
        for i, layer in enumerate(self.fc_layers, start=1):
            tag = "out" if i == n_fc else f"fc{i}"
            out[f"{tag}.weights"] = layer.weights
            out[f"{tag}.bias"] = layer.bias
        return out

    def copy(self):
        streams = {
            name: [
                nn.Conv1DLayer(l.weights.copy(), l.bias.copy(), l.stride, l.padding)
                for l in layers
            ]
            for name, layers in self.stream_layers.items()
        }
        fc = [nn.DenseLayer(l.weights.copy(), l.bias.copy()) for l in self.fc_layers]
        return TwoStreamNetwork(self.config, streams, fc)

    # -- forward ------------------------------------------------------------

    def forward_batch(self, stream_inputs, mode="eval", rng=None, dropout_mask=None,
                      cache=False):
        """Score a batch. ``stream_inputs``: one [B, window_len, C] array per
        stream in declared order. Returns scores [B, n_classes], or the full
        ForwardCache when ``cache`` is true.
        """
        cfg = self.config
        if len(stream_inputs) != len(cfg.streams):
            raise ConfigError(
                f"expected {len(cfg.streams)} stream inputs, got {len(stream_inputs)}"
            )
        cc = ForwardCache()
        feats = []
        n_batch = None
        for (name, in_ch), x in zip(cfg.streams, stream_inputs):
            x = np.ascontiguousarray(x, dtype=np.float64)
            if x.ndim != 3 or x.shape[1] != cfg.window_len or x.shape[2] != in_ch:
                raise ConfigError(
                    f"stream {name!r}: expected [B, {cfg.window_len}, {in_ch}], "
                    f"got {x.shape}"
                )
            if n_batch is None:
                n_batch = x.shape[0]
            elif x.shape[0] != n_batch:
                raise ConfigError("stream inputs disagree on batch size")
            in_list, pre_list, arg_list, len_list = [], [], [], []
            layers = self.stream_layers[name]
            for i, layer in enumerate(layers):
                in_list.append(x)
                z = nn.conv1d_batch(x, layer)
                pre_list.append(z)
                a = nn.relu(z)
                if i < len(layers) - 1:
                    len_list.append(a.shape[1])
                    a, arg = nn.maxpool1d_batch(a, cfg.pool)
                    arg_list.append(arg)
                x = a
            cc.conv_inputs.append(in_list)
            cc.conv_pre.append(pre_list)
            cc.pool_args.append(arg_list)
            cc.pool_in_len.append(len_list)
            cc.stream_feats.append(x.shape)
            feats.append(x.reshape(n_batch, -1))
        concat = feats[0] if len(feats) == 1 else np.concatenate(feats, axis=1)
        cc.concat = concat

        if mode == "train" and dropout_mask is None:
            dropped, dropout_mask = nn.dropout_apply(concat, cfg.dropout, "train", rng)
        elif dropout_mask is not None:
            dropped = concat * dropout_mask
        else:
            dropped, _ = nn.dropout_apply(concat, cfg.dropout, "eval")
        cc.dropout_mask = dropout_mask

        h = dropped
        for i, layer in enumerate(self.fc_layers):
            cc.fc_inputs.append(h)
            z = nn.dense_batch(h, layer)
            if i < len(self.fc_layers) - 1:
                cc.fc_pre.append(z)
                h = nn.relu(z)
            else:
                h = z
        cc.scores = h
        return cc if cache else h

    def forward(self, *stream_windows, mode="eval", rng=None):
        """Score one window per stream (each [window_len, C]); returns the
        raw [n_classes] score vector."""
        batch = [np.asarray(w, dtype=np.float64)[None, :, :] for w in stream_windows]
        return self.forward_batch(batch, mode=mode, rng=rng)[0]

    # -- backward -----------------------------------------------------------

    def backward(self, cache: ForwardCache, grad_scores) -> dict:
        """Gradients of a scalar loss wrt every parameter, given the gradient
        at the output scores and the cache from forward_batch(cache=True)."""
        if not isinstance(cache, ForwardCache) or cache.scores is None:
            raise ValueError("backward requires the cache of a prior forward pass")
        cfg = self.config
        grads = {}
        g = np.asarray(grad_scores, dtype=np.float64)

        n_fc = len(self.fc_layers)
        for i in range(n_fc - 1, -1, -1):
            layer = self.fc_layers[i]
            tag = "out" if i == n_fc - 1 else f"fc{i + 1}"
            g, gw, gb = nn.dense_backward_batch(cache.fc_inputs[i], layer, g)
            grads[f"{tag}.weights"] = gw
            grads[f"{tag}.bias"] = gb
            if i > 0:
                g = nn.relu_backward(g, cache.fc_pre[i - 1])

        if cache.dropout_mask is not None:
            g = g * cache.dropout_mask

        feat_len = cfg.stream_feature_len()
        for s in range(len(cfg.streams) - 1, -1, -1):
            name = cfg.streams[s][0]
            gs = g[:, s * feat_len:(s + 1) * feat_len].reshape(cache.stream_feats[s])
            layers = self.stream_layers[name]
            for i in range(len(layers) - 1, -1, -1):
                if i < len(layers) - 1:
                    gs = nn.maxpool1d_backward_batch(
                        gs, cache.pool_args[s][i], cache.pool_in_len[s][i]
                    )
                gs = nn.relu_backward(gs, cache.conv_pre[s][i])
                gs, gw, gb = nn.conv1d_backward_batch(
                    cache.conv_inputs[s][i], layers[i], gs
                )
                grads[f"{name}.conv{i + 1}.weights"] = gw
                grads[f"{name}.conv{i + 1}.bias"] = gb
        return {name: grads[name] for name in self.params()}

    # -- loss helpers -------------------------------------------------------

    def batch_loss_and_grads(self, stream_inputs, labels, rng=None, dropout_mask=None):
        """Mean cross-entropy over the batch plus parameter gradients.

        Returns (loss, grads, dropout_mask) so finite-difference checks can
        re-evaluate the loss under the identical dropout mask.
        """
        cache = self.forward_batch(
            stream_inputs, mode="train", rng=rng, dropout_mask=dropout_mask, cache=True
        )
        losses, grad_logits = nn.softmax_cross_entropy_batch(cache.scores, labels)
        grads = self.backward(cache, grad_logits / len(losses))
        return float(losses.mean()), grads, cache.dropout_mask

    def batch_loss(self, stream_inputs, labels, dropout_mask=None):
        mode = "train" if dropout_mask is not None else "eval"
        scores = self.forward_batch(stream_inputs, mode=mode, dropout_mask=dropout_mask)
        losses, _ = nn.softmax_cross_entropy_batch(scores, labels)
        return float(losses.mean())


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainConfig:
    batch_size: int = 512
    learning_rate: float = 1e-4
    epochs: int = 60
    seed: int = 0
    stop_at_accuracy: float = None   # early stop once held-out accuracy reached
    log: callable = None             # optional str -> None progress sink

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")


@dataclass
class EpochStats:
    epoch: int
    mean_loss: float
    test_accuracy: float


def fit(net: TwoStreamNetwork, train_data, test_data, cfg: TrainConfig):
    """Mini-batch Adam training; returns the per-epoch history.

    `train_data`/`test_data` provide: n, labels, gather(rows) -> stream
    arrays, canonical_rank() -> stable ordering key. Windows are re-sorted by
    canonical rank first, so the result is invariant to presentation order.
    Deterministic per cfg.seed: each epoch shuffles with a seed derived from
    (seed, epoch) and draws its dropout masks from the same generator.
    """
    if train_data.n == 0:
        raise ConfigError("empty training set")
    base_order = np.argsort(train_data.canonical_rank(), kind="stable")
    params = net.params()
    state = nn.adam_init(params, learning_rate=cfg.learning_rate)
    history = []
    for epoch in range(1, cfg.epochs + 1):
        rng = np.random.default_rng([cfg.seed, epoch])
        order = base_order[rng.permutation(train_data.n)]
        loss_sum = 0.0
        for i in range(0, train_data.n, cfg.batch_size):
            rows = order[i:i + cfg.batch_size]
            inputs = train_data.gather(rows)
            labels = train_data.labels[rows]
            try:
                loss, grads, _ = net.batch_loss_and_grads(inputs, labels, rng=rng)
            except ValueError as exc:
                raise TrainingDivergedError(
                    f"epoch {epoch}, batch {i // cfg.batch_size}: {exc}"
                ) from exc
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {i // cfg.batch_size}"
                )
            nn.adam_step(params, grads, state)
            loss_sum += loss * len(rows)
        mean_loss = loss_sum / train_data.n
        accuracy, _ = evaluate(net, test_data)
        history.append(EpochStats(epoch, mean_loss, accuracy))
        if cfg.log is not None:
            cfg.log(f"epoch {epoch}: loss {mean_loss:.4f} test_acc {accuracy:.4f}")
        if cfg.stop_at_accuracy is not None and accuracy >= cfg.stop_at_accuracy:
            break
    return history


def evaluate(net: TwoStreamNetwork, data, batch_size=512):
    """Accuracy and raw confusion counts (rows = predicted, cols = true) by
    raw-score argmax. Normalization of the confusion matrix is a rendering
    concern; see harness.render_confusion."""
    if data.n == 0:
        raise ConfigError("empty evaluation set")
    n_cls = net.config.n_classes
    confusion = np.zeros((n_cls, n_cls), dtype=np.int64)
    for i in range(0, data.n, batch_size):
        rows = np.arange(i, min(i + batch_size, data.n))
        scores = net.forward_batch(data.gather(rows), mode="eval")
        pred = scores.argmax(axis=1)
        true = data.labels[rows]
        np.add.at(confusion, (pred, true), 1)
    accuracy = float(np.trace(confusion)) / float(confusion.sum())
    return accuracy, confusion


# ---------------------------------------------------------------------------
# In-memory dataset adapter
# ---------------------------------------------------------------------------

class ArrayDataset:
    """Stream arrays held directly in memory (tests, calibration buffers)."""

    def __init__(self, stream_arrays, labels, ranks=None):
        self.arrays = [np.ascontiguousarray(a, dtype=np.float64) for a in stream_arrays]
        self.labels = np.asarray(labels, dtype=np.int64)
        self.n = len(self.labels)
        for a in self.arrays:
            if a.shape[0] != self.n:
                raise ConfigError("stream array length does not match labels")
        self._ranks = np.arange(self.n) if ranks is None else np.asarray(ranks)

    def gather(self, rows):
        return [a[rows] for a in self.arrays]

    def canonical_rank(self):
        return self._ranks


# ---------------------------------------------------------------------------
# Weight files
# ---------------------------------------------------------------------------

def save_weights(net: TwoStreamNetwork, path):
    """Versioned binary container: magic, version, JSON config block, then
    every parameter array as little-endian float64 in declared order."""
    config_blob = json.dumps(
        net.config.to_json_dict(), sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(WEIGHT_MAGIC)
        fh.write(struct.pack("<II", WEIGHT_VERSION, len(config_blob)))
        fh.write(config_blob)
        for array in net.params().values():
            fh.write(np.ascontiguousarray(array, dtype="<f8").tobytes())


def load_weights(path, expected_config: NetworkConfig = None) -> TwoStreamNetwork:
    """Load a weight file; raises a distinct error for a bad magic string,
    unsupported version, topology mismatch or truncated payload."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(WEIGHT_MAGIC) or blob[:len(WEIGHT_MAGIC)] != WEIGHT_MAGIC:
        raise WeightMagicError(f"{path}: not a weight file (bad magic)")
    off = len(WEIGHT_MAGIC)
    if len(blob) < off + 8:
        raise WeightTruncationError(f"{path}: truncated header")
    version, cfg_len = struct.unpack_from("<II", blob, off)
    off += 8
    if version != WEIGHT_VERSION:
        raise WeightVersionError(f"{path}: unsupported weight version {version}")
    if len(blob) < off + cfg_len:
        raise WeightTruncationError(f"{path}: truncated config block")
    try:
        config = NetworkConfig.from_json_dict(json.loads(blob[off:off + cfg_len]))
    except (json.JSONDecodeError, ConfigError) as exc:
        raise WeightTopologyError(f"{path}: bad config block: {exc}") from exc
    off += cfg_len
    if expected_config is not None and config != expected_config:
        raise WeightTopologyError(
            f"{path}: stored topology does not match the expected configuration"
        )

    net = TwoStreamNetwork.initialize(config, seed=0)
    for name, array in net.params().items():
        nbytes = array.size * 8
        if len(blob) < off + nbytes:
            raise WeightTruncationError(f"{path}: truncated in array {name!r}")
        values = np.frombuffer(blob[off:off + nbytes], dtype="<f8")
        array[...] = values.reshape(array.shape)
        off += nbytes
    if off != len(blob):
        raise WeightTopologyError(f"{path}: {len(blob) - off} unexpected trailing bytes")
    return net
