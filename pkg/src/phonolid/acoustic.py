"""Convolutional-recurrent acoustic model: features -> phoneme posteriorgram.

Two conv sub-modules (conv 3x3 + ReLU + 2x3 max-pool) shrink time by 4 and
the 41 feature bins to 4; a stack of bidirectional LSTMs and a
time-distributed dense+softmax emit per-frame token probabilities over the
charset. The static/delta/delta-delta blocks of the 123-dim features enter
as 3 input channels.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import nn


@dataclass(frozen=True)
class AcousticConfig:
    conv_filters: tuple[int, int] = (32, 32)
    kernel: tuple[int, int] = (3, 3)
    pool: tuple[int, int] = (2, 3)
    lstm_layers: int = 3
    lstm_hidden: int = 256
    dropout: float = 0.1
    recurrent_dropout: float = 0.1
    channels: int = 3
    feature_bins: int = 41

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, payload):
        payload = dict(payload)
        for key in ("conv_filters", "kernel", "pool"):
            payload[key] = tuple(payload[key])
        return cls(**payload)


class AcousticModel:
    """CRNN mapping (N, 123) feature matrices to (N', |C|) logit rows."""

    def __init__(self, charset_size: int, config: AcousticConfig = AcousticConfig(), seed: int = 0):
        if charset_size < 2:
            raise ValueError(f"charset must have at least 2 tokens, got {charset_size}")
        if config.lstm_layers < 1:
            raise ValueError("need at least one recurrent layer")
        self.charset_size = charset_size
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed]))

        c1, c2 = config.conv_filters
        self.conv1 = nn.Conv2d(config.channels, c1, config.kernel, rng=rng)
        self.relu1 = nn.ReLU()
        self.pool1 = nn.MaxPool2d(config.pool)
        self.conv2 = nn.Conv2d(c1, c2, config.kernel, rng=rng)
        self.relu2 = nn.ReLU()
        self.pool2 = nn.MaxPool2d(config.pool)

        bins = (config.feature_bins // config.pool[1]) // config.pool[1]
        self.frame_dim = bins * c2
        self.lstms = []
        self.dropouts = []
        in_dim = self.frame_dim
        for _ in range(config.lstm_layers):
            self.lstms.append(nn.BiLSTM(in_dim, config.lstm_hidden, config.recurrent_dropout, rng=rng))
            in_dim = 2 * config.lstm_hidden
        for _ in range(config.lstm_layers - 1):
            self.dropouts.append(nn.Dropout(config.dropout))
        self.dense = nn.Dense(in_dim, charset_size, rng=rng)
        self._layers = self._named_layers()

    def _named_layers(self):
        layers = [("conv1", self.conv1), ("conv2", self.conv2)]
        layers += [(f"lstm{i + 1}", l) for i, l in enumerate(self.lstms)]
        layers.append(("dense", self.dense))
        return layers

    def params(self) -> dict[str, np.ndarray]:
        return {f"{name}.{k}": v for name, layer in self._layers for k, v in layer.params.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {f"{name}.{k}": v for name, layer in self._layers for k, v in layer.grads.items()}

    def zero_grads(self):
        for _, layer in self._layers:
            layer.zero_grads()
        for d in self.dropouts:
            d.zero_grads()
        self.relu1.zero_grads()
        self.relu2.zero_grads()
        self.pool1.zero_grads()
        self.pool2.zero_grads()

    def load_params(self, values: dict[str, np.ndarray]):
        mine = self.params()
        if set(values) != set(mine):
            missing = set(mine) ^ set(values)
            raise ValueError(f"parameter name mismatch: {sorted(missing)}")
        for name, layer in self._layers:
            for key in layer.params:
                src = values[f"{name}.{key}"]
                if src.shape != layer.params[key].shape:
                    raise ValueError(f"{name}.{key}: shape {src.shape} != {layer.params[key].shape}")
                layer.params[key] = np.asarray(src, dtype=layer.dtype).copy()

    def out_frames(self, n_frames: int) -> int:
        pt = self.config.pool[0]
        return (n_frames // pt) // pt

    def forward_batch(self, features: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        """(B, N, 123) feature batch -> (B, N', |C|) logits."""
        features = np.asarray(features, dtype=np.float64)
        if features.ndim != 3:
            raise ValueError(f"expected (B, N, F) features, got {features.shape}")
        b, n, f = features.shape
        bins, ch = self.config.feature_bins, self.config.channels
        if f != bins * ch:
            raise ValueError(f"expected {bins * ch} feature dims, got {f}")
        if n < self.config.pool[0] ** 2:
            raise ValueError(f"need at least {self.config.pool[0] ** 2} frames, got {n}")
        # (B, N, 3*41) -> (B, 3, N, 41): channels are static / delta / delta-delta
        x = features.reshape(b, n, ch, bins).transpose(0, 2, 1, 3)
        x = self.pool1.forward(self.relu1.forward(self.conv1.forward(x)))
        x = self.pool2.forward(self.relu2.forward(self.conv2.forward(x)))
        # (B, C, N', W') -> (B, N', C*W')
        bb, cc, tt, ww = x.shape
        x = x.transpose(0, 2, 1, 3).reshape(bb, tt, cc * ww)
        for i, lstm in enumerate(self.lstms):
            x = lstm.forward(x, train=train, rng=rng)
            if i < len(self.lstms) - 1:
                x = self.dropouts[i].forward(x, train=train, rng=rng)
        return self.dense.forward(x)

    def backward_batch(self, dlogits: np.ndarray) -> None:
        dx = self.dense.backward(dlogits)
        for i in range(len(self.lstms) - 1, -1, -1):
            if i < len(self.lstms) - 1:
                dx = self.dropouts[i].backward(dx)
            dx = self.lstms[i].backward(dx)
        b, tt, _ = dx.shape
        cc = self.config.conv_filters[1]
        dx = dx.reshape(b, tt, cc, -1).transpose(0, 2, 1, 3)
        dx = self.conv2.backward(self.relu2.backward(self.pool2.backward(dx)))
        self.conv1.backward(self.relu1.backward(self.pool1.backward(dx)), input_grad=False)

    def astype(self, dtype):
        for _, layer in self._layers:
            layer.astype(dtype)
        for d in self.dropouts:
            d.astype(dtype)
        return self


def am_forward(model: AcousticModel, features: np.ndarray, train_mode: bool = False, rng=None):
    """Single segment forward: (N, 123) -> (logits (N', |C|), posteriorgram).

    The posteriorgram is normalized in float64 regardless of compute dtype.
    """
    logits = model.forward_batch(np.asarray(features)[None], train=train_mode, rng=rng)[0]
    return logits, nn.softmax(np.asarray(logits, dtype=np.float64), axis=1)


def build_acoustic_model(charset, config: AcousticConfig = AcousticConfig(), seed: int = 0) -> AcousticModel:
    return AcousticModel(charset_size=len(charset), config=config, seed=seed)
