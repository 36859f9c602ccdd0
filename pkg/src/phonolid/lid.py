"""Language classification from phoneme posteriorgrams.

Two paths to a language probability vector:

* a recurrent classifier — two bidirectional LSTM layers whose second layer
  is read out as a single vector (last forward state + first backward state)
  followed by dense softmax;
* a statistics variant — per-class mean and variance pooled over all retained
  frames of a song, classified by a one-vs-rest linear max-margin model.

Both consume posteriorgrams cleaned of frames the acoustic model is
confident are blank.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import nn


def clean_mask(posteriorgram: np.ndarray, threshold: float = 0.95, blank_id: int = 0) -> np.ndarray:
    """Boolean mask of frames to keep: blank emission probability <= threshold."""
    posteriorgram = np.asarray(posteriorgram)
    return posteriorgram[:, blank_id] <= threshold


def clean_posteriorgram(posteriorgram: np.ndarray, threshold: float = 0.95, blank_id: int = 0) -> np.ndarray:
    """Drop frames whose blank probability exceeds the threshold (order kept)."""
    posteriorgram = np.asarray(posteriorgram)
    return posteriorgram[clean_mask(posteriorgram, threshold, blank_id)]


@dataclass(frozen=True)
class ClassifierConfig:
    lstm_layers: int = 2
    lstm_hidden: int = 64
    dropout: float = 0.2
    recurrent_dropout: float = 0.1
    clean_threshold: float = 0.95

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, payload):
        return cls(**payload)


class LanguageClassifier:
    """Recurrent classifier: cleaned posteriorgram -> language logits."""

    def __init__(self, input_dim: int, n_classes: int, config: ClassifierConfig = ClassifierConfig(), seed: int = 0):
        if n_classes < 2:
            raise ValueError(f"need at least 2 language classes, got {n_classes}")
        if config.lstm_layers < 1:
            raise ValueError("need at least one recurrent layer")
        self.input_dim = input_dim
        self.n_classes = n_classes
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(np.random.SeedSequence([seed]))
        self.lstms = []
        self.dropouts = []
        in_dim = input_dim
        for _ in range(config.lstm_layers):
            self.lstms.append(nn.BiLSTM(in_dim, config.lstm_hidden, config.recurrent_dropout, rng=rng))
            in_dim = 2 * config.lstm_hidden
        for _ in range(config.lstm_layers - 1):
            self.dropouts.append(nn.Dropout(config.dropout))
        self.dense = nn.Dense(in_dim, n_classes, rng=rng)
        self._layers = [(f"lstm{i + 1}", l) for i, l in enumerate(self.lstms)] + [("dense", self.dense)]

    def params(self) -> dict[str, np.ndarray]:
        return {f"{name}.{k}": v for name, layer in self._layers for k, v in layer.params.items()}

    def grads(self) -> dict[str, np.ndarray]:
        return {f"{name}.{k}": v for name, layer in self._layers for k, v in layer.grads.items()}

    def zero_grads(self):
        for _, layer in self._layers:
            layer.zero_grads()
        for d in self.dropouts:
            d.zero_grads()

    def load_params(self, values: dict[str, np.ndarray]):
        mine = self.params()
        if set(values) != set(mine):
            raise ValueError(f"parameter name mismatch: {sorted(set(values) ^ set(mine))}")
        for name, layer in self._layers:
            for key in layer.params:
                src = values[f"{name}.{key}"]
                if src.shape != layer.params[key].shape:
                    raise ValueError(f"{name}.{key}: shape {src.shape} != {layer.params[key].shape}")
                layer.params[key] = np.asarray(src, dtype=layer.dtype).copy()

    def astype(self, dtype):
        for _, layer in self._layers:
            layer.astype(dtype)
        for d in self.dropouts:
            d.astype(dtype)
        return self

    def forward_batch(self, rows_list, train: bool = False, rng=None) -> np.ndarray:
        """Batch of cleaned posteriorgrams (unequal lengths) -> logits (B, L).

        Sequences are end-padded and masked, so results match per-sequence
        forward passes exactly.
        """
        rows_list = [np.asarray(rows) for rows in rows_list]
        for rows in rows_list:
            if rows.ndim != 2 or rows.shape[1] != self.input_dim:
                raise ValueError(f"expected (T, {self.input_dim}) rows, got {rows.shape}")
            if rows.shape[0] == 0:
                raise ValueError("no voiced frames")
        lengths = np.array([rows.shape[0] for rows in rows_list])
        x = np.zeros((len(rows_list), int(lengths.max()), self.input_dim))
        for i, rows in enumerate(rows_list):
            x[i, : rows.shape[0]] = rows
        for i, lstm in enumerate(self.lstms):
            x = lstm.forward(x, train=train, rng=rng, lengths=lengths)
            if i < len(self.lstms) - 1:
                x = self.dropouts[i].forward(x, train=train, rng=rng)
        h = self.config.lstm_hidden
        self._seq_shape = x.shape
        self._lengths = lengths
        # per-sequence vector: last forward state, first backward state
        vec = np.concatenate([x[np.arange(len(lengths)), lengths - 1, :h], x[:, 0, h:]], axis=1)
        return self.dense.forward(vec)

    def backward_batch(self, dlogits: np.ndarray):
        """Gradients w.r.t. each input posteriorgram, trimmed to its length."""
        dvec = self.dense.backward(np.asarray(dlogits))
        h = self.config.lstm_hidden
        lengths = self._lengths
        dx = np.zeros(self._seq_shape, dtype=dvec.dtype)
        dx[np.arange(len(lengths)), lengths - 1, :h] = dvec[:, :h]
        dx[:, 0, h:] += dvec[:, h:]
        for i in range(len(self.lstms) - 1, -1, -1):
            if i < len(self.lstms) - 1:
                dx = self.dropouts[i].backward(dx)
            dx = self.lstms[i].backward(dx)
        return [dx[i, : lengths[i]] for i in range(len(lengths))]

    def forward(self, rows: np.ndarray, train: bool = False, rng=None) -> np.ndarray:
        """Cleaned posteriorgram (T, |C|) -> language logits (L,)."""
        return self.forward_batch([rows], train=train, rng=rng)[0]

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        return self.backward_batch(np.asarray(dlogits)[None])[0]


def lid_forward(classifier: LanguageClassifier, cleaned: np.ndarray, train_mode: bool = False, rng=None) -> np.ndarray:
    """Language probability vector for one cleaned posteriorgram."""
    return nn.softmax(classifier.forward(cleaned, train=train_mode, rng=rng))


def stats_pool(cleaned_rows: np.ndarray) -> np.ndarray:
    """Per-class mean then population variance over a song's retained frames."""
    cleaned_rows = np.asarray(cleaned_rows, dtype=np.float64)
    if cleaned_rows.ndim != 2 or cleaned_rows.shape[0] == 0:
        raise ValueError("stats pooling needs at least one retained frame")
    return np.concatenate([cleaned_rows.mean(axis=0), cleaned_rows.var(axis=0)])


def length_normalize(vector: np.ndarray) -> np.ndarray:
    vector = np.asarray(vector, dtype=np.float64)
    norm = np.linalg.norm(vector)
    return vector / norm if norm > 0 else vector


@dataclass
class LinearClassifier:
    weights: np.ndarray  # (L, D)
    bias: np.ndarray  # (L,)
    classes: list[str]


def linear_clf_train(
    vectors,
    labels,
    class_weights,
    classes,
    l2: float = 1e-3,
    lr: float = 0.05,
    epochs: int = 1000,
) -> LinearClassifier:
    """One-vs-rest linear classifier, class-weighted hinge loss + L2, full batch.

    Samples are re-ordered canonically before training so the result is
    invariant to input permutation.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    n_classes = len(classes)
    present = np.unique(labels)
    if len(present) < 2:
        raise ValueError("linear classifier needs at least 2 classes in the training set")
    if len(present) != n_classes or present.min() < 0 or present.max() >= n_classes:
        raise ValueError("every class needs at least one training sample")
    order = np.lexsort(tuple(vectors.T) + (labels,))
    vectors, labels = vectors[order], labels[order]
    n, d = vectors.shape
    weights = np.zeros((n_classes, d))
    bias = np.zeros(n_classes)
    sample_w = class_weights[labels]
    targets = np.where(labels[None, :] == np.arange(n_classes)[:, None], 1.0, -1.0)  # (L, n)
    for _ in range(epochs):
        margins = weights @ vectors.T + bias[:, None]  # (L, n)
        active = (targets * margins < 1.0).astype(np.float64)
        coeff = -(sample_w[None, :] * targets * active) / n
        weights -= lr * (coeff @ vectors + 2.0 * l2 * weights)
        bias -= lr * coeff.sum(axis=1)
    return LinearClassifier(weights=weights, bias=bias, classes=list(classes))


def linear_clf_predict(clf: LinearClassifier, vector) -> np.ndarray:
    """Softmax-normalized margins for one vector."""
    vector = np.asarray(vector, dtype=np.float64)
    return nn.softmax(clf.weights @ vector + clf.bias)
