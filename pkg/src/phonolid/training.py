"""Training strategies: 2-step, joint (two-phase loss balance), E2E, statistics.

The 2-step path trains the acoustic model on the CTC objective alone, then
the classifier on posteriorgrams from the frozen acoustic model. Joint
training minimizes ``ctc + lambda * xent`` end to end, first with a small
lambda (early stop on the joint validation loss), then fine-tuning with a
large lambda (early stop on validation balanced accuracy). E2E reuses the
joint loop with the CTC coefficient zeroed. All strategies use Adam, seeded
shuffling that visits every training segment exactly once per epoch, and
best-checkpoint early stopping.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np

from . import ctc as ctc_mod
from . import nn
from .acoustic import AcousticModel
from .evaluate import balanced_accuracy, confusion_matrix
from .lid import LanguageClassifier, clean_mask, linear_clf_train

logger = logging.getLogger(__name__)

TRAIN_MODES = ("two_step", "joint", "e2e", "statistics")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 32
    lambda_phase1: float = 0.1
    lambda_phase2: float = 100.0
    patience: int = 5
    max_epochs: int = 100
    seed: int = 0
    mode: str = "two_step"
    clean_threshold: float = 0.95
    compute_dtype: str = "float32"  # training math; CTC stays float64 inside

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        if self.compute_dtype not in ("float32", "float64"):
            raise ValueError(f"compute_dtype must be float32 or float64, got {self.compute_dtype!r}")


@dataclass
class TrainingSegment:
    """One segment as the trainers see it."""

    song_id: str
    features: np.ndarray  # (N, 123) float32
    ctc_labels: list[int]  # charset ids, instrumental segments carry ["I"]
    lid_target: int | None  # class index; None for instrumental/ambiguous


def compute_class_weights(lid_targets, n_classes: int) -> np.ndarray:
    """w_l = T / (L * n_l) over labeled segments; every class must appear."""
    counts = np.zeros(n_classes, dtype=np.float64)
    for target in lid_targets:
        if target is not None:
            counts[target] += 1
    if np.any(counts == 0):
        missing = [i for i, c in enumerate(counts) if c == 0]
        raise ValueError(f"no training segments for class indices {missing}")
    total = counts.sum()
    return total / (n_classes * counts)


def _snapshot(params: dict) -> dict:
    return {k: v.copy() for k, v in params.items()}


class EarlyStopper:
    """Tracks the best validation metric and the params that produced it."""

    def __init__(self, patience: int, maximize: bool):
        self.patience = patience
        self.maximize = maximize
        self.best = None
        self.best_params = None
        self.stale = 0

    def update(self, metric: float, params: dict) -> bool:
        better = self.best is None or (metric > self.best if self.maximize else metric < self.best)
        if better:
            self.best = metric
            self.best_params = _snapshot(params)
            self.stale = 0
        else:
            self.stale += 1
        return better

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


def _epoch_batches(segments, batch_size, rng):
    """Batches of indices, grouped by frame count, seeded shuffle per epoch."""
    by_frames: dict[int, list[int]] = {}
    for i, seg in enumerate(segments):
        by_frames.setdefault(seg.features.shape[0], []).append(i)
    batches = []
    for n in sorted(by_frames):
        idx = np.array(by_frames[n])
        rng.shuffle(idx)
        for k in range(0, len(idx), batch_size):
            batches.append(idx[k : k + batch_size])
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def _check_finite(value, what):
    if not np.isfinite(value):
        raise RuntimeError(f"training diverged: {what} is {value}")


class EpochLogger:
    def __init__(self, log_fn=None):
        self.log_fn = log_fn
        self.history: list[dict] = []

    def write(self, **fields):
        self.history.append(fields)
        if self.log_fn is not None:
            line = " ".join(
                f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}" for k, v in fields.items()
            )
            self.log_fn(line)


def _mean_val_ctc(model, val_segments, batch_size):
    total, count = 0.0, 0
    for batch in _chunk_uniform(val_segments, batch_size):
        feats = np.stack([seg.features for seg in batch])
        logits = model.forward_batch(feats, train=False)
        for b, seg in enumerate(batch):
            try:
                total += ctc_mod.ctc_loss(nn.log_softmax(logits[b], axis=1), seg.ctc_labels)
                count += 1
            except ctc_mod.UnalignableError:
                continue
    return total / max(count, 1)


def _chunk_uniform(segments, batch_size):
    """Deterministic batches grouped by frame count (no shuffling)."""
    by_frames: dict[int, list] = {}
    for seg in segments:
        by_frames.setdefault(seg.features.shape[0], []).append(seg)
    for n in sorted(by_frames):
        group = by_frames[n]
        for k in range(0, len(group), batch_size):
            yield group[k : k + batch_size]


def train_acoustic(model: AcousticModel, train_segments, val_segments, config: TrainConfig, log_fn=None):
    """Minimize mean CTC loss; return (model, history) at the best val loss."""
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    drop_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 2]))
    opt = nn.Adam(lr=config.lr)
    stopper = EarlyStopper(config.patience, maximize=False)
    epoch_log = EpochLogger(log_fn)
    for epoch in range(config.max_epochs):
        t0 = time.monotonic()
        total, count = 0.0, 0
        for batch_idx in _epoch_batches(train_segments, config.batch_size, rng):
            batch = [train_segments[i] for i in batch_idx]
            feats = np.stack([seg.features for seg in batch])
            logits = model.forward_batch(feats, train=True, rng=drop_rng)
            dlogits = np.zeros_like(logits)
            losses = []
            for b, seg in enumerate(batch):
                try:
                    loss, grad = ctc_mod.ctc_grad(logits[b], seg.ctc_labels)
                except ctc_mod.UnalignableError:
                    logger.warning("skipping unalignable segment of song %s", seg.song_id)
                    continue
                losses.append(loss)
                dlogits[b] = grad
            if not losses:
                continue
            dlogits /= len(losses)
            model.zero_grads()
            model.backward_batch(dlogits)
            opt.step(model.params(), model.grads())
            total += sum(losses)
            count += len(losses)
        train_ctc = total / max(count, 1)
        _check_finite(train_ctc, "train CTC loss")
        val_ctc = _mean_val_ctc(model, val_segments, config.batch_size)
        _check_finite(val_ctc, "validation CTC loss")
        stopper.update(val_ctc, model.params())
        epoch_log.write(
            epoch=epoch, train_ctc=train_ctc, val_ctc=val_ctc, wall_time=time.monotonic() - t0
        )
        if stopper.should_stop:
            break
    model.load_params(stopper.best_params)
    return model, epoch_log.history


def _lid_val_balanced_accuracy(classifier, val_items, batch_size=64):
    val_items = [(rows, t) for rows, t in val_items if rows.shape[0] > 0]
    true_idx, pred_idx = [], []
    for k in range(0, len(val_items), batch_size):
        batch = val_items[k : k + batch_size]
        logits = classifier.forward_batch([rows for rows, _ in batch], train=False)
        true_idx.extend(t for _, t in batch)
        pred_idx.extend(int(i) for i in np.argmax(logits, axis=1))
    if not true_idx:
        return 0.0
    cm = confusion_matrix(true_idx, pred_idx, classifier.n_classes)
    return balanced_accuracy(cm, allow_missing=True)


def train_lid(classifier: LanguageClassifier, train_items, val_items, class_weights, config: TrainConfig, log_fn=None):
    """Train the recurrent classifier on (cleaned posteriorgram, target) pairs.

    Early stops on validation balanced accuracy; returns the best checkpoint.
    """
    train_items = [(rows, t) for rows, t in train_items if rows.shape[0] > 0]
    targets = {t for _, t in train_items}
    if len(targets) < 2:
        raise ValueError("classifier training needs at least 2 language classes")
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 3]))
    drop_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 4]))
    opt = nn.Adam(lr=config.lr)
    stopper = EarlyStopper(config.patience, maximize=True)
    epoch_log = EpochLogger(log_fn)
    for epoch in range(config.max_epochs):
        t0 = time.monotonic()
        order = rng.permutation(len(train_items))
        total, count = 0.0, 0
        for k in range(0, len(order), config.batch_size):
            batch = [train_items[i] for i in order[k : k + config.batch_size]]
            classifier.zero_grads()
            logits = classifier.forward_batch([rows for rows, _ in batch], train=True, rng=drop_rng)
            dlogits = np.zeros_like(logits)
            for b, (_, target) in enumerate(batch):
                loss, grad = nn.weighted_xent_from_logits(logits[b], target, class_weights)
                dlogits[b] = grad / len(batch)
                total += loss
                count += 1
            classifier.backward_batch(dlogits)
            opt.step(classifier.params(), classifier.grads())
        train_lid_loss = total / max(count, 1)
        _check_finite(train_lid_loss, "train LID loss")
        val_bacc = _lid_val_balanced_accuracy(classifier, val_items)
        stopper.update(val_bacc, classifier.params())
        epoch_log.write(
            epoch=epoch, train_lid=train_lid_loss, val_bacc=val_bacc, wall_time=time.monotonic() - t0
        )
        if stopper.should_stop:
            break
    classifier.load_params(stopper.best_params)
    return classifier, epoch_log.history


def _softmax_rows_backward(dprobs, probs):
    dot = np.sum(dprobs * probs, axis=1, keepdims=True)
    return probs * (dprobs - dot)


def _joint_batch(model, classifier, batch, class_weights, lam, ctc_coeff, config, train, drop_rng):
    """Forward/backward one joint batch. Returns (ctc_loss, lid_loss, counts)."""
    feats = np.stack([seg.features for seg in batch])
    logits = model.forward_batch(feats, train=train, rng=drop_rng)
    dlogits = np.zeros_like(logits)
    ctc_losses = []
    for b, seg in enumerate(batch):
        if ctc_coeff == 0.0:
            break
        try:
            loss, grad = ctc_mod.ctc_grad(logits[b], seg.ctc_labels)
            ctc_losses.append(loss)
            dlogits[b] += grad  # scaled below
        except ctc_mod.UnalignableError:
            logger.warning("skipping unalignable segment of song %s (CTC term)", seg.song_id)

    # LID term: cleaned softmax rows, one padded classifier batch
    lid_entries = []  # (batch position, probs, mask, target)
    for b, seg in enumerate(batch):
        if seg.lid_target is None:
            continue
        probs = nn.softmax(np.asarray(logits[b], dtype=np.float64), axis=1)
        mask = clean_mask(probs, threshold=config.clean_threshold)
        if not mask.any():
            continue
        lid_entries.append((b, probs, mask, seg.lid_target))
    lid_losses = []
    drows_list = None
    if lid_entries:
        glogits = classifier.forward_batch(
            [probs[mask] for _, probs, mask, _ in lid_entries], train=train, rng=drop_rng
        )
        dglogits = np.zeros_like(glogits)
        for i, (_, _, _, target) in enumerate(lid_entries):
            loss, grad = nn.weighted_xent_from_logits(glogits[i], target, class_weights)
            lid_losses.append(loss)
            dglogits[i] = grad
        if train:
            drows_list = classifier.backward_batch(dglogits)

    n_ctc = max(len(ctc_losses), 1)
    n_lid = max(len(lid_losses), 1)
    if train:
        # d(total)/dlogits = ctc_coeff * mean ctc grads + lam * mean LID grads
        dlogits /= n_ctc
        if drows_list is not None:
            for (b, probs, mask, _), drows in zip(lid_entries, drows_list):
                dprobs = np.zeros_like(probs)
                dprobs[mask] = drows
                dlogits[b] += (lam / n_lid) * _softmax_rows_backward(dprobs, probs).astype(dlogits.dtype)
        model.zero_grads()
        model.backward_batch(dlogits)
    mean_ctc = sum(ctc_losses) / n_ctc if ctc_losses else 0.0
    mean_lid = sum(lid_losses) / n_lid if lid_losses else 0.0
    return mean_ctc, mean_lid, len(ctc_losses), len(lid_losses)


def _joint_val_metrics(model, classifier, val_segments, class_weights, lam, ctc_coeff, config):
    totals = np.zeros(2)
    counts = np.zeros(2)
    true_idx, pred_idx = [], []
    for batch in _chunk_uniform(val_segments, config.batch_size):
        feats = np.stack([seg.features for seg in batch])
        logits = model.forward_batch(feats, train=False)
        rows_batch, targets_batch = [], []
        for b, seg in enumerate(batch):
            if ctc_coeff != 0.0:
                try:
                    totals[0] += ctc_mod.ctc_loss(nn.log_softmax(logits[b], axis=1), seg.ctc_labels)
                    counts[0] += 1
                except ctc_mod.UnalignableError:
                    pass
            if seg.lid_target is None:
                continue
            probs = nn.softmax(np.asarray(logits[b], dtype=np.float64), axis=1)
            rows = probs[clean_mask(probs, threshold=config.clean_threshold)]
            if rows.shape[0] == 0:
                continue
            rows_batch.append(rows)
            targets_batch.append(seg.lid_target)
        if rows_batch:
            glogits = classifier.forward_batch(rows_batch, train=False)
            for i, target in enumerate(targets_batch):
                loss, _ = nn.weighted_xent_from_logits(glogits[i], target, class_weights)
                totals[1] += loss
                counts[1] += 1
                true_idx.append(target)
                pred_idx.append(int(np.argmax(glogits[i])))
    val_ctc = totals[0] / max(counts[0], 1)
    val_lid = totals[1] / max(counts[1], 1)
    if true_idx:
        bacc = balanced_accuracy(
            confusion_matrix(true_idx, pred_idx, classifier.n_classes), allow_missing=True
        )
    else:
        bacc = 0.0
    return ctc_coeff * val_ctc + lam * val_lid, val_ctc, val_lid, bacc


def train_joint(
    model: AcousticModel,
    classifier: LanguageClassifier,
    train_segments,
    val_segments,
    class_weights,
    config: TrainConfig,
    log_fn=None,
):
    """Joint (or E2E) training per the two-phase loss-balance schedule.

    Phase 1 uses the small lambda and early-stops on the joint validation
    loss; phase 2 fine-tunes with the large lambda and early-stops on
    validation balanced accuracy. E2E mode zeroes the CTC coefficient.
    """
    if config.mode not in ("joint", "e2e"):
        raise ValueError(f"train_joint requires mode joint or e2e, got {config.mode!r}")
    ctc_coeff = 0.0 if config.mode == "e2e" else 1.0
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 5]))
    drop_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 6]))
    opt_f = nn.Adam(lr=config.lr)
    opt_g = nn.Adam(lr=config.lr)
    epoch_log = EpochLogger(log_fn)
    epoch = 0
    for phase, lam, maximize in ((1, config.lambda_phase1, False), (2, config.lambda_phase2, True)):
        stopper = EarlyStopper(config.patience, maximize=maximize)
        for _ in range(config.max_epochs):
            t0 = time.monotonic()
            sum_ctc, sum_lid, n_batches = 0.0, 0.0, 0
            for batch_idx in _epoch_batches(train_segments, config.batch_size, rng):
                batch = [train_segments[i] for i in batch_idx]
                mean_ctc, mean_lid, n_ctc, n_lid = _joint_batch(
                    model, classifier, batch, class_weights, lam, ctc_coeff, config, True, drop_rng
                )
                classifier_grads = classifier.grads()
                if n_lid > 0:
                    for g in classifier_grads.values():
                        g *= lam / max(n_lid, 1)
                    opt_g.step(classifier.params(), classifier_grads)
                opt_f.step(model.params(), model.grads())
                classifier.zero_grads()
                sum_ctc += mean_ctc
                sum_lid += mean_lid
                n_batches += 1
            train_ctc = sum_ctc / max(n_batches, 1)
            train_lid_loss = sum_lid / max(n_batches, 1)
            _check_finite(train_ctc + train_lid_loss, "joint training loss")
            val_joint, val_ctc, val_lid, val_bacc = _joint_val_metrics(
                model, classifier, val_segments, class_weights, lam, ctc_coeff, config
            )
            _check_finite(val_joint, "joint validation loss")
            metric = val_bacc if maximize else val_joint
            params = {**{f"F.{k}": v for k, v in model.params().items()},
                      **{f"G.{k}": v for k, v in classifier.params().items()}}
            stopper.update(metric, params)
            epoch_log.write(
                epoch=epoch,
                phase=phase,
                lam=lam,
                train_ctc=train_ctc,
                train_lid=train_lid_loss,
                val_ctc=val_ctc,
                val_lid=val_lid,
                val_joint=val_joint,
                val_bacc=val_bacc,
                wall_time=time.monotonic() - t0,
            )
            epoch += 1
            if stopper.should_stop:
                break
        best = stopper.best_params
        model.load_params({k[2:]: v for k, v in best.items() if k.startswith("F.")})
        classifier.load_params({k[2:]: v for k, v in best.items() if k.startswith("G.")})
    return model, classifier, epoch_log.history


def train_statistics(stats_vectors, targets, class_weights, classes):
    """Linear max-margin classifier on pooled song statistics."""
    return linear_clf_train(stats_vectors, targets, class_weights, classes)
