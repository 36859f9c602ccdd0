"""Song-level prediction and the evaluation protocol.

A song verdict averages the language score vectors of its usable segments
(segments whose cleaned posteriorgram decodes to fewer than a handful of
words are treated as instrumental/ambiguous and discarded) and takes the
argmax, breaking ties toward the lowest class index. Reports carry balanced
accuracy, macro-F1 and per-class F1 with bootstrap standard errors; the
open-set report additionally splits the "others" accuracy into in-domain
and out-of-domain languages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctc import greedy_decode
from .lid import clean_posteriorgram, length_normalize, linear_clf_predict, stats_pool
from .nn import softmax


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def confusion_matrix(true_idx, pred_idx, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    for t, p in zip(true_idx, pred_idx):
        cm[t, p] += 1
    return cm


def balanced_accuracy(cm: np.ndarray, allow_missing: bool = False) -> float:
    """Mean of per-class recalls, in percent."""
    cm = np.asarray(cm, dtype=np.float64)
    row_sums = cm.sum(axis=1)
    if not allow_missing and np.any(row_sums == 0):
        raise ValueError("confusion matrix has a true class with no samples")
    present = row_sums > 0
    recalls = np.diag(cm)[present] / row_sums[present]
    return float(recalls.mean() * 100.0)


def f1_per_class(cm: np.ndarray) -> np.ndarray:
    """Per-class F1 in percent; 0 where precision + recall is 0."""
    cm = np.asarray(cm, dtype=np.float64)
    tp = np.diag(cm)
    denom = cm.sum(axis=1) + cm.sum(axis=0)  # 2tp + fn + fp
    with np.errstate(invalid="ignore", divide="ignore"):
        f1 = np.where(denom > 0, 2.0 * tp / denom, 0.0)
    return f1 * 100.0


def macro_f1(cm: np.ndarray) -> float:
    return float(f1_per_class(cm).mean())


def std_error(metric_fn, per_song_records, n_classes: int, resamples: int = 1000, seed: int = 0):
    """Bootstrap standard error of a confusion-matrix metric over songs.

    ``metric_fn`` maps a confusion matrix to a float or a vector; the return
    value matches its shape. Records are (true_idx, pred_idx) pairs.
    """
    records = list(per_song_records)
    if len(records) < 2:
        raise ValueError("bootstrap needs at least 2 songs")
    rng = np.random.default_rng(seed)
    true_arr = np.array([r[0] for r in records])
    pred_arr = np.array([r[1] for r in records])
    values = []
    for _ in range(resamples):
        pick = rng.integers(0, len(records), size=len(records))
        values.append(metric_fn(confusion_matrix(true_arr[pick], pred_arr[pick], n_classes)))
    return np.std(np.asarray(values, dtype=np.float64), axis=0)


# ---------------------------------------------------------------------------
# song-level prediction
# ---------------------------------------------------------------------------


def edit_distance(ref, hyp) -> int:
    """Levenshtein distance between two token sequences."""
    ref, hyp = list(ref), list(hyp)
    prev = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        curr = [i] + [0] * len(hyp)
        for j, h in enumerate(hyp, start=1):
            curr[j] = min(prev[j] + 1, curr[j - 1] + 1, prev[j - 1] + (r != h))
        prev = curr
    return prev[-1]


def phoneme_error_rate(pairs) -> float:
    """Total edit distance over total reference length, for (ref, hyp) pairs."""
    total_dist = 0
    total_len = 0
    for ref, hyp in pairs:
        total_dist += edit_distance(ref, hyp)
        total_len += len(ref)
    if total_len == 0:
        raise ValueError("phoneme error rate needs non-empty references")
    return total_dist / total_len


def decoded_word_count(cleaned_rows: np.ndarray, space_id: int = 1, blank_id: int = 0) -> int:
    """Words in the greedy decode of a cleaned posteriorgram (split on space)."""
    tokens = greedy_decode(cleaned_rows, blank_id=blank_id) if cleaned_rows.shape[0] else []
    words = 0
    in_word = False
    for token in tokens:
        if token == space_id:
            in_word = False
        elif not in_word:
            words += 1
            in_word = True
    return words


def combine_segment_scores(score_vectors) -> tuple[int, np.ndarray] | None:
    """Eq.-style aggregation: mean score vector, argmax with low-index ties."""
    vectors = [np.asarray(v, dtype=np.float64) for v in score_vectors]
    if not vectors:
        return None
    mean = np.mean(vectors, axis=0)
    return int(np.argmax(mean)), mean


def predict_from_posteriorgrams(
    classifier,
    posteriorgrams,
    clean_threshold: float = 0.95,
    min_decoded_words: int = 3,
    space_id: int = 1,
    blank_id: int = 0,
):
    """Recurrent-classifier verdict for one song given segment posteriorgrams.

    Returns ``(class_index, mean_scores, n_used)``; class_index is None when
    every segment looks instrumental/ambiguous.
    """
    usable = []
    for post in posteriorgrams:
        cleaned = clean_posteriorgram(post, threshold=clean_threshold, blank_id=blank_id)
        if cleaned.shape[0] == 0:
            continue
        if decoded_word_count(cleaned, space_id=space_id, blank_id=blank_id) < min_decoded_words:
            continue
        usable.append(cleaned)
    if not usable:
        return None, None, 0
    logits = classifier.forward_batch(usable, train=False)
    scores = [softmax(row) for row in np.asarray(logits, dtype=np.float64)]
    idx, mean = combine_segment_scores(scores)
    return idx, mean, len(scores)


def predict_from_stats(
    linear_clf,
    posteriorgrams,
    clean_threshold: float = 0.95,
    blank_id: int = 0,
):
    """Statistics-variant verdict: pool retained frames across the whole song."""
    rows = [
        clean_posteriorgram(post, threshold=clean_threshold, blank_id=blank_id)
        for post in posteriorgrams
    ]
    rows = [r for r in rows if r.shape[0] > 0]
    if not rows:
        return None, None, 0
    vector = length_normalize(stats_pool(np.concatenate(rows, axis=0)))
    probs = linear_clf_predict(linear_clf, vector)
    return int(np.argmax(probs)), probs, len(rows)


# ---------------------------------------------------------------------------
# scenario reports
# ---------------------------------------------------------------------------


@dataclass
class EvalReport:
    scenario: str
    classes: list[str]
    n_songs: int
    unclassified_songs: int
    confusion: np.ndarray
    balanced_accuracy: float
    balanced_accuracy_se: float
    macro_f1: float
    macro_f1_se: float
    per_class_f1: dict[str, tuple[float, float]]
    target_macro_f1: float | None = None
    target_macro_f1_se: float | None = None
    others_f1: float | None = None
    others_f1_se: float | None = None
    in_domain_others_accuracy: float | None = None
    in_domain_others_accuracy_se: float | None = None
    in_domain_others_count: int = 0
    out_of_domain_others_accuracy: float | None = None
    out_of_domain_others_accuracy_se: float | None = None
    out_of_domain_others_count: int = 0

    def to_dict(self) -> dict:
        payload = {
            "scenario": self.scenario,
            "classes": self.classes,
            "n_songs": self.n_songs,
            "unclassified_songs": self.unclassified_songs,
            "confusion": self.confusion.tolist(),
            "balanced_accuracy": self.balanced_accuracy,
            "balanced_accuracy_se": self.balanced_accuracy_se,
            "macro_f1": self.macro_f1,
            "macro_f1_se": self.macro_f1_se,
            "per_class_f1": {k: list(v) for k, v in self.per_class_f1.items()},
        }
        for key in (
            "target_macro_f1",
            "target_macro_f1_se",
            "others_f1",
            "others_f1_se",
            "in_domain_others_accuracy",
            "in_domain_others_accuracy_se",
            "in_domain_others_count",
            "out_of_domain_others_accuracy",
            "out_of_domain_others_accuracy_se",
            "out_of_domain_others_count",
        ):
            value = getattr(self, key)
            if value is not None:
                payload[key] = value
        return payload


def _accuracy_se(flags, resamples, seed):
    flags = np.asarray(flags, dtype=np.float64)
    if len(flags) < 2:
        return 0.0
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(flags), size=(resamples, len(flags)))
    return float(np.std(flags[picks].mean(axis=1) * 100.0))


def run_scenario(
    song_records,
    classes,
    scenario: str,
    others_label: str = "others",
    training_languages=None,
    resamples: int = 1000,
    seed: int = 0,
) -> EvalReport:
    """Build the evaluation report.

    ``song_records`` are (true_class_idx, pred_class_idx_or_None, raw_language)
    triples, one per test song. For the open scenario, ``training_languages``
    (raw language codes seen in training) splits true-"others" songs into
    in-domain and out-of-domain.
    """
    if scenario not in ("closed", "open"):
        raise ValueError(f"unknown scenario {scenario!r}")
    if scenario == "open" and others_label not in classes:
        raise ValueError(f"open scenario requires an {others_label!r} class")
    if scenario == "closed" and others_label in classes:
        raise ValueError("closed scenario must not carry an others class")
    records = [(t, p) for t, p, _ in song_records if p is not None]
    unclassified = sum(1 for _, p, _ in song_records if p is None)
    if not records:
        raise ValueError("no classified songs to evaluate")
    n = len(classes)
    cm = confusion_matrix([t for t, _ in records], [p for _, p in records], n)

    def tolerant_bacc(m):
        return balanced_accuracy(m, allow_missing=True)

    report = EvalReport(
        scenario=scenario,
        classes=list(classes),
        n_songs=len(song_records),
        unclassified_songs=unclassified,
        confusion=cm,
        balanced_accuracy=balanced_accuracy(cm),
        balanced_accuracy_se=float(std_error(tolerant_bacc, records, n, resamples, seed)),
        macro_f1=macro_f1(cm),
        macro_f1_se=float(std_error(macro_f1, records, n, resamples, seed)),
        per_class_f1={},
    )
    per_class = f1_per_class(cm)
    per_class_se = std_error(f1_per_class, records, n, resamples, seed)
    report.per_class_f1 = {
        cls: (float(per_class[i]), float(per_class_se[i])) for i, cls in enumerate(classes)
    }

    if scenario == "open":
        others_idx = classes.index(others_label)
        target_ids = [i for i in range(n) if i != others_idx]

        def target_f1(m):
            return float(f1_per_class(m)[target_ids].mean())

        def others_f1(m):
            return float(f1_per_class(m)[others_idx])

        report.target_macro_f1 = target_f1(cm)
        report.target_macro_f1_se = float(std_error(target_f1, records, n, resamples, seed))
        report.others_f1 = others_f1(cm)
        report.others_f1_se = float(std_error(others_f1, records, n, resamples, seed))

        training_languages = set(training_languages or [])
        in_flags, out_flags = [], []
        for true_idx, pred_idx, raw_language in song_records:
            if true_idx != others_idx:
                continue
            hit = 1.0 if pred_idx == others_idx else 0.0
            if raw_language in training_languages:
                in_flags.append(hit)
            else:
                out_flags.append(hit)
        if in_flags:
            report.in_domain_others_accuracy = float(np.mean(in_flags) * 100.0)
            report.in_domain_others_accuracy_se = _accuracy_se(in_flags, resamples, seed)
            report.in_domain_others_count = len(in_flags)
        if out_flags:
            report.out_of_domain_others_accuracy = float(np.mean(out_flags) * 100.0)
            report.out_of_domain_others_accuracy_se = _accuracy_se(out_flags, resamples, seed)
            report.out_of_domain_others_count = len(out_flags)
    return report


def format_report(report: EvalReport) -> str:
    """Human-readable table mirroring the machine-readable report."""
    lines = [
        f"scenario: {report.scenario}",
        f"songs evaluated: {report.n_songs} (unclassified: {report.unclassified_songs})",
        "",
        f"{'metric':<34}{'value (%)':>12}{'SE':>8}",
        f"{'balanced accuracy':<34}{report.balanced_accuracy:>12.2f}{report.balanced_accuracy_se:>8.2f}",
        f"{'macro F1':<34}{report.macro_f1:>12.2f}{report.macro_f1_se:>8.2f}",
    ]
    for cls, (f1, se) in report.per_class_f1.items():
        lines.append(f"{'F1 [' + cls + ']':<34}{f1:>12.2f}{se:>8.2f}")
    if report.scenario == "open":
        lines.append(f"{'target macro F1':<34}{report.target_macro_f1:>12.2f}{report.target_macro_f1_se:>8.2f}")
        lines.append(f"{'others F1':<34}{report.others_f1:>12.2f}{report.others_f1_se:>8.2f}")
        if report.in_domain_others_accuracy is not None:
            lines.append(
                f"{'in-domain others accuracy':<34}{report.in_domain_others_accuracy:>12.2f}"
                f"{report.in_domain_others_accuracy_se:>8.2f}"
            )
        if report.out_of_domain_others_accuracy is not None:
            lines.append(
                f"{'out-of-domain others accuracy':<34}{report.out_of_domain_others_accuracy:>12.2f}"
                f"{report.out_of_domain_others_accuracy_se:>8.2f}"
            )
    lines.append("")
    lines.append("confusion (rows true, cols predicted):")
    width = max(len(c) for c in report.classes) + 2
    header = " " * width + "".join(f"{c:>{width}}" for c in report.classes)
    lines.append(header)
    for i, cls in enumerate(report.classes):
        row = "".join(f"{int(v):>{width}}" for v in report.confusion[i])
        lines.append(f"{cls:>{width}}" + row)
    return "\n".join(lines) + "\n"
