"""CTC loss, gradient, greedy decoding, and a brute-force verification oracle.

The loss marginalizes over all monotonic alignments between a label sequence
and the frame axis using the blank token. All recursions run in log space
with log-sum-exp, in float64. The gradient is taken with respect to
pre-softmax logits (softmax output minus label-occupancy posterior), which is
the numerically stable form.
"""

from __future__ import annotations

import itertools

import numpy as np

from .nn import log_softmax


class UnalignableError(Exception):
    """Label sequence cannot be aligned to the given number of frames."""


def expand_labels(y, blank_id=0):
    """Interleave blanks: [a, b] -> [blank, a, blank, b, blank]."""
    out = [blank_id]
    for token in y:
        out.append(int(token))
        out.append(blank_id)
    return out


def min_frames(y):
    """Fewest frames that can emit y: |y| plus one per consecutive repeat."""
    y = list(y)
    return len(y) + sum(1 for a, b in zip(y, y[1:]) if a == b)


def _check_labels(y, n_classes, blank_id):
    for token in y:
        if not 0 <= token < n_classes:
            raise ValueError(f"label id {token} out of range for {n_classes} classes")
        if token == blank_id:
            raise ValueError("label sequence must not contain the blank token")


def _alpha_recursion(lp_lab, skip_ok):
    n, s = lp_lab.shape
    alpha = np.full((n, s), -np.inf)
    alpha[0, 0] = lp_lab[0, 0]
    if s > 1:
        alpha[0, 1] = lp_lab[0, 1]
    for t in range(1, n):
        prev = alpha[t - 1]
        step = np.full(s, -np.inf)
        step[1:] = prev[:-1]
        skip = np.full(s, -np.inf)
        skip[2:] = np.where(skip_ok[2:], prev[:-2], -np.inf)
        alpha[t] = np.logaddexp(np.logaddexp(prev, step), skip) + lp_lab[t]
    return alpha


def _beta_recursion(lp_lab, skip_ok):
    # beta[t, s] excludes the emission at frame t (so beta[-1] ends at 0).
    n, s = lp_lab.shape
    beta = np.full((n, s), -np.inf)
    beta[n - 1, s - 1] = 0.0
    if s > 1:
        beta[n - 1, s - 2] = 0.0
    for t in range(n - 2, -1, -1):
        nxt = beta[t + 1] + lp_lab[t + 1]
        step = np.full(s, -np.inf)
        step[:-1] = nxt[1:]
        skip = np.full(s, -np.inf)
        # the skip from s lands on s+2 and is gated by that landing state
        skip[:-2] = np.where(skip_ok[2:], nxt[2:], -np.inf)
        beta[t] = np.logaddexp(np.logaddexp(nxt, step), skip)
    return beta


def _prepare(log_probs, y, blank_id):
    log_probs = np.asarray(log_probs, dtype=np.float64)
    if log_probs.ndim != 2:
        raise ValueError(f"log_probs must be (N, C), got shape {log_probs.shape}")
    n, c = log_probs.shape
    y = [int(t) for t in y]
    _check_labels(y, c, blank_id)
    if n < min_frames(y):
        raise UnalignableError(
            f"{len(y)} labels ({min_frames(y)} frames minimum) cannot align to {n} frames"
        )
    labels_ext = expand_labels(y, blank_id)
    lab = np.asarray(labels_ext)
    skip_ok = np.zeros(len(lab), dtype=bool)
    skip_ok[2:] = (lab[2:] != blank_id) & (lab[2:] != lab[:-2])
    return log_probs, labels_ext, skip_ok


def ctc_loss(log_probs, y, blank_id=0):
    """Negative log probability of label sequence y given per-frame log probs."""
    log_probs, labels_ext, skip_ok = _prepare(log_probs, y, blank_id)
    lp_lab = log_probs[:, labels_ext]
    alpha = _alpha_recursion(lp_lab, skip_ok)
    tail = alpha[-1, -1] if len(labels_ext) == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    if not np.isfinite(tail):
        raise UnalignableError("label sequence has zero probability under these frames")
    return float(-tail)


def ctc_grad(logits, y, blank_id=0):
    """Loss and its gradient w.r.t. pre-softmax logits.

    Returns ``(loss, grad)`` with ``grad = softmax(logits) - occupancy``,
    where occupancy[t, k] is the posterior probability that frame t emits
    class k on an alignment of y.
    """
    logits = np.asarray(logits, dtype=np.float64)
    log_probs = log_softmax(logits, axis=1)
    log_probs, labels_ext, skip_ok = _prepare(log_probs, y, blank_id)
    lp_lab = log_probs[:, labels_ext]
    alpha = _alpha_recursion(lp_lab, skip_ok)
    beta = _beta_recursion(lp_lab, skip_ok)
    tail = alpha[-1, -1] if len(labels_ext) == 1 else np.logaddexp(alpha[-1, -1], alpha[-1, -2])
    if not np.isfinite(tail):
        raise UnalignableError("label sequence has zero probability under these frames")
    gamma = np.exp(alpha + beta - tail)  # (N, S) state occupancies, rows sum to 1
    occupancy = np.zeros_like(log_probs)
    lab = np.asarray(labels_ext)
    for s in range(len(labels_ext)):
        occupancy[:, lab[s]] += gamma[:, s]
    grad = np.exp(log_probs) - occupancy
    return float(-tail), grad


def greedy_decode(posteriorgram, blank_id=0):
    """Best-path decode: per-frame argmax, collapse repeats, drop blanks."""
    posteriorgram = np.asarray(posteriorgram)
    if posteriorgram.shape[0] == 0:
        return []
    path = np.argmax(posteriorgram, axis=1)
    out = []
    prev = -1
    for token in path:
        if token != prev and token != blank_id:
            out.append(int(token))
        prev = token
    return out


def _collapse(path, blank_id):
    out = []
    prev = -1
    for token in path:
        if token != prev and token != blank_id:
            out.append(token)
        prev = token
    return out


def oracle_ctc(probs, y, blank_id=0, guard=10**6):
    """Sum of path probabilities over every frame-wise path that collapses to y.

    Exhaustive enumeration; refuses instances with more than ``guard`` paths.
    """
    probs = np.asarray(probs, dtype=np.float64)
    n, c = probs.shape
    if c**n > guard:
        raise ValueError(f"oracle guard exceeded: {c}^{n} > {guard} paths")
    y = [int(t) for t in y]
    total = 0.0
    for path in itertools.product(range(c), repeat=n):
        if _collapse(path, blank_id) == y:
            total += float(np.prod(probs[np.arange(n), path]))
    return total
