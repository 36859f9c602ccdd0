import numpy as np
import pytest

from phonolid import nn
from phonolid.ctc import (
    UnalignableError,
    ctc_grad,
    ctc_loss,
    expand_labels,
    greedy_decode,
    min_frames,
    oracle_ctc,
)
from phonolid.selftest import numeric_grad, relative_error


def test_expand_labels():
    assert expand_labels([1, 2]) == [0, 1, 0, 2, 0]
    assert expand_labels([]) == [0]
    assert expand_labels([1, 1]) == [0, 1, 0, 1, 0]


def test_min_frames_counts_repeats():
    assert min_frames([1, 2]) == 2
    assert min_frames([1, 1]) == 3
    assert min_frames([]) == 0


def test_single_frame_single_label():
    # P(y=[a]) with one frame is just p(a)
    lp = np.log(np.array([[0.4, 0.6]]))
    assert ctc_loss(lp, [1]) == pytest.approx(-np.log(0.6), abs=1e-9)
    assert ctc_loss(lp, [1]) == pytest.approx(0.5108, abs=1e-4)


def test_two_frames_uniform_probability():
    # paths aa, a-, -a out of 4 -> P = 0.75
    probs = np.full((2, 2), 0.5)
    loss = ctc_loss(np.log(probs), [1])
    assert np.exp(-loss) == pytest.approx(0.75, abs=1e-12)
    assert loss == pytest.approx(0.2877, abs=1e-4)
    assert oracle_ctc(probs, [1]) == pytest.approx(0.75, abs=1e-12)


def test_unalignable_raises():
    lp = np.log(np.full((1, 3), 1 / 3))
    with pytest.raises(UnalignableError):
        ctc_loss(lp, [1, 2])
    # repeated label needs a separating blank frame
    with pytest.raises(UnalignableError):
        ctc_loss(np.log(np.full((2, 3), 1 / 3)), [1, 1])


def test_blank_in_labels_rejected():
    with pytest.raises(ValueError):
        ctc_loss(np.log(np.full((3, 3), 1 / 3)), [0, 1])


def test_oracle_unreachable_is_zero():
    probs = np.full((1, 3), 1 / 3)
    assert oracle_ctc(probs, [1, 2]) == 0.0


def test_oracle_deterministic_rows():
    # rows put all mass on one path; oracle = indicator of its collapse
    probs = np.zeros((3, 3))
    probs[0, 1] = 1.0
    probs[1, 0] = 1.0
    probs[2, 2] = 1.0
    assert oracle_ctc(probs, [1, 2]) == 1.0
    assert oracle_ctc(probs, [2, 1]) == 0.0


def test_oracle_guard():
    probs = np.full((30, 4), 0.25)
    with pytest.raises(ValueError):
        oracle_ctc(probs, [1])


def test_loss_matches_oracle_random_instances():
    rng = np.random.default_rng(7)
    for _ in range(25):
        c = int(rng.integers(2, 5))
        n = int(rng.integers(1, 7))
        y = [int(v) for v in rng.integers(1, c, size=rng.integers(0, 4))]
        probs = rng.dirichlet(np.ones(c), size=n)
        if min_frames(y) > n:
            continue
        loss = ctc_loss(np.log(probs), y)
        assert np.exp(-loss) == pytest.approx(oracle_ctc(probs, y), abs=1e-9)


def test_loss_invariant_under_charset_relabeling():
    rng = np.random.default_rng(11)
    probs = rng.dirichlet(np.ones(4), size=5)
    y = [1, 3, 2]
    loss = ctc_loss(np.log(probs), y)
    # swap non-blank classes 1 and 3 consistently
    perm = [0, 3, 2, 1]
    probs_p = probs[:, perm]
    y_p = [perm.index(t) for t in y]
    loss_p = ctc_loss(np.log(probs_p), y_p)
    assert loss == pytest.approx(loss_p, abs=1e-12)


def test_grad_single_frame_closed_form():
    rng = np.random.default_rng(3)
    logits = rng.normal(size=(1, 4))
    loss, grad = ctc_grad(logits, [2])
    probs = nn.softmax(logits, axis=1)
    expected = probs.copy()
    expected[0, 2] -= 1.0
    assert np.allclose(grad, expected, atol=1e-12)


def test_grad_rows_sum_to_zero():
    rng = np.random.default_rng(4)
    logits = rng.normal(size=(6, 4))
    _, grad = ctc_grad(logits, [1, 2, 3])
    assert np.abs(grad.sum(axis=1)).max() < 1e-9


def test_grad_matches_finite_differences():
    rng = np.random.default_rng(9)
    checked = 0
    while checked < 10:
        c = int(rng.integers(2, 5))
        n = int(rng.integers(1, 7))
        y = [int(v) for v in rng.integers(1, c, size=rng.integers(1, 4))]
        if min_frames(y) > n:
            continue
        logits = rng.normal(size=(n, c))
        _, grad = ctc_grad(logits, y)

        def scalar():
            return ctc_loss(nn.log_softmax(logits, axis=1), y)

        assert relative_error(grad, numeric_grad(scalar, logits)) < 1e-4
        checked += 1


def test_greedy_decode():
    def post(path, c=3):
        rows = np.full((len(path), c), 0.01)
        for i, t in enumerate(path):
            rows[i, t] = 0.9
        return rows

    assert greedy_decode(post([1, 1, 0, 2])) == [1, 2]
    assert greedy_decode(post([1, 0, 1])) == [1, 1]
    assert greedy_decode(post([0, 0, 0])) == []
    assert greedy_decode(np.zeros((0, 3))) == []
