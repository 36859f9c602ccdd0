"""Built-in verification suites: CTC oracle equivalence and gradient checks.

These are the same routines the acceptance tests run at full scale; the CLI
``selftest`` command runs abridged versions. All finite differences are
central, h = 1e-5, in double precision, and errors are relative with a 1e-6
denominator floor.
"""

from __future__ import annotations

import itertools

import numpy as np

from . import ctc as ctc_mod
from . import nn

FD_STEP = 1e-5


def numeric_grad(f, x, h: float = FD_STEP) -> np.ndarray:
    """Central finite differences of scalar f() w.r.t. array x (in place)."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2.0 * h)
        it.iternext()
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-6)
    return float(np.max(np.abs(a - b) / denom))


def layer_gradient_error(layer, x, train: bool = False, mask_seed: int | None = None) -> float:
    """Worst relative error between backward() and finite differences.

    Checks the input gradient and every parameter gradient. Stochastic layers
    are made repeatable by reseeding an identical rng for every evaluation.
    """

    def fwd():
        rng = np.random.default_rng(mask_seed) if mask_seed is not None else None
        return layer.forward(x, train=train, rng=rng)

    out = fwd()
    proj = np.random.default_rng(1234).normal(size=out.shape)

    def scalar():
        return float(np.sum(fwd() * proj))

    scalar()  # leaves a fresh cache in place for backward
    layer.zero_grads()
    dx = layer.backward(proj)
    worst = relative_error(dx, numeric_grad(scalar, x))
    for name in layer.params:
        worst = max(worst, relative_error(layer.grads[name], numeric_grad(scalar, layer.params[name])))
    return worst


def check_layer_gradients(seed: int = 0, instances_per_layer: int = 15):
    """Random-instance gradient checks for every layer type.

    Returns  {layer name: (instances, max relative error)}.
    """
    rng = np.random.default_rng(seed)
    results = {}

    def record(name, err):
        count, worst = results.get(name, (0, 0.0))
        results[name] = (count + 1, max(worst, err))

    for i in range(instances_per_layer):
        cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        h, w = int(rng.integers(3, 8)), int(rng.integers(3, 9))
        layer = nn.Conv2d(cin, cout, rng=rng)
        record("conv2d", layer_gradient_error(layer, rng.normal(size=(2, cin, h, w))))

        layer = nn.MaxPool2d((2, 3))
        record("maxpool", layer_gradient_error(layer, rng.normal(size=(2, 2, int(rng.integers(4, 9)), int(rng.integers(6, 10))))))

        record("relu", layer_gradient_error(nn.ReLU(), rng.normal(size=(3, 5))))

        din, dout = int(rng.integers(2, 7)), int(rng.integers(2, 6))
        record("dense", layer_gradient_error(nn.Dense(din, dout, rng=rng), rng.normal(size=(2, 4, din))))

        record(
            "dropout",
            layer_gradient_error(nn.Dropout(0.35), rng.normal(size=(4, 6)), train=True, mask_seed=100 + i),
        )
        record("dropout_eval", layer_gradient_error(nn.Dropout(0.35), rng.normal(size=(4, 6)), train=False))

        din, hid, t = int(rng.integers(2, 5)), int(rng.integers(2, 5)), int(rng.integers(2, 6))
        layer = nn.BiLSTM(din, hid, rng=rng)
        record("bilstm", layer_gradient_error(layer, rng.normal(size=(2, t, din))))
        layer = nn.BiLSTM(din, hid, recurrent_dropout=0.3, rng=rng)
        record(
            "bilstm_recurrent_dropout",
            layer_gradient_error(layer, rng.normal(size=(2, t, din)), train=True, mask_seed=200 + i),
        )
    return results


def check_ctc_gradients(seed: int = 0, instances: int = 25):
    """ctc_grad vs finite differences on random (frames <= 6, classes <= 4) instances."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < instances:
        c = int(rng.integers(2, 5))
        n = int(rng.integers(1, 7))
        y = [int(v) for v in rng.integers(1, c, size=rng.integers(0, 4))]
        if ctc_mod.min_frames(y) > n:
            continue
        logits = rng.normal(size=(n, c))
        _, grad = ctc_mod.ctc_grad(logits, y)

        def scalar():
            return ctc_mod.ctc_loss(nn.log_softmax(logits, axis=1), y)

        worst = max(worst, relative_error(grad, numeric_grad(scalar, logits)))
        done += 1
    return done, worst


def check_ctc_oracle(max_frames: int = 6, max_classes: int = 4, max_labels: int = 3, seed: int = 0):
    """Exhaustive sweep: exp(-ctc_loss) vs path enumeration, plus unalignable cases.

    Returns (instances checked, max absolute deviation).
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    count = 0
    for c in range(2, max_classes + 1):
        label_seqs = [
            list(seq)
            for length in range(0, max_labels + 1)
            for seq in itertools.product(range(1, c), repeat=length)
        ]
        for n in range(1, max_frames + 1):
            probs = rng.dirichlet(np.ones(c), size=n)
            log_probs = np.log(probs)
            for y in label_seqs:
                if ctc_mod.min_frames(y) > n:
                    oracle = ctc_mod.oracle_ctc(probs, y)
                    if oracle != 0.0:
                        raise AssertionError(f"oracle nonzero for unalignable {y} over {n} frames")
                    try:
                        ctc_mod.ctc_loss(log_probs, y)
                    except ctc_mod.UnalignableError:
                        count += 1
                        continue
                    raise AssertionError(f"loss did not flag unalignable {y} over {n} frames")
                loss = ctc_mod.ctc_loss(log_probs, y)
                oracle = ctc_mod.oracle_ctc(probs, y)
                worst = max(worst, abs(np.exp(-loss) - oracle))
                count += 1
    return count, worst


def run_selftest(print_fn=print) -> bool:
    """Abridged oracle + gradient suites, one pass/fail line per check."""
    ok = True

    count, worst = check_ctc_oracle(max_frames=4)
    passed = worst < 1e-9
    ok &= passed
    print_fn(f"[{'PASS' if passed else 'FAIL'}] ctc oracle equivalence: {count} instances, max dev {worst:.2e}")

    count, worst = check_ctc_gradients(instances=15)
    passed = worst < 1e-4
    ok &= passed
    print_fn(f"[{'PASS' if passed else 'FAIL'}] ctc gradient check: {count} instances, max rel err {worst:.2e}")

    results = check_layer_gradients(instances_per_layer=4)
    for name in sorted(results):
        n, worst = results[name]
        passed = worst < 1e-4
        ok &= passed
        print_fn(f"[{'PASS' if passed else 'FAIL'}] {name} gradient check: {n} instances, max rel err {worst:.2e}")
    return ok
