"""Minimal reverse-mode layer library backing the acoustic and language models.

Covers exactly what the architectures need: 2-D convolution (same padding,
stride 1), 2x3 max-pooling, ReLU, bidirectional LSTM with per-sequence
recurrent dropout, dense, dropout, softmax/cross-entropy, and Adam. Every
layer caches its forward activations and implements an explicit backward
pass; all math runs in float64.

Layers follow one protocol: ``forward(x, train=False, rng=None)`` returns the
output, ``backward(dy)`` returns the input gradient and accumulates parameter
gradients into ``self.grads``. Call ``zero_grads()`` between optimizer steps.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def softmax(x, axis=-1):
    shifted = x - np.max(x, axis=axis, keepdims=True)
    ex = np.exp(shifted)
    return ex / np.sum(ex, axis=axis, keepdims=True)


def log_softmax(x, axis=-1):
    shifted = x - np.max(x, axis=axis, keepdims=True)
    return shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def weighted_xent(probs, target, class_weights, floor=1e-10):
    """Class-weighted cross-entropy on an already-normalized probability row."""
    probs = np.asarray(probs, dtype=np.float64)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    if not 0 <= target < probs.shape[-1]:
        raise ValueError(f"target index {target} out of range for {probs.shape[-1]} classes")
    return -class_weights[target] * np.log(probs[target] + floor)


def weighted_xent_from_logits(logits, target, class_weights):
    """Fused log-softmax cross-entropy; returns (loss, dloss/dlogits)."""
    logits = np.asarray(logits, dtype=np.float64)
    class_weights = np.asarray(class_weights, dtype=np.float64)
    if not 0 <= target < logits.shape[-1]:
        raise ValueError(f"target index {target} out of range for {logits.shape[-1]} classes")
    logp = log_softmax(logits)
    w = class_weights[target]
    loss = -w * logp[target]
    grad = w * np.exp(logp)
    grad[target] -= w
    return loss, grad


class Layer:
    """Base class: parameter bookkeeping plus the forward/backward contract."""

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None
        self.dtype = np.float64

    def astype(self, dtype):
        """Switch the compute/parameter dtype (float32 for fast training)."""
        self.dtype = np.dtype(dtype)
        self.params = {k: v.astype(self.dtype) for k, v in self.params.items()}
        self.zero_grads()
        return self

    def zero_grads(self):
        for name, p in self.params.items():
            self.grads[name] = np.zeros_like(p)

    def _take_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{type(self).__name__}.backward called before forward")
        cache = self._cache
        self._cache = None
        return cache

    def forward(self, x, train=False, rng=None):  # pragma: no cover - interface
        raise NotImplementedError

    def backward(self, dy):  # pragma: no cover - interface
        raise NotImplementedError


class Conv2d(Layer):
    """3x3-style convolution, stride 1, zero ("same") padding. Input (B,C,H,W)."""

    def __init__(self, in_channels, out_channels, kernel=(3, 3), rng=None):
        super().__init__()
        if kernel[0] % 2 == 0 or kernel[1] % 2 == 0:
            raise ValueError(f"kernel dims must be odd for same padding, got {kernel}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel = tuple(kernel)
        rng = rng or np.random.default_rng(0)
        kh, kw = self.kernel
        fan_in = in_channels * kh * kw
        fan_out = out_channels * kh * kw
        self.params = {
            "kernel": glorot_uniform(rng, (out_channels, in_channels, kh, kw), fan_in, fan_out),
            "bias": np.zeros(out_channels),
        }
        self.zero_grads()

    def _weight_matrix(self):
        # (O, C, kh, kw) -> (C*kh*kw, O), matching the im2col column order
        return self.params["kernel"].transpose(1, 2, 3, 0).reshape(-1, self.out_channels)

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(
                f"conv2d expects (B,{self.in_channels},H,W), got {x.shape}"
            )
        kh, kw = self.kernel
        ph, pw = kh // 2, kw // 2
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        b, c, h, w = x.shape
        # (B, C, H, W, kh, kw) -> (B, H, W, C, kh, kw) columns
        windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
        cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * kh * kw)
        out = cols @ self._weight_matrix() + self.params["bias"]
        self._cache = cols, x.shape
        return out.reshape(b, h, w, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, dy, input_grad=True):
        cols, x_shape = self._take_cache()
        b, c, h, w = x_shape
        kh, kw = self.kernel
        dy2 = np.asarray(dy, dtype=self.dtype).transpose(0, 2, 3, 1).reshape(b * h * w, -1)
        dk = cols.T @ dy2  # (C*kh*kw, O)
        self.grads["kernel"] += dk.reshape(c, kh, kw, self.out_channels).transpose(3, 0, 1, 2)
        self.grads["bias"] += dy2.sum(axis=0)
        if not input_grad:
            return None
        dcols = (dy2 @ self._weight_matrix().T).reshape(b, h, w, c, kh, kw)
        # fold columns back; channel-last keeps the tap additions contiguous
        dxp = np.zeros((b, h + 2 * (kh // 2), w + 2 * (kw // 2), c), dtype=self.dtype)
        for i in range(kh):
            for j in range(kw):
                dxp[:, i : i + h, j : j + w, :] += dcols[:, :, :, :, i, j]
        ph, pw = kh // 2, kw // 2
        return dxp[:, ph : ph + h, pw : pw + w, :].transpose(0, 3, 1, 2)


class MaxPool2d(Layer):
    """Non-overlapping max pooling with floor division of (H, W)."""

    def __init__(self, pool=(2, 3)):
        super().__init__()
        self.pool = tuple(pool)

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x)
        if x.ndim != 4:
            raise ValueError(f"maxpool expects (B,C,H,W), got {x.shape}")
        ph, pw = self.pool
        b, c, h, w = x.shape
        ho, wo = h // ph, w // pw
        if ho < 1 or wo < 1:
            raise ValueError(f"maxpool {self.pool} on too-small input {x.shape}")
        blocks = x[:, :, : ho * ph, : wo * pw].reshape(b, c, ho, ph, wo, pw)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, ph * pw)
        arg = np.argmax(blocks, axis=-1)
        out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
        self._cache = arg, x.shape, x.dtype
        return out

    def backward(self, dy):
        arg, x_shape, dtype = self._take_cache()
        dy = np.asarray(dy, dtype=dtype)
        ph, pw = self.pool
        b, c, h, w = x_shape
        ho, wo = h // ph, w // pw
        dblocks = np.zeros((b, c, ho, wo, ph * pw), dtype=dtype)
        np.put_along_axis(dblocks, arg[..., None], dy[..., None], axis=-1)
        dx = np.zeros(x_shape, dtype=dtype)
        dx[:, :, : ho * ph, : wo * pw] = (
            dblocks.reshape(b, c, ho, wo, ph, pw).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho * ph, wo * pw)
        )
        return dx


class ReLU(Layer):
    def forward(self, x, train=False, rng=None):
        x = np.asarray(x)
        self._cache = x > 0
        return np.where(self._cache, x, x.dtype.type(0))

    def backward(self, dy):
        mask = self._take_cache()
        dy = np.asarray(dy)
        return np.where(mask, dy, dy.dtype.type(0))


class Dense(Layer):
    """Affine map on the trailing axis; time-distributed when given (B,T,D)."""

    def __init__(self, in_dim, out_dim, rng=None):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        rng = rng or np.random.default_rng(0)
        self.params = {
            "weight": glorot_uniform(rng, (in_dim, out_dim), in_dim, out_dim),
            "bias": np.zeros(out_dim),
        }
        self.zero_grads()

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"dense expects trailing dim {self.in_dim}, got {x.shape}")
        self._cache = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, dy):
        x = self._take_cache()
        dy = np.asarray(dy, dtype=self.dtype)
        x2 = x.reshape(-1, self.in_dim)
        dy2 = dy.reshape(-1, self.out_dim)
        self.grads["weight"] += x2.T @ dy2
        self.grads["bias"] += dy2.sum(axis=0)
        return dy @ self.params["weight"].T


class Dropout(Layer):
    """Inverted dropout; identity (and pass-through gradient) in eval mode."""

    def __init__(self, rate):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0,1), got {rate}")
        self.rate = rate

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x)
        if not train or self.rate == 0.0:
            self._cache = (None,)
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs an rng")
        mask = ((rng.random(x.shape) >= self.rate) / (1.0 - self.rate)).astype(x.dtype)
        self._cache = (mask,)
        return x * mask

    def backward(self, dy):
        (mask,) = self._take_cache()
        dy = np.asarray(dy)
        return dy if mask is None else dy * mask


class BiLSTM(Layer):
    """Bidirectional LSTM over (B, T, D) -> (B, T, 2H).

    Output frame t concatenates the forward state after frames 0..t and the
    backward state after frames T-1..t. Recurrent dropout draws one mask per
    direction per sequence and applies it to the recurrent input.

    ``lengths`` supports end-padded batches of unequal sequences: padded
    steps leave the state untouched, so per-frame outputs are only valid for
    t < lengths[i] (and, in the backward direction, equal the state that has
    seen frames lengths[i]-1 .. t).

    Gate order in the fused weight matrices is [input, forget, cell, output];
    the forget-gate bias initializes to 1.
    """

    def __init__(self, in_dim, hidden, recurrent_dropout=0.0, rng=None):
        super().__init__()
        self.in_dim = in_dim
        self.hidden = hidden
        self.recurrent_dropout = recurrent_dropout
        rng = rng or np.random.default_rng(0)
        self.params = {}
        for d in ("f", "b"):
            self.params[f"wx_{d}"] = glorot_uniform(rng, (in_dim, 4 * hidden), in_dim, hidden)
            self.params[f"wh_{d}"] = glorot_uniform(rng, (hidden, 4 * hidden), hidden, hidden)
            bias = np.zeros(4 * hidden)
            bias[hidden : 2 * hidden] = 1.0
            self.params[f"bias_{d}"] = bias
        self.zero_grads()

    def _run_direction(self, x, direction, rmask, active):
        b, t, _ = x.shape
        h_dim = self.hidden
        wx = self.params[f"wx_{direction}"]
        wh = self.params[f"wh_{direction}"]
        bias = self.params[f"bias_{direction}"]
        steps = range(t) if direction == "f" else range(t - 1, -1, -1)
        xw = x @ wx
        gates = np.zeros((b, t, 4 * h_dim), dtype=self.dtype)
        cells = np.zeros((b, t, h_dim), dtype=self.dtype)
        hs = np.zeros((b, t, h_dim), dtype=self.dtype)
        h_prev_drop = np.zeros((b, t, h_dim), dtype=self.dtype)
        h = np.zeros((b, h_dim), dtype=self.dtype)
        c = np.zeros((b, h_dim), dtype=self.dtype)
        for step in steps:
            hd = h * rmask if rmask is not None else h
            z = xw[:, step] + hd @ wh + bias
            gi = sigmoid(z[:, :h_dim])
            gf = sigmoid(z[:, h_dim : 2 * h_dim])
            gg = np.tanh(z[:, 2 * h_dim : 3 * h_dim])
            go = sigmoid(z[:, 3 * h_dim :])
            c_new = gf * c + gi * gg
            h_new = go * np.tanh(c_new)
            if active is not None:
                upd = active[:, step : step + 1].astype(self.dtype)
                c_new = upd * c_new + (1.0 - upd) * c
                h_new = upd * h_new + (1.0 - upd) * h
            gates[:, step] = np.concatenate([gi, gf, gg, go], axis=1)
            cells[:, step] = c_new
            h_prev_drop[:, step] = hd
            c = c_new
            h = h_new
            hs[:, step] = h
        return {"gates": gates, "cells": cells, "hs": hs, "h_prev_drop": h_prev_drop, "steps": list(steps)}

    def forward(self, x, train=False, rng=None, lengths=None):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[-1] != self.in_dim:
            raise ValueError(f"bilstm expects (B,T,{self.in_dim}), got {x.shape}")
        active = None
        if lengths is not None:
            lengths = np.asarray(lengths, dtype=np.int64)
            if lengths.shape != (x.shape[0],):
                raise ValueError(f"lengths must be ({x.shape[0]},), got {lengths.shape}")
            active = np.arange(x.shape[1])[None, :] < lengths[:, None]  # (B, T)
        masks = {"f": None, "b": None}
        if train and self.recurrent_dropout > 0.0:
            if rng is None:
                raise ValueError("recurrent dropout in train mode needs an rng")
            keep = 1.0 - self.recurrent_dropout
            for d in ("f", "b"):
                masks[d] = (
                    (rng.random((x.shape[0], self.hidden)) >= self.recurrent_dropout) / keep
                ).astype(self.dtype)
        caches = {d: self._run_direction(x, d, masks[d], active) for d in ("f", "b")}
        self._cache = x, caches, masks, active
        return np.concatenate([caches["f"]["hs"], caches["b"]["hs"]], axis=2)

    def _backprop_direction(self, x, direction, cache, rmask, active, dh_out):
        b, t, _ = x.shape
        h_dim = self.hidden
        wx = self.params[f"wx_{direction}"]
        wh = self.params[f"wh_{direction}"]
        gates, cells, h_prev_drop = cache["gates"], cache["cells"], cache["h_prev_drop"]
        dz_all = np.zeros((b, t, 4 * h_dim), dtype=self.dtype)
        dh_next = np.zeros((b, h_dim), dtype=self.dtype)
        dc_next = np.zeros((b, h_dim), dtype=self.dtype)
        steps = cache["steps"]
        for idx in range(len(steps) - 1, -1, -1):
            step = steps[idx]
            gi = gates[:, step, :h_dim]
            gf = gates[:, step, h_dim : 2 * h_dim]
            gg = gates[:, step, 2 * h_dim : 3 * h_dim]
            go = gates[:, step, 3 * h_dim :]
            c_prev = cells[:, steps[idx - 1]] if idx > 0 else np.zeros((b, h_dim), dtype=self.dtype)
            tc = np.tanh(cells[:, step])
            dh = dh_out[:, step] + dh_next
            dc_in = dc_next
            dc = dc_in + dh * go * (1.0 - tc * tc)
            dgi = dc * gg * gi * (1.0 - gi)
            dgf = dc * c_prev * gf * (1.0 - gf)
            dgg = dc * gi * (1.0 - gg * gg)
            dgo = dh * tc * go * (1.0 - go)
            dz = np.concatenate([dgi, dgf, dgg, dgo], axis=1)
            if active is not None:
                upd = active[:, step : step + 1].astype(self.dtype)
                dz *= upd  # padded steps changed nothing
            dz_all[:, step] = dz
            self.grads[f"wh_{direction}"] += h_prev_drop[:, step].T @ dz
            dh_rec = dz @ wh.T
            if rmask is not None:
                dh_rec = dh_rec * rmask
            if active is not None:
                # padded steps carry incoming gradients through unchanged
                dh_next = dh_rec + dh * (1.0 - upd)
                dc_next = (dc * gf) * upd + dc_in * (1.0 - upd)
            else:
                dh_next = dh_rec
                dc_next = dc * gf
        self.grads[f"wx_{direction}"] += x.reshape(b * t, -1).T @ dz_all.reshape(b * t, -1)
        self.grads[f"bias_{direction}"] += dz_all.sum(axis=(0, 1))
        return dz_all @ wx.T

    def backward(self, dy):
        x, caches, masks, active = self._take_cache()
        dy = np.asarray(dy, dtype=self.dtype)
        h_dim = self.hidden
        dx = self._backprop_direction(x, "f", caches["f"], masks["f"], active, dy[:, :, :h_dim])
        dx += self._backprop_direction(x, "b", caches["b"], masks["b"], active, dy[:, :, h_dim:])
        return dx


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8)."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict):
        self.step_count += 1
        t = self.step_count
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"adam: grad shape {g.shape} != param shape {p.shape} for {name}")
            m = self._m.setdefault(name, np.zeros_like(p))
            v = self._v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**t)
            v_hat = v / (1.0 - self.beta2**t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
