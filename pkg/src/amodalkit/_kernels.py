"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The jit path is used by default when numba imports cleanly; set the
environment variable ``AMODALKIT_NUMBA=0`` before import to force the
numpy fallback. Both implementations of every kernel stay importable so
the benchmark (``bench/bench_kernels.py``) and the parity tests can call
them side by side.

All kernels are serial (no ``parallel=True``): reduction order must be
fixed so repeated runs produce bit-identical results.
"""

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but degrade gracefully
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("AMODALKIT_NUMBA", "1") != "0"


# ---------------------------------------------------------------------------
# channel mixing: out[t] = bias[t] + sum_i vw[t,i]*vm[i] + sum_i ow[t,i]*om[i]
# ---------------------------------------------------------------------------

def mix_forward_numpy(vw, ow, bias, vm, om):
    out = np.einsum("ti,ihw->thw", vw, vm)
    out += np.einsum("ti,ihw->thw", ow, om)
    out += bias[:, None, None]
    return out


if HAS_NUMBA:

    @njit(cache=True)
    def _mix_forward_jit(vw, ow, bias, vm, om):
        n, h, w = vm.shape
        out = np.empty((n, h, w), dtype=np.float64)
        for t in range(n):
            for y in range(h):
                for x in range(w):
                    acc = bias[t]
                    for i in range(n):
                        acc += vw[t, i] * vm[i, y, x]
                    for i in range(n):
                        acc += ow[t, i] * om[i, y, x]
                    out[t, y, x] = acc
        return out

    def mix_forward_numba(vw, ow, bias, vm, om):
        return _mix_forward_jit(
            np.ascontiguousarray(vw),
            np.ascontiguousarray(ow),
            np.ascontiguousarray(bias),
            np.ascontiguousarray(vm),
            np.ascontiguousarray(om),
        )


# ---------------------------------------------------------------------------
# fused per-batch loss + gradient on the true output channel
# ---------------------------------------------------------------------------
# Loss: mean over batch and pixels of the stabilized BCE between the mixed
# logits of each sample's true channel and its target mask. Gradients are
# accumulated only into the rows selected by ``cats``.

def head_loss_grad_numpy(vw, ow, bias, vm_b, om_b, targets, cats):
    b, n, h, w = vm_b.shape
    scale = 1.0 / (b * h * w)
    loss = 0.0
    gvw = np.zeros_like(vw)
    gow = np.zeros_like(ow)
    gbias = np.zeros_like(bias)
    for s in range(b):
        t = cats[s]
        x = np.einsum("i,ihw->hw", vw[t], vm_b[s])
        x += np.einsum("i,ihw->hw", ow[t], om_b[s])
        x += bias[t]
        tgt = targets[s]
        loss += np.sum(np.maximum(x, 0.0) - x * tgt + np.log1p(np.exp(-np.abs(x))))
        # d/dx of the stabilized BCE is sigmoid(x) - target
        g = _sigmoid_np(x) - tgt
        gvw[t] += np.einsum("hw,ihw->i", g, vm_b[s])
        gow[t] += np.einsum("hw,ihw->i", g, om_b[s])
        gbias[t] += np.sum(g)
    return loss * scale, gvw * scale, gow * scale, gbias * scale


def _sigmoid_np(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


if HAS_NUMBA:

    @njit(cache=True)
    def _head_loss_grad_jit(vw, ow, bias, vm_b, om_b, targets, cats):
        b, n, h, w = vm_b.shape
        scale = 1.0 / (b * h * w)
        loss = 0.0
        gvw = np.zeros((n, n), dtype=np.float64)
        gow = np.zeros((n, n), dtype=np.float64)
        gbias = np.zeros(n, dtype=np.float64)
        for s in range(b):
            t = cats[s]
            for y in range(h):
                for x in range(w):
                    acc = bias[t]
                    for i in range(n):
                        acc += vw[t, i] * vm_b[s, i, y, x]
                    for i in range(n):
                        acc += ow[t, i] * om_b[s, i, y, x]
                    tgt = targets[s, y, x]
                    if acc >= 0.0:
                        loss += acc - acc * tgt + np.log1p(np.exp(-acc))
                        sig = 1.0 / (1.0 + np.exp(-acc))
                    else:
                        loss += -acc * tgt + np.log1p(np.exp(acc))
                        sig = np.exp(acc) / (1.0 + np.exp(acc))
                    g = sig - tgt
                    for i in range(n):
                        gvw[t, i] += g * vm_b[s, i, y, x]
                    for i in range(n):
                        gow[t, i] += g * om_b[s, i, y, x]
                    gbias[t] += g
        for t in range(n):
            for i in range(n):
                gvw[t, i] *= scale
                gow[t, i] *= scale
            gbias[t] *= scale
        return loss * scale, gvw, gow, gbias

    def head_loss_grad_numba(vw, ow, bias, vm_b, om_b, targets, cats):
        return _head_loss_grad_jit(
            np.ascontiguousarray(vw),
            np.ascontiguousarray(ow),
            np.ascontiguousarray(bias),
            np.ascontiguousarray(vm_b),
            np.ascontiguousarray(om_b),
            np.ascontiguousarray(targets),
            np.ascontiguousarray(cats),
        )


# ---------------------------------------------------------------------------
# run-length codec over a column-major flattened mask
# ---------------------------------------------------------------------------
# Counts alternate background/foreground starting with background; the first
# count is 0 when the flattened mask starts with a foreground pixel.

def rle_encode_numpy(flat):
    flat = np.asarray(flat, dtype=np.uint8)
    if flat.size == 0:
        return np.zeros(1, dtype=np.int64)
    edges = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate(([0], edges, [flat.size]))
    counts = np.diff(bounds).astype(np.int64)
    if flat[0] == 1:
        counts = np.concatenate(([0], counts))
    return counts


def rle_decode_numpy(counts, total):
    counts = np.asarray(counts, dtype=np.int64)
    values = np.zeros(counts.size, dtype=np.uint8)
    values[1::2] = 1
    flat = np.repeat(values, counts)
    if flat.size != total:
        raise ValueError(f"run lengths sum to {flat.size}, expected {total}")
    return flat


if HAS_NUMBA:

    @njit(cache=True)
    def _rle_encode_jit(flat):
        size = flat.size
        buf = np.empty(size + 1, dtype=np.int64)
        nruns = 0
        run = 0
        cur = np.uint8(0)
        for k in range(size):
            if flat[k] == cur:
                run += 1
            else:
                buf[nruns] = run
                nruns += 1
                cur = flat[k]
                run = 1
        buf[nruns] = run
        nruns += 1
        return buf[:nruns].copy()

    def rle_encode_numba(flat):
        flat = np.ascontiguousarray(np.asarray(flat, dtype=np.uint8))
        if flat.size == 0:
            return np.zeros(1, dtype=np.int64)
        return _rle_encode_jit(flat)

    @njit(cache=True)
    def _rle_decode_jit(counts, total):
        flat = np.zeros(total, dtype=np.uint8)
        pos = 0
        for k in range(counts.size):
            if k % 2 == 1:
                for j in range(counts[k]):
                    flat[pos + j] = 1
            pos += counts[k]
        return flat

    def rle_decode_numba(counts, total):
        counts = np.ascontiguousarray(np.asarray(counts, dtype=np.int64))
        if int(counts.sum()) != total:
            raise ValueError(f"run lengths sum to {int(counts.sum())}, expected {total}")
        return _rle_decode_jit(counts, total)


if USE_NUMBA:
    mix_forward = mix_forward_numba
    head_loss_grad = head_loss_grad_numba
    rle_encode = rle_encode_numba
    rle_decode = rle_decode_numba
    BACKEND = "numba"
else:
    mix_forward = mix_forward_numpy
    head_loss_grad = head_loss_grad_numpy
    rle_encode = rle_encode_numpy
    rle_decode = rle_decode_numpy
    BACKEND = "numpy"
