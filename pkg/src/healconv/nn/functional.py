"""Differentiable operations: exactly what the spherical networks need.

Spherical feature maps are ``(batch, n_pix, channels)`` arrays in nested pixel
order; images for the generic conv2d path are ``(batch, H, W, channels)``.
Reduction orders are fixed, so repeated runs are bit-identical.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ContractError
from ..patches import PatchGrid, gather_patches
from .autodiff import Tensor, accumulate, as_tensor, record_op


def _check_channels(got, want, what):
    if got != want:
        raise ContractError(f"{what}: expected {want} channels, got {got}")


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ContractError(f"add shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)

    def backward(g):
        if a.requires_grad:
            accumulate(a, g)
        if b.requires_grad:
            accumulate(b, g)

    return record_op(out, (a, b), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        parts = np.split(g, splits, axis=axis)
        for t, gp in zip(tensors, parts):
            if t.requires_grad:
                accumulate(t, gp)

    return record_op(out, tensors, backward)


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.data, 0))

    def backward(g):
        if x.requires_grad:
            accumulate(x, g * (x.data > 0))

    return record_op(out, (x,), backward)


def flatten(x: Tensor) -> Tensor:
    """(B, ...) -> (B, prod)."""
    b = x.shape[0]
    out = Tensor(x.data.reshape(b, -1))

    def backward(g):
        if x.requires_grad:
            accumulate(x, g.reshape(x.shape))

    return record_op(out, (x,), backward)


def global_mean(x: Tensor) -> Tensor:
    """Mean over the pixel axis: (B, N, C) -> (B, C)."""
    n = x.shape[1]
    out = Tensor(x.data.mean(axis=1))

    def backward(g):
        if x.requires_grad:
            accumulate(x, np.repeat(g[:, None, :] / n, n, axis=1))

    return record_op(out, (x,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: (..., F) @ (F, O) + (O,)."""
    _check_channels(x.shape[-1], w.shape[0], "linear")
    y = x.data @ w.data
    if b is not None:
        y = y + b.data
    out = Tensor(y)

    def backward(g):
        if w.requires_grad:
            accumulate(w, x.data.reshape(-1, w.shape[0]).T @ g.reshape(-1, w.shape[1]))
        if b is not None and b.requires_grad:
            accumulate(b, g.reshape(-1, w.shape[1]).sum(axis=0))
        if x.requires_grad:
            accumulate(x, g @ w.data.T)

    inputs = (x, w) if b is None else (x, w, b)
    return record_op(out, inputs, backward)


conv1x1 = linear  # per-pixel affine map; identical math on (B, N, C)


def spherical_conv(x: Tensor, w: Tensor, b: Tensor | None, grid: PatchGrid) -> Tensor:
    """3x3 convolution over the gathered spherical layout.

    ``x`` is (B, N, C_in), ``w`` is (3, 3, C_in, C_out).  Equivalent to
    materializing the 3x(3N) patch tensor and running conv2d with stride
    (1, 3); the patch gather and the matmul share one memory order, so the two
    paths are bit-identical.
    """
    bsz, n, c_in = x.shape
    if n != grid.n_pix:
        raise ContractError(f"signal has {n} pixels, grid level {grid.level} needs {grid.n_pix}")
    _check_channels(c_in, w.shape[2], "spherical_conv")
    c_out = w.shape[3]
    patches = gather_patches(x.data, grid)            # (B, N, 9, C_in)
    cols = patches.reshape(bsz * n, 9 * c_in)
    y = cols @ w.data.reshape(9 * c_in, c_out)
    if b is not None:
        y = y + b.data
    out = Tensor(y.reshape(bsz, n, c_out))

    def backward(g):
        gflat = g.reshape(bsz * n, c_out)
        if w.requires_grad:
            accumulate(w, (cols.T @ gflat).reshape(w.shape))
        if b is not None and b.requires_grad:
            accumulate(b, gflat.sum(axis=0))
        if x.requires_grad:
            # the inverse of a gather is another gather: pull each pixel's
            # (at most 9) patch-entry gradients and sum them; one zero row at
            # the end absorbs the padding entries of the table
            dcols = np.empty((bsz, n * 9 + 1, c_in), dtype=g.dtype)
            dcols[:, :-1, :] = (
                gflat @ w.data.reshape(9 * c_in, c_out).T
            ).reshape(bsz, n * 9, c_in)
            dcols[:, -1, :] = 0
            accumulate(x, dcols[:, grid.scatter_table(), :].sum(axis=2))

    inputs = (x, w) if b is None else (x, w, b)
    return record_op(out, inputs, backward)


def maxpool1x4(x: Tensor) -> Tensor:
    """Max over nested sibling groups: (B, N, C) -> (B, N/4, C).

    Gradient routes to the max child only; ties resolve to the lowest index.
    """
    bsz, n, c = x.shape
    if n % 4:
        raise ContractError(f"pixel count {n} is not divisible by 4")
    grouped = x.data.reshape(bsz, n // 4, 4, c)
    arg = grouped.argmax(axis=2)
    out = Tensor(np.take_along_axis(grouped, arg[:, :, None, :], axis=2)[:, :, 0, :])

    def backward(g):
        if x.requires_grad:
            dgrouped = np.zeros_like(grouped)
            np.put_along_axis(dgrouped, arg[:, :, None, :], g[:, :, None, :], axis=2)
            accumulate(x, dgrouped.reshape(x.shape))

    return record_op(out, (x,), backward)


def spherical_unpool(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Transposed 1x4 conv along the nested axis: (B, N, C_in) -> (B, 4N, C_out).

    Child ``4p + k`` receives ``x[p] @ w[k] + b`` with ``w`` shaped
    (4, C_in, C_out).
    """
    bsz, n, c_in = x.shape
    _check_channels(c_in, w.shape[1], "spherical_unpool")
    c_out = w.shape[2]
    wmat = w.data.transpose(1, 0, 2).reshape(c_in, 4 * c_out)
    y = (x.data.reshape(bsz * n, c_in) @ wmat).reshape(bsz, 4 * n, c_out)
    if b is not None:
        y = y + b.data
    out = Tensor(y)

    def backward(g):
        gk = g.reshape(bsz * n, 4 * c_out)
        if w.requires_grad:
            dw = (x.data.reshape(bsz * n, c_in).T @ gk).reshape(c_in, 4, c_out)
            accumulate(w, dw.transpose(1, 0, 2))
        if b is not None and b.requires_grad:
            accumulate(b, gk.reshape(-1, 4, c_out).sum(axis=(0, 1)))
        if x.requires_grad:
            accumulate(x, (gk @ wmat.T).reshape(x.shape))

    inputs = (x, w) if b is None else (x, w, b)
    return record_op(out, inputs, backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride: tuple[int, int] = (1, 3)) -> Tensor:
    """Valid 2-D convolution, channels last: (B, H, W, C_in) -> (B, Ho, Wo, C_out).

    With a (3, 3) kernel, stride (1, 3) and a 3x(3N) patch-tensor input this
    produces exactly one output column per spherical pixel.
    """
    if x.data.ndim != 4:
        raise ContractError(f"conv2d input must be (B, H, W, C), got {x.shape}")
    bsz, h, wi, c_in = x.shape
    kh, kw, wc_in, c_out = w.shape
    _check_channels(c_in, wc_in, "conv2d")
    sh, sw = stride
    if h < kh or wi < kw:
        raise ContractError(f"input {h}x{wi} smaller than kernel {kh}x{kw}")
    ho = (h - kh) // sh + 1
    wo = (wi - kw) // sw + 1

    win = sliding_window_view(x.data, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3))  # (B,Ho,Wo,kh,kw,C)
    cols2 = cols.reshape(bsz * ho * wo, kh * kw * c_in)
    y = cols2 @ w.data.reshape(kh * kw * c_in, c_out)
    if b is not None:
        y = y + b.data
    out = Tensor(y.reshape(bsz, ho, wo, c_out))

    def backward(g):
        gflat = g.reshape(bsz * ho * wo, c_out)
        if w.requires_grad:
            accumulate(w, (cols2.T @ gflat).reshape(w.shape))
        if b is not None and b.requires_grad:
            accumulate(b, gflat.sum(axis=0))
        if x.requires_grad:
            dcols = (gflat @ w.data.reshape(-1, c_out).T).reshape(bsz, ho, wo, kh, kw, c_in)
            dx = np.zeros_like(x.data)
            for ky in range(kh):
                for kx in range(kw):
                    dx[:, ky : ky + ho * sh : sh, kx : kx + wo * sw : sw, :] += dcols[:, :, :, ky, kx, :]
            accumulate(x, dx)

    inputs = (x, w) if b is None else (x, w, b)
    return record_op(out, inputs, backward)


def batchnorm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray,
              running_var: np.ndarray, train: bool, momentum: float = 0.1,
              eps: float = 1e-5) -> Tensor:
    """Per-channel (last axis) normalization with running statistics.

    Train mode normalizes by batch statistics and updates the running buffers
    in place; eval mode uses the running buffers.
    """
    if x.data.shape[0] == 0:
        raise ContractError("batchnorm on an empty batch")
    c = x.shape[-1]
    flat = x.data.reshape(-1, c)
    m = flat.shape[0]
    if train:
        mu = flat.mean(axis=0)
        var = flat.var(axis=0)
        running_mean += momentum * (mu - running_mean)
        running_var += momentum * (var - running_var)
    else:
        mu = running_mean.astype(x.dtype)
        var = running_var.astype(x.dtype)
    ivar = 1.0 / np.sqrt(var + eps)
    xhat = (flat - mu) * ivar
    out = Tensor((xhat * gamma.data + beta.data).reshape(x.shape))

    def backward(g):
        gf = g.reshape(-1, c)
        if gamma.requires_grad:
            accumulate(gamma, (gf * xhat).sum(axis=0))
        if beta.requires_grad:
            accumulate(beta, gf.sum(axis=0))
        if x.requires_grad:
            dxhat = gf * gamma.data
            if train:
                dx = (dxhat - dxhat.mean(axis=0) - xhat * (dxhat * xhat).mean(axis=0)) * ivar
            else:
                dx = dxhat * ivar
            accumulate(x, dx.reshape(x.shape))

    return record_op(out, (x, gamma, beta), backward)


def softmax(x: Tensor) -> Tensor:
    """Softmax over the last axis."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(s)

    def backward(g):
        if x.requires_grad:
            dot = (g * s).sum(axis=-1, keepdims=True)
            accumulate(x, s * (g - dot))

    return record_op(out, (x,), backward)


def softmax_xent(logits: Tensor, labels: np.ndarray,
                 ignore_label: int | None = None) -> Tensor:
    """Mean cross-entropy of softmax(logits) against integer labels.

    ``logits`` is (..., K); ``labels`` matches the leading shape.  Entries
    equal to ``ignore_label`` are excluded from the mean.
    """
    k = logits.shape[-1]
    flat = logits.data.reshape(-1, k)
    labels = np.asarray(labels).reshape(-1)
    if labels.shape[0] != flat.shape[0]:
        raise ContractError(
            f"labels shape {labels.shape} does not match logits {logits.shape}"
        )
    if ignore_label is not None:
        keep = labels != ignore_label
        if not keep.any():
            raise ContractError("all labels are ignored; loss undefined")
    else:
        keep = np.ones(len(labels), dtype=bool)
    idx = np.flatnonzero(keep)
    lab = labels[idx].astype(np.int64)
    if lab.size and (lab.min() < 0 or lab.max() >= k):
        raise ContractError(f"labels must lie in [0, {k})")

    z = flat[idx]
    zmax = z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z - zmax).sum(axis=1, keepdims=True)) + zmax
    nll = logsum[:, 0] - z[np.arange(len(lab)), lab]
    out = Tensor(np.asarray(nll.mean(), dtype=logits.dtype))

    def backward(g):
        if logits.requires_grad:
            p = np.exp(z - logsum)
            p[np.arange(len(lab)), lab] -= 1.0
            dflat = np.zeros_like(flat)
            dflat[idx] = p * (g / len(lab))
            accumulate(logits, dflat.reshape(logits.shape))

    return record_op(out, (logits,), backward)
