"""Differentiable primitives over numpy arrays.

Each op returns a graph node built by ``make_node``: forward data, a
recompute closure reading parent ``.data`` live (for record replay) and a
backward rule returning ``[(parent, grad), ...]``. Statistics side
effects (running-moment updates of affine_norm) happen exactly once at
construction, never during replay.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import ContractError, Tensor, make_node, unbroadcast


def primitive_set() -> list[str]:
    """Names of the supported primitives, gradient rules included."""
    return [
        "add", "mul", "scale", "matmul", "linear",
        "conv2d", "depthwise_conv2d", "dilated_conv2d",
        "max_pool2d", "avg_pool2d",
        "affine_norm", "relu", "softmax", "cross_entropy",
        "sum", "mean", "concat", "narrow", "reshape", "pad2d",
        "zero", "weighted_sum",
    ]


def _pair(v) -> tuple[int, int]:
    if isinstance(v, int):
        return (v, v)
    a, b = v
    return (int(a), int(b))


def _same_dtype(*ts: Tensor) -> None:
    dt = ts[0].dtype
    for t in ts[1:]:
        if t.dtype != dt:
            raise ContractError(f"mixed dtypes {dt} vs {t.dtype}")


# -- elementwise -------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b)

    def compute():
        return a.data + b.data

    def backward(g):
        return [(a, unbroadcast(g, a.shape)), (b, unbroadcast(g, b.shape))]

    return make_node(compute(), "add", (a, b), backward, compute)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_dtype(a, b)

    def compute():
        return a.data * b.data

    def backward(g):
        return [(a, unbroadcast(g * b.data, a.shape)),
                (b, unbroadcast(g * a.data, b.shape))]

    return make_node(compute(), "mul", (a, b), backward, compute)


def scale(x: Tensor, k: float) -> Tensor:
    k = float(k)

    def compute():
        return x.data * k

    def backward(g):
        return [(x, g * k)]

    return make_node(compute(), "scale", (x,), backward, compute)


def relu(x: Tensor) -> Tensor:
    cache: dict[str, np.ndarray] = {}

    def compute():
        out = np.maximum(x.data, 0)
        cache["mask"] = x.data > 0
        return out

    def backward(g):
        return [(x, g * cache["mask"])]

    return make_node(compute(), "relu", (x,), backward, compute)


# -- linear algebra ----------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ContractError("matmul expects 2-D operands")
    _same_dtype(a, b)

    def compute():
        return a.data @ b.data

    def backward(g):
        return [(a, g @ b.data.T), (b, a.data.T @ g)]

    return make_node(compute(), "matmul", (a, b), backward, compute)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Fully-connected map: x (N,F) @ w (O,F)^T + b (O,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ContractError(f"linear shapes {x.shape} x {w.shape}")
    parents = (x, w) if b is None else (x, w, b)

    def compute():
        out = x.data @ w.data.T
        if b is not None:
            out = out + b.data
        return out

    def backward(g):
        grads = [(x, g @ w.data), (w, g.T @ x.data)]
        if b is not None:
            grads.append((b, g.sum(axis=0)))
        return grads

    return make_node(compute(), "linear", parents, backward, compute)


# -- convolution -------------------------------------------------------

def _conv_out(size: int, k: int, s: int, p: int, d: int) -> int:
    eff = d * (k - 1) + 1
    out = (size + 2 * p - eff) // s + 1
    if out <= 0:
        raise ContractError(f"conv output size {out} for input {size}")
    return out


def _im2col(xp: np.ndarray, kh, kw, sh, sw, dh, dw, oh, ow) -> np.ndarray:
    n, c = xp.shape[:2]
    col = np.empty((n, c, kh, kw, oh, ow), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            col[:, :, i, j] = xp[:, :, i * dh:i * dh + sh * oh:sh,
                                 j * dw:j * dw + sw * ow:sw]
    return col


def _col2im(dcol: np.ndarray, shape, kh, kw, sh, sw, dh, dw, oh, ow) -> np.ndarray:
    dxp = np.zeros(shape, dtype=dcol.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i * dh:i * dh + sh * oh:sh,
                j * dw:j * dw + sw * ow:sw] += dcol[:, :, i, j]
    return dxp


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, *, stride=1,
           padding=0, dilation=1, groups: int = 1, op_name: str = "conv2d") -> Tensor:
    """2-D cross-correlation; groups=C gives the depthwise variant."""
    sh, sw = _pair(stride)
    ph, pw = _pair(padding)
    dh, dw = _pair(dilation)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ContractError("conv2d expects NCHW input and OIHW weight")
    n, c, h, ww_ = x.shape
    cout, cin_g, kh, kw = w.shape
    if c != cin_g * groups or cout % groups != 0:
        raise ContractError(
            f"conv2d channel mismatch: x has {c}, weight {w.shape}, groups {groups}")
    oh = _conv_out(h, kh, sh, ph, dh)
    ow = _conv_out(ww_, kw, sw, pw, dw)
    length = oh * ow
    cache: dict[str, np.ndarray] = {}
    parents = (x, w) if b is None else (x, w, b)

    def compute():
        xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph), (pw, pw))) \
            if (ph or pw) else x.data
        colg = _im2col(xp, kh, kw, sh, sw, dh, dw, oh, ow) \
            .reshape(n, groups, cin_g * kh * kw, length)
        wg = w.data.reshape(groups, cout // groups, -1)
        out = np.matmul(wg, colg)  # (n, groups, cout/g, length)
        out = np.ascontiguousarray(out).reshape(n, cout, oh, ow)
        if b is not None:
            out += b.data.reshape(1, -1, 1, 1)
        cache["colg"] = colg
        cache["xp_shape"] = xp.shape
        return out

    def backward(g):
        gg = np.ascontiguousarray(g).reshape(n, groups, cout // groups, length)
        grads = []
        if x.requires_grad:
            wg = w.data.reshape(groups, cout // groups, -1)
            dcol = np.matmul(wg.transpose(0, 2, 1), gg)
            dcol = np.ascontiguousarray(dcol).reshape(n, c, kh, kw, oh, ow)
            dxp = _col2im(dcol, cache["xp_shape"], kh, kw, sh, sw, dh, dw, oh, ow)
            dx = dxp[:, :, ph:ph + h, pw:pw + ww_] if (ph or pw) else dxp
            grads.append((x, dx))
        if w.requires_grad:
            wgrad = np.matmul(gg, cache["colg"].transpose(0, 1, 3, 2)) \
                .sum(axis=0).reshape(w.shape)
            grads.append((w, wgrad))
        if b is not None and b.requires_grad:
            grads.append((b, g.sum(axis=(0, 2, 3))))
        return grads

    return make_node(compute(), op_name, parents, backward, compute)


def depthwise_conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, *,
                     stride=1, padding=0, dilation=1) -> Tensor:
    return conv2d(x, w, b, stride=stride, padding=padding, dilation=dilation,
                  groups=x.shape[1], op_name="depthwise_conv2d")


def dilated_conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, *,
                   stride=1, padding=0, dilation=2, groups=1) -> Tensor:
    return conv2d(x, w, b, stride=stride, padding=padding, dilation=dilation,
                  groups=groups, op_name="dilated_conv2d")


# -- pooling -----------------------------------------------------------

def _pool_geometry(h, w, kh, kw, sh, sw, ph, pw, ceil_mode):
    def out(size, k, s, p):
        if ceil_mode:
            o = -((size + 2 * p - k) // -s) + 1
            # a window must start inside the (left-padded) input
            if (o - 1) * s >= size + p:
                o -= 1
        else:
            o = (size + 2 * p - k) // s + 1
        if o <= 0:
            raise ContractError("empty pooling output")
        return o

    oh, ow = out(h, kh, sh, ph), out(w, kw, sw, pw)
    extra_h = max(0, (oh - 1) * sh + kh - (h + 2 * ph))
    extra_w = max(0, (ow - 1) * sw + kw - (w + 2 * pw))
    return oh, ow, extra_h, extra_w


def _pool_windows(xp, kh, kw, sh, sw, oh, ow):
    """Windows-last layout (n, c, oh, ow, kh*kw) for fast reductions."""
    n, c = xp.shape[:2]
    col = np.empty((n, c, oh, ow, kh * kw), dtype=xp.dtype)
    t = 0
    for i in range(kh):
        for j in range(kw):
            col[..., t] = xp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw]
            t += 1
    return col


def _pool_scatter(dcol, shape, kh, kw, sh, sw, oh, ow):
    dxp = np.zeros(shape, dtype=dcol.dtype)
    t = 0
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + sh * oh:sh, j:j + sw * ow:sw] += dcol[..., t]
            t += 1
    return dxp


def _window_validity(h, w, kh, kw, sh, sw, ph, pw, eh, ew, oh, ow, dtype):
    """Mask (oh, ow, kh*kw) of window cells that land inside the input."""
    ind = np.zeros((1, 1, h + 2 * ph + eh, w + 2 * pw + ew), dtype=dtype)
    ind[:, :, ph:ph + h, pw:pw + w] = 1
    return _pool_windows(ind, kh, kw, sh, sw, oh, ow).reshape(oh, ow, kh * kw)


def max_pool2d(x: Tensor, kernel, stride=None, padding=0,
               ceil_mode: bool = False) -> Tensor:
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else kernel)
    ph, pw = _pair(padding)
    n, c, h, w = x.shape
    oh, ow, eh, ew = _pool_geometry(h, w, kh, kw, sh, sw, ph, pw, ceil_mode)
    cache: dict[str, np.ndarray] = {}

    def compute():
        xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph + eh), (pw, pw + ew)),
                    constant_values=-np.inf) if (ph or pw or eh or ew) else x.data
        col = _pool_windows(xp, kh, kw, sh, sw, oh, ow)
        cache["idx"] = col.argmax(axis=-1)
        cache["xp_shape"] = xp.shape
        return col.max(axis=-1)

    def backward(g):
        dcol = np.zeros((n, c, oh, ow, kh * kw), dtype=g.dtype)
        np.put_along_axis(dcol, cache["idx"][..., None], g[..., None], axis=-1)
        dxp = _pool_scatter(dcol, cache["xp_shape"], kh, kw, sh, sw, oh, ow)
        return [(x, dxp[:, :, ph:ph + h, pw:pw + w])]

    return make_node(compute(), "max_pool2d", (x,), backward, compute)


def avg_pool2d(x: Tensor, kernel, stride=None, padding=0,
               ceil_mode: bool = False) -> Tensor:
    """Average pooling; padded cells are excluded from the divisor."""
    kh, kw = _pair(kernel)
    sh, sw = _pair(stride if stride is not None else kernel)
    ph, pw = _pair(padding)
    n, c, h, w = x.shape
    oh, ow, eh, ew = _pool_geometry(h, w, kh, kw, sh, sw, ph, pw, ceil_mode)
    valid = _window_validity(h, w, kh, kw, sh, sw, ph, pw, eh, ew, oh, ow,
                             x.dtype)
    count = valid.sum(axis=-1)  # (oh, ow), > 0: every window overlaps x

    def compute():
        xp = np.pad(x.data, ((0, 0), (0, 0), (ph, ph + eh), (pw, pw + ew))) \
            if (ph or pw or eh or ew) else x.data
        col = _pool_windows(xp, kh, kw, sh, sw, oh, ow)
        return col.sum(axis=-1) / count

    def backward(g):
        dcol = (g / count)[..., None] * valid
        shape = (n, c, h + 2 * ph + eh, w + 2 * pw + ew)
        dxp = _pool_scatter(dcol.astype(g.dtype), shape, kh, kw, sh, sw, oh, ow)
        return [(x, dxp[:, :, ph:ph + h, pw:pw + w])]

    return make_node(compute(), "avg_pool2d", (x,), backward, compute)


# -- normalization -----------------------------------------------------

class NormStats:
    """Running per-channel moments for affine_norm (plain numpy buffers)."""

    def __init__(self, channels: int, dtype=np.float32):
        self.mean = np.zeros(channels, dtype=dtype)
        self.var = np.ones(channels, dtype=dtype)

    def update(self, mean: np.ndarray, var: np.ndarray, momentum: float) -> None:
        self.mean = (1.0 - momentum) * self.mean + momentum * mean
        self.var = (1.0 - momentum) * self.var + momentum * var


def affine_norm(x: Tensor, scale_t: Tensor | None, shift_t: Tensor | None,
                stats: NormStats, *, batch_stats: bool,
                update_stats: bool = False, momentum: float = 0.1,
                eps: float = 1e-5) -> Tensor:
    """Per-channel normalization with learnable scale/shift.

    batch_stats=True normalizes by the batch moments (gradient flows
    through them); otherwise the running moments are treated as frozen
    constants, captured by value at construction.
    """
    if x.data.ndim != 4:
        raise ContractError("affine_norm expects NCHW input")
    axes = (0, 2, 3)
    m = x.shape[0] * x.shape[2] * x.shape[3]
    parents = [x]
    if scale_t is not None:
        parents.append(scale_t)
    if shift_t is not None:
        parents.append(shift_t)

    if batch_stats:
        cache: dict[str, np.ndarray] = {}

        def _moments():
            s1 = x.data.sum(axis=axes, keepdims=True)
            s2 = np.square(x.data).sum(axis=axes, keepdims=True)
            bm = s1 / m
            bv = np.maximum(s2 / m - bm * bm, 0.0)
            return bm, bv

        if update_stats:
            bm0, bv0 = _moments()
            stats.update(bm0.reshape(-1), bv0.reshape(-1), momentum)

        def compute():
            bm, bv = _moments()
            inv = 1.0 / np.sqrt(bv + eps)
            xhat = (x.data - bm) * inv
            cache["inv"], cache["xhat"] = inv, xhat
            out = xhat
            if scale_t is not None:
                out = out * scale_t.data.reshape(1, -1, 1, 1)
            if shift_t is not None:
                out = out + shift_t.data.reshape(1, -1, 1, 1)
            return out

        def backward(g):
            inv, xhat = cache["inv"], cache["xhat"]
            dxhat = g
            if scale_t is not None:
                dxhat = g * scale_t.data.reshape(1, -1, 1, 1)
            grads = []
            if x.requires_grad:
                s1 = dxhat.sum(axis=axes, keepdims=True)
                s2 = (dxhat * xhat).sum(axis=axes, keepdims=True)
                dx = (inv / m) * (m * dxhat - s1 - xhat * s2)
                grads.append((x, dx))
            if scale_t is not None and scale_t.requires_grad:
                grads.append((scale_t, (g * xhat).sum(axis=axes)))
            if shift_t is not None and shift_t.requires_grad:
                grads.append((shift_t, g.sum(axis=axes)))
            return grads
    else:
        fm = stats.mean.astype(x.dtype).reshape(1, -1, 1, 1).copy()
        finv = (1.0 / np.sqrt(stats.var.astype(x.dtype) + eps)) \
            .reshape(1, -1, 1, 1).copy()

        def compute():
            out = (x.data - fm) * finv
            if scale_t is not None:
                out = out * scale_t.data.reshape(1, -1, 1, 1)
            if shift_t is not None:
                out = out + shift_t.data.reshape(1, -1, 1, 1)
            return out

        def backward(g):
            grads = []
            if x.requires_grad:
                dx = g * finv
                if scale_t is not None:
                    dx = dx * scale_t.data.reshape(1, -1, 1, 1)
                grads.append((x, dx))
            if scale_t is not None and scale_t.requires_grad:
                xhat = (x.data - fm) * finv
                grads.append((scale_t, (g * xhat).sum(axis=axes)))
            if shift_t is not None and shift_t.requires_grad:
                grads.append((shift_t, g.sum(axis=axes)))
            return grads

    return make_node(compute(), "affine_norm", tuple(parents), backward, compute)


# -- classification head ----------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    def compute():
        z = x.data - x.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        y = compute()
        return [(x, (g - (g * y).sum(axis=axis, keepdims=True)) * y)]

    return make_node(compute(), "softmax", (x,), backward, compute)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean cross-entropy of integer labels against logits (N, C)."""
    if logits.data.ndim != 2:
        raise ContractError("cross_entropy expects (N, C) logits")
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ContractError(
            f"labels shape {labels.shape} does not match batch {logits.shape[0]}")
    n = logits.shape[0]
    rows = np.arange(n)

    def compute():
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=1)) + logits.data.max(axis=1)
        return np.asarray(np.mean(lse - logits.data[rows, labels]),
                          dtype=logits.dtype)

    def backward(g):
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)
        p[rows, labels] -= 1.0
        return [(logits, (float(g) / n) * p)]

    return make_node(compute(), "cross_entropy", (logits,), backward, compute)


# -- reductions and shape ops ------------------------------------------

def sum_all(x: Tensor) -> Tensor:
    def compute():
        return np.asarray(x.data.sum(), dtype=x.dtype)

    def backward(g):
        return [(x, np.broadcast_to(g, x.shape).astype(x.dtype))]

    return make_node(compute(), "sum", (x,), backward, compute)


def mean_axes(x: Tensor, axes: tuple[int, ...], keepdims: bool = False) -> Tensor:
    axes = tuple(a % x.data.ndim for a in axes)
    denom = math.prod(x.shape[a] for a in axes)

    def compute():
        return x.data.mean(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return [(x, np.broadcast_to(g / denom, x.shape).astype(x.dtype))]

    return make_node(compute(), "mean", (x,), backward, compute)


def concat(ts: list[Tensor], axis: int) -> Tensor:
    if not ts:
        raise ContractError("concat of nothing")
    _same_dtype(*ts)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def compute():
        return np.concatenate([t.data for t in ts], axis=axis)

    def backward(g):
        grads = []
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(int(lo), int(hi))
            grads.append((t, g[tuple(sl)]))
        return grads

    return make_node(compute(), "concat", tuple(ts), backward, compute)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    if start < 0 or start + length > x.shape[axis]:
        raise ContractError(
            f"narrow [{start}:{start + length}] out of bounds for axis "
            f"{axis} of {x.shape}")
    sl = [slice(None)] * x.data.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)

    def compute():
        return x.data[sl].copy()

    def backward(g):
        dx = np.zeros_like(x.data)
        dx[sl] = g
        return [(x, dx)]

    return make_node(compute(), "narrow", (x,), backward, compute)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    def compute():
        return x.data.reshape(shape)

    def backward(g):
        return [(x, g.reshape(x.shape))]

    return make_node(compute(), "reshape", (x,), backward, compute)


def pad2d(x: Tensor, pads: tuple[int, int, int, int]) -> Tensor:
    """Zero-pad the two trailing axes by (top, bottom, left, right)."""
    pt, pb, pl, pr = pads
    n_lead = x.data.ndim - 2
    widths = tuple([(0, 0)] * n_lead) + ((pt, pb), (pl, pr))
    h, w = x.shape[-2], x.shape[-1]

    def compute():
        return np.pad(x.data, widths)

    def backward(g):
        sl = (slice(None),) * n_lead + (slice(pt, pt + h), slice(pl, pl + w))
        return [(x, g[sl])]

    return make_node(compute(), "pad2d", (x,), backward, compute)


def zero_op(x: Tensor, stride: int = 1) -> Tensor:
    """All-zero output with x's post-stride spatial shape."""
    shape = x.shape if stride == 1 else \
        x.shape[:2] + x.data[:, :, ::stride, ::stride].shape[2:]

    def compute():
        return np.zeros(shape, dtype=x.dtype)

    def backward(g):
        return [(x, np.zeros_like(x.data))]

    return make_node(compute(), "zero", (x,), backward, compute)


def weighted_sum(ts: list[Tensor], w: Tensor) -> Tensor:
    """sum_i w[i] * ts[i] over same-shape tensors; differentiable in both."""
    if w.data.ndim != 1 or w.size != len(ts):
        raise ContractError(
            f"weights length {w.size} vs {len(ts)} tensors")
    shape = ts[0].shape
    for t in ts[1:]:
        if t.shape != shape:
            raise ContractError(f"weighted_sum shape mismatch {t.shape} vs {shape}")
    _same_dtype(w, *ts)

    def compute():
        out = w.data[0] * ts[0].data
        for i in range(1, len(ts)):
            out = out + w.data[i] * ts[i].data
        return out

    def backward(g):
        grads = []
        for i, t in enumerate(ts):
            if t.requires_grad:
                grads.append((t, w.data[i] * g))
        if w.requires_grad:
            dw = np.array([float((g * t.data).sum()) for t in ts],
                          dtype=w.dtype)
            grads.append((w, dw))
        return grads

    return make_node(compute(), "weighted_sum", tuple(ts) + (w,), backward, compute)
