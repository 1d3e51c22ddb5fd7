"""Reverse-mode autodiff over dense numpy arrays.

A ``Tensor`` wraps an ndarray and remembers how it was produced; calling
``backward()`` on a scalar walks the graph in reverse topological order and
accumulates gradients into every reachable tensor with ``requires_grad``.
Double precision is used on test/oracle paths, single precision is fine for
training; ops preserve the dtype of their inputs.

Arrays are treated as immutable once wrapped. Gradient accumulation happens
only inside ``backward()``, which is single-threaded; concurrent *forward*
evaluation of independent graphs is safe.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "add",
    "mul",
    "matmul",
    "relu",
    "sigmoid",
    "exp",
    "log",
    "sqrt",
    "power",
    "clip",
    "concat",
    "maximum",
    "sum_",
    "mean",
    "reshape",
    "transpose",
    "getitem",
    "embedding",
    "softmax_axis",
    "logsumexp",
    "l2_normalize",
    "cosine_similarity",
    "layer_norm",
    "conv2d",
    "bilinear_sample",
    "as_tensor",
]

# Guard added to squared norms so cosine/normalize stay finite (and exactly 0
# for zero vectors) without branching in the backward pass.
_NORM_EPS = 1e-12


class Tensor:
    """Node in the autodiff graph; holds a value and an optional backward rule."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, parents=(), backward=None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    # -- introspection ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- graph traversal ---------------------------------------------------
    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into every reachable ``requires_grad`` tensor."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        topo: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if id(node) in seen:
                continue
            if expanded:
                seen.add(id(node))
                topo.append(node)
                continue
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen and p.requires_grad:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                # leaf: persist the accumulated gradient
                node.grad = g if node.grad is None else node.grad + g
                continue
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                acc = grads.get(id(p))
                grads[id(p)] = pg if acc is None else acc + pg

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, as_tensor(other, self.dtype))

    __radd__ = __add__

    def __neg__(self):
        return mul(self, -1.0)

    def __sub__(self, other):
        return add(self, -as_tensor(other, self.dtype))

    def __rsub__(self, other):
        return add(-self, as_tensor(other, self.dtype))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __rtruediv__(self, other):
        return mul(power(self, -1.0), other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def reshape(self, *shape):
        return reshape(self, shape if len(shape) > 1 or isinstance(shape[0], int) else shape[0])

    def transpose(self, axes):
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


class Parameter(Tensor):
    """Trainable leaf tensor; ``grad`` persists across backward calls."""

    __slots__ = ("trainable", "name", "decay")

    def __init__(self, data, name="", trainable=True, decay=True):
        super().__init__(np.asarray(data), requires_grad=True)
        self.trainable = trainable
        self.name = name
        self.decay = decay  # excluded from weight decay when False

    def zero_grad(self):
        self.grad = None


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    arr = np.asarray(value, dtype=dtype)
    return Tensor(arr)


def _unbroadcast(grad, shape):
    """Reduce ``grad`` back to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# -- arithmetic -------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    b = as_tensor(b, a.dtype)
    out_data = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return Tensor(out_data, parents=(a, b), backward=backward)


def mul(a: Tensor, b) -> Tensor:
    if not isinstance(b, Tensor):
        scale = b
        out_data = a.data * scale

        def backward_scalar(g):
            return (g * scale,)

        return Tensor(out_data, parents=(a,), backward=backward_scalar)
    out_data = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.data.shape), _unbroadcast(g * a.data, b.data.shape)

    return Tensor(out_data, parents=(a, b), backward=backward)


def power(a: Tensor, exponent: float) -> Tensor:
    out_data = a.data**exponent

    def backward(g):
        return (g * exponent * a.data ** (exponent - 1.0),)

    return Tensor(out_data, parents=(a,), backward=backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with numpy batch broadcasting on leading axes."""
    a_vec = a.data.ndim == 1
    b_vec = b.data.ndim == 1
    ad = a.data[None, :] if a_vec else a.data
    bd = b.data[:, None] if b_vec else b.data
    out_data = ad @ bd
    if b_vec:
        out_data = out_data[..., 0]
    if a_vec:
        out_data = out_data[..., 0, :] if not b_vec else out_data[..., 0]

    def backward(g):
        gg = g
        if a_vec and b_vec:
            gg = gg[..., None, None]
        elif a_vec:
            gg = np.expand_dims(gg, -2)
        elif b_vec:
            gg = np.expand_dims(gg, -1)
        ga = _unbroadcast(gg @ np.swapaxes(bd, -1, -2), ad.shape)
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ gg, bd.shape)
        if a_vec:
            ga = ga.reshape(a.data.shape)
        if b_vec:
            gb = gb.reshape(b.data.shape)
        return ga, gb

    return Tensor(out_data, parents=(a, b), backward=backward)


# -- elementwise nonlinearities ---------------------------------------------


def relu(a: Tensor) -> Tensor:
    out_data = np.maximum(a.data, 0)

    def backward(g):
        return (g * (a.data > 0),)

    return Tensor(out_data, parents=(a,), backward=backward)


def sigmoid(a: Tensor) -> Tensor:
    x = a.data
    out_data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        return (g * out_data * (1.0 - out_data),)

    return Tensor(out_data, parents=(a,), backward=backward)


def exp(a: Tensor) -> Tensor:
    out_data = np.exp(a.data)

    def backward(g):
        return (g * out_data,)

    return Tensor(out_data, parents=(a,), backward=backward)


def log(a: Tensor) -> Tensor:
    out_data = np.log(a.data)

    def backward(g):
        return (g / a.data,)

    return Tensor(out_data, parents=(a,), backward=backward)


def sqrt(a: Tensor) -> Tensor:
    out_data = np.sqrt(a.data)

    def backward(g):
        return (g * 0.5 / out_data,)

    return Tensor(out_data, parents=(a,), backward=backward)


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values; gradient is zero where clamping was active."""
    out_data = np.clip(a.data, lo, hi)

    def backward(g):
        return (g * ((a.data >= lo) & (a.data <= hi)),)

    return Tensor(out_data, parents=(a,), backward=backward)


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties route the gradient to the first argument."""
    b = as_tensor(b, a.dtype)
    out_data = np.maximum(a.data, b.data)

    def backward(g):
        take_a = a.data >= b.data
        return (
            _unbroadcast(g * take_a, a.data.shape),
            _unbroadcast(g * ~take_a, b.data.shape),
        )

    return Tensor(out_data, parents=(a, b), backward=backward)


# -- reductions ---------------------------------------------------------------


def sum_(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).astype(a.dtype, copy=False),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape),)

    return Tensor(out_data, parents=(a,), backward=backward)


def mean(a: Tensor, axis=None, keepdims=False) -> Tensor:
    out_data = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size if axis is None else np.prod([a.data.shape[ax] for ax in np.atleast_1d(axis)])

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.data.shape).astype(a.dtype, copy=False),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, a.data.shape).astype(a.dtype, copy=False),)

    return Tensor(out_data, parents=(a,), backward=backward)


# -- shape manipulation -------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    out_data = a.data.reshape(shape)

    def backward(g):
        return (g.reshape(a.data.shape),)

    return Tensor(out_data, parents=(a,), backward=backward)


def transpose(a: Tensor, axes) -> Tensor:
    out_data = a.data.transpose(axes)
    inverse = np.argsort(axes)

    def backward(g):
        return (g.transpose(inverse),)

    return Tensor(out_data, parents=(a,), backward=backward)


def getitem(a: Tensor, key) -> Tensor:
    out_data = a.data[key]

    def backward(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return Tensor(out_data, parents=(a,), backward=backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(out_data, parents=tuple(tensors), backward=backward)


def embedding(weight: Tensor, ids) -> Tensor:
    """Row lookup ``weight[ids]`` with scatter-add gradient."""
    idx = np.asarray(ids, dtype=np.intp)
    out_data = weight.data[idx]

    def backward(g):
        gw = np.zeros_like(weight.data)
        np.add.at(gw, idx, g)
        return (gw,)

    return Tensor(out_data, parents=(weight,), backward=backward)


# -- normalizations and similarity --------------------------------------------


def softmax_axis(a: Tensor, axis: int) -> Tensor:
    """Exp-normalize along ``axis``; shift-invariant by construction."""
    if not -a.data.ndim <= axis < a.data.ndim:
        raise ValueError(f"softmax axis {axis} invalid for shape {a.data.shape}")
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        return (out_data * (g - dot),)

    return Tensor(out_data, parents=(a,), backward=backward)


def logsumexp(a: Tensor, axis: int) -> Tensor:
    """log(sum(exp(x))) along ``axis``; tolerates -inf entries (masked terms)."""
    m = a.data.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    e = np.exp(a.data - m)
    s = e.sum(axis=axis, keepdims=True)
    out_keep = np.log(s) + m
    out_data = np.squeeze(out_keep, axis=axis)

    def backward(g):
        soft = e / s
        return (np.expand_dims(g, axis) * soft,)

    return Tensor(out_data, parents=(a,), backward=backward)


def l2_normalize(a: Tensor, axis: int = -1) -> Tensor:
    """x / sqrt(||x||^2 + eps); maps zero vectors to zero."""
    sq = (a.data * a.data).sum(axis=axis, keepdims=True)
    inv = 1.0 / np.sqrt(sq + _NORM_EPS)
    out_data = a.data * inv

    def backward(g):
        gdot = (g * a.data).sum(axis=axis, keepdims=True)
        return (g * inv - a.data * (gdot * inv**3),)

    return Tensor(out_data, parents=(a,), backward=backward)


def cosine_similarity(a: Tensor, b: Tensor, axis: int = -1) -> Tensor:
    """Cosine of the angle between a and b along ``axis``; 0 for zero vectors."""
    na = l2_normalize(a, axis)
    nb = l2_normalize(b, axis)
    return sum_(mul(na, nb), axis=axis)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data
    n = x.data.shape[-1]

    def backward(g):
        ggain = _unbroadcast(g * xhat, gain.data.shape)
        gbias = _unbroadcast(g, bias.data.shape)
        gx_hat = g * gain.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True) - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        if n == 1:  # degenerate: xhat == 0, variance grad vanishes
            gx = np.zeros_like(x.data)
        return gx, ggain, gbias

    return Tensor(out_data, parents=(x, gain, bias), backward=backward)


# -- convolution ---------------------------------------------------------------


def _im2col(x, kh, kw, stride, pad):
    """[N,H,W,C] -> ([N,Ho,Wo,kh,kw,C] view copy flattened, (Ho, Wo))."""
    n, h, w, c = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    hp, wp = x.shape[1], x.shape[2]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    sn, sh, sw, sc = x.strides
    view = np.lib.stride_tricks.as_strided(
        x,
        shape=(n, ho, wo, kh, kw, c),
        strides=(sn, sh * stride, sw * stride, sh, sw, sc),
        writeable=False,
    )
    cols = view.reshape(n * ho * wo, kh * kw * c)
    return np.ascontiguousarray(cols), ho, wo


def _conv_forward(x, w, stride, pad):
    kh, kw, cin, cout = w.shape
    cols, ho, wo = _im2col(x, kh, kw, stride, pad)
    out = cols @ w.reshape(kh * kw * cin, cout)
    return out.reshape(x.shape[0], ho, wo, cout), cols


def _scatter_dilated(g, stride, top, left, h_out, w_out):
    """Zero canvas with ``g`` written at stride spacing, offset (top, left)."""
    n, h, w, c = g.shape
    canvas = np.zeros((n, h_out, w_out, c), dtype=g.dtype)
    canvas[:, top : top + (h - 1) * stride + 1 : stride, left : left + (w - 1) * stride + 1 : stride] = g
    return canvas


def conv2d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """2-D convolution, NHWC input and [kh,kw,Cin,Cout] kernel."""
    kh, kw, cin, cout = w.data.shape
    if x.data.shape[-1] != cin:
        raise ValueError(f"conv2d channel mismatch: input {x.data.shape[-1]}, kernel {cin}")
    out_data, cols = _conv_forward(x.data, w.data, stride, pad)
    n, ho, wo, _ = out_data.shape
    h, wid = x.data.shape[1], x.data.shape[2]

    def backward(g):
        g2 = g.reshape(n * ho * wo, cout)
        gw = (cols.T @ g2).reshape(w.data.shape)
        gx = None
        if x.requires_grad:
            # input grad = stride-dilated output grad convolved with the
            # spatially flipped, in/out-swapped kernel
            wf = np.ascontiguousarray(w.data[::-1, ::-1].transpose(0, 1, 3, 2))
            gd = _scatter_dilated(g, stride, kh - 1 - pad, kw - 1 - pad, h + kh - 1, wid + kw - 1)
            gx, _ = _conv_forward(gd, wf, 1, 0)
            gx = gx[:, :h, :wid]
        return gx, gw

    return Tensor(out_data, parents=(x, w), backward=backward)


# -- spatial sampling ----------------------------------------------------------


def bilinear_sample(fmap: Tensor, points: Tensor) -> Tensor:
    """Gather K feature vectors from a [w,h,C] grid at fractional (x,y) points.

    Out-of-grid coordinates clamp to the border; the clamped dimension stops
    propagating gradient to the point beyond the border. Integer coordinates
    return the exact grid vector.
    """
    gw, gh, _ = fmap.data.shape
    pts = points.data if isinstance(points, Tensor) else np.asarray(points, dtype=fmap.dtype)
    pts = pts.reshape(-1, 2)
    xc = np.clip(pts[:, 0], 0.0, gw - 1.0)
    yc = np.clip(pts[:, 1], 0.0, gh - 1.0)
    x0 = np.floor(xc).astype(np.intp)
    y0 = np.floor(yc).astype(np.intp)
    x1 = np.minimum(x0 + 1, gw - 1)
    y1 = np.minimum(y0 + 1, gh - 1)
    fx = (xc - x0)[:, None]
    fy = (yc - y0)[:, None]
    v00 = fmap.data[x0, y0]
    v01 = fmap.data[x0, y1]
    v10 = fmap.data[x1, y0]
    v11 = fmap.data[x1, y1]
    out_data = (
        v00 * (1 - fx) * (1 - fy) + v01 * (1 - fx) * fy + v10 * fx * (1 - fy) + v11 * fx * fy
    )

    point_parent = points if isinstance(points, Tensor) else None
    parents = (fmap,) if point_parent is None else (fmap, point_parent)

    def backward(g):
        gf = None
        if fmap.requires_grad:
            gf = np.zeros_like(fmap.data)
            np.add.at(gf, (x0, y0), g * (1 - fx) * (1 - fy))
            np.add.at(gf, (x0, y1), g * (1 - fx) * fy)
            np.add.at(gf, (x1, y0), g * fx * (1 - fy))
            np.add.at(gf, (x1, y1), g * fx * fy)
        if point_parent is None:
            return (gf,)
        # d/dx and d/dy of the blend; zero where the coordinate was clamped
        dx = ((v10 - v00) * (1 - fy) + (v11 - v01) * fy, )[0]
        dy = ((v01 - v00) * (1 - fx) + (v11 - v10) * fx, )[0]
        in_x = (pts[:, 0] > 0.0) & (pts[:, 0] < gw - 1.0)
        in_y = (pts[:, 1] > 0.0) & (pts[:, 1] < gh - 1.0)
        gp = np.stack(
            [(g * dx).sum(axis=1) * in_x, (g * dy).sum(axis=1) * in_y],
            axis=1,
        ).reshape(point_parent.data.shape)
        return gf, gp

    return Tensor(out_data, parents=parents, backward=backward)
