"""Dense float64 tensors with reverse-mode automatic differentiation.

Each operation stores its operands and a vector-Jacobian closure on the
output tensor; `backward` walks the recorded graph once in reverse
topological order and accumulates gradients on every tensor that requires
them. Buffers are always float64 and reductions keep numpy's row-major
order, so a forward pass is bit-reproducible for fixed inputs.
"""

from __future__ import annotations

import contextlib

import numpy as np
from scipy.special import erf

from .errors import ConfigurationError, DimensionError

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (forward values only)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-dimensional float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- operators ---------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    # -- shape / reduction methods -----------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)

    def max(self, axis=None, keepdims=False):
        return reduce_max(self, axis, keepdims)

    def min(self, axis=None, keepdims=False):
        return reduce_min(self, axis, keepdims)


class Parameter:
    """Named leaf tensor; names must be unique within a model."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, data):
        self.name = name
        self.tensor = Tensor(data, requires_grad=True)

    @property
    def data(self) -> np.ndarray:
        return self.tensor.data

    @property
    def grad(self):
        return self.tensor.grad

    @property
    def shape(self) -> tuple:
        return self.tensor.shape

    def zero_grad(self):
        self.tensor.grad = None

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, Parameter):
        return x.tensor
    return Tensor(x)


def _record(data, parents, vjp) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = tuple(parents)
        out._vjp = vjp
        return out
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# -- elementwise arithmetic --------------------------------------------------


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _record(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _record(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _record(out, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def vjp(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _record(out, (a, b), vjp)


# -- transcendental / pointwise ----------------------------------------------


def log(t) -> Tensor:
    t = as_tensor(t)
    out = np.log(t.data)

    def vjp(g):
        return (g / t.data,)

    return _record(out, (t,), vjp)


def sqrt(t) -> Tensor:
    t = as_tensor(t)
    out = np.sqrt(t.data)

    def vjp(g):
        return (g * 0.5 / out,)

    return _record(out, (t,), vjp)


def sigmoid(t) -> Tensor:
    t = as_tensor(t)
    x = t.data
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _record(out, (t,), vjp)


def gelu(t) -> Tensor:
    """Gaussian error linear unit, exact erf form."""
    t = as_tensor(t)
    x = t.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out = x * cdf

    def vjp(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
        return (g * (cdf + x * pdf),)

    return _record(out, (t,), vjp)


def softmax(t, axis: int = -1) -> Tensor:
    """Normalized exponentials along `axis`, stabilized by max subtraction."""
    t = as_tensor(t)
    if not -t.ndim <= axis < t.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {t.shape}")
    z = t.data - np.max(t.data, axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        dot = np.sum(g * y, axis=axis, keepdims=True)
        return ((g - dot) * y,)

    return _record(y, (t,), vjp)


# -- structural ops -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs 2-D operands, got shapes {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents disagree: {a.shape} x {b.shape}")
    out = np.matmul(a.data, b.data)

    def vjp(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _record(out, (a, b), vjp)


def reshape(t, shape) -> Tensor:
    t = as_tensor(t)
    out = t.data.reshape(shape)

    def vjp(g):
        return (g.reshape(t.shape),)

    return _record(out, (t,), vjp)


def transpose(t, axes) -> Tensor:
    t = as_tensor(t)
    axes = tuple(axes)
    out = np.transpose(t.data, axes)
    inv = tuple(np.argsort(axes))

    def vjp(g):
        return (np.transpose(g, inv),)

    return _record(out, (t,), vjp)


def concat(parts, axis: int = 0) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(parts), vjp)


def getitem(t, idx) -> Tensor:
    """Basic indexing (ints and slices); gradient scatters into the slice."""
    t = as_tensor(t)
    out = t.data[idx]

    def vjp(g):
        gt = np.zeros_like(t.data)
        gt[idx] = g
        return (gt,)

    return _record(out, (t,), vjp)


def gather_rows(t, indices) -> Tensor:
    """Pick one column per row: out[i] = t[i, indices[i]]."""
    t = as_tensor(t)
    if t.ndim != 2:
        raise DimensionError(f"gather_rows needs a 2-D tensor, got shape {t.shape}")
    idx = np.asarray(indices, dtype=np.intp)
    rows = np.arange(t.shape[0])
    out = t.data[rows, idx]

    def vjp(g):
        gt = np.zeros_like(t.data)
        np.add.at(gt, (rows, idx), g)
        return (gt,)

    return _record(out, (t,), vjp)


# -- reductions ---------------------------------------------------------------


def _norm_axes(axis, ndim) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, (int, np.integer)):
        axis = (int(axis),)
    axes = tuple(a % ndim for a in axis)
    if len(set(axes)) != len(axes):
        raise DimensionError(f"duplicate reduction axes {axis}")
    return axes


def _expand_reduced(g: np.ndarray, shape: tuple, axes: tuple, keepdims: bool) -> np.ndarray:
    if not keepdims:
        for a in sorted(axes):
            g = np.expand_dims(g, a)
    return np.broadcast_to(g, shape)


def reduce_sum(t, axis=None, keepdims=False) -> Tensor:
    t = as_tensor(t)
    axes = _norm_axes(axis, t.ndim)
    out = np.sum(t.data, axis=axes, keepdims=keepdims)

    def vjp(g):
        return (_expand_reduced(g, t.shape, axes, keepdims).copy(),)

    return _record(out, (t,), vjp)


def reduce_mean(t, axis=None, keepdims=False) -> Tensor:
    t = as_tensor(t)
    axes = _norm_axes(axis, t.ndim)
    count = int(np.prod([t.shape[a] for a in axes])) if axes else 1
    out = np.mean(t.data, axis=axes, keepdims=keepdims)

    def vjp(g):
        return (_expand_reduced(g, t.shape, axes, keepdims) / count,)

    return _record(out, (t,), vjp)


def _reduce_extremum(t, axis, keepdims, argfn) -> Tensor:
    """Max/min with gradient routed to the first extremum in row-major order."""
    t = as_tensor(t)
    axes = _norm_axes(axis, t.ndim)
    kept = tuple(a for a in range(t.ndim) if a not in axes)
    perm = kept + tuple(sorted(axes))
    moved = np.transpose(t.data, perm)
    rest = moved.shape[: len(kept)]
    flat = moved.reshape(rest + (-1,))
    idx = argfn(flat, axis=-1)
    vals = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    out_shape = tuple(
        (1 if a in axes else t.shape[a]) for a in range(t.ndim) if keepdims or a not in axes
    )
    out = vals.reshape(out_shape)
    inv = tuple(np.argsort(perm))

    def vjp(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g.reshape(rest + (1,)), axis=-1)
        return (np.transpose(gflat.reshape(moved.shape), inv),)

    return _record(out, (t,), vjp)


def reduce_max(t, axis=None, keepdims=False) -> Tensor:
    return _reduce_extremum(t, axis, keepdims, np.argmax)


def reduce_min(t, axis=None, keepdims=False) -> Tensor:
    return _reduce_extremum(t, axis, keepdims, np.argmin)


def global_avg_pool(t) -> Tensor:
    """Per-channel mean over the two trailing spatial axes."""
    t = as_tensor(t)
    if t.ndim < 3:
        raise DimensionError(f"global_avg_pool needs (..., C, h, w), got shape {t.shape}")
    return reduce_mean(t, axis=(-2, -1))


def global_max_pool(t) -> Tensor:
    """Per-channel max over the two trailing spatial axes.

    Ties route the gradient to the first maximum in row-major order.
    """
    t = as_tensor(t)
    if t.ndim < 3:
        raise DimensionError(f"global_max_pool needs (..., C, h, w), got shape {t.shape}")
    return reduce_max(t, axis=(-2, -1))


# -- normalization ------------------------------------------------------------


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Standardize the last axis to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise ConfigurationError(f"layer_norm eps must be positive, got {eps}")
    x = as_tensor(x)
    gain, bias = as_tensor(gain), as_tensor(bias)
    feat = (x.shape[-1],)
    if gain.shape != feat or bias.shape != feat:
        raise DimensionError(
            f"layer_norm affine shapes {gain.shape}/{bias.shape} do not match last axis {feat}"
        )
    mu = reduce_mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = reduce_mean(mul(centered, centered), axis=-1, keepdims=True)
    normed = div(centered, sqrt(add(var, eps)))
    return add(mul(normed, gain), bias)


# -- convolution --------------------------------------------------------------


def _same_padding(kh: int, kw: int) -> tuple:
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigurationError(f"same-padding convolution needs odd kernel extents, got {kh}x{kw}")
    return (kh - 1) // 2, (kw - 1) // 2


def conv2d(x, kernel, padding=None) -> Tensor:
    """Cross-correlation with zero padding, spatial extent preserved.

    `x` is (D, h, w) or (B, D, h, w); `kernel` is (D, C, kh, kw) and may carry
    a leading batch axis matching `x` for per-sample kernels. `padding` is an
    int or (ph, pw); defaults to the same-padding for the kernel extents.
    """
    x, kernel = as_tensor(x), as_tensor(kernel)
    x_batched = x.ndim == 4
    k_batched = kernel.ndim == 5
    if x.ndim not in (3, 4):
        raise DimensionError(f"conv2d input must be (D,h,w) or (B,D,h,w), got shape {x.shape}")
    if kernel.ndim not in (4, 5):
        raise DimensionError(
            f"conv2d kernel must be (D,C,kh,kw) or (B,D,C,kh,kw), got shape {kernel.shape}"
        )
    xd = x.data if x_batched else x.data[None]
    kd = kernel.data if k_batched else kernel.data[None]
    bsz, d_in, h_in, w_in = xd.shape
    kb, kd_in, c_out, kh, kw = kd.shape
    if kd_in != d_in:
        raise DimensionError(
            f"conv2d channel mismatch: input has {d_in} channels, kernel expects {kd_in}"
        )
    if k_batched and kb != bsz:
        raise DimensionError(f"conv2d kernel batch {kb} does not match input batch {bsz}")
    if padding is None:
        ph, pw = _same_padding(kh, kw)
    elif isinstance(padding, (int, np.integer)):
        ph = pw = int(padding)
    else:
        ph, pw = (int(p) for p in padding)
    if h_in + 2 * ph - kh + 1 != h_in or w_in + 2 * pw - kw + 1 != w_in:
        raise DimensionError(
            f"padding ({ph},{pw}) does not preserve spatial extent for kernel {kh}x{kw}"
        )

    padded = np.pad(xd, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(2, 3))
    # (B, D, h, w, kh, kw) -> (B, h*w, D*kh*kw); column order matches kernel layout
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(bsz, h_in * w_in, d_in * kh * kw)
    kmat = kd.transpose(0, 1, 3, 4, 2).reshape(kb, d_in * kh * kw, c_out)
    out = np.matmul(cols, kmat).transpose(0, 2, 1).reshape(bsz, c_out, h_in, w_in)
    if not x_batched:
        out = out[0]

    def vjp(g):
        gb = g if x_batched else g[None]
        gmat = gb.reshape(bsz, c_out, h_in * w_in).transpose(0, 2, 1)
        gk_mat = np.matmul(cols.transpose(0, 2, 1), gmat)
        if not k_batched:
            gk_mat = gk_mat.sum(axis=0, keepdims=True)
        gk = gk_mat.reshape(kb, d_in, kh, kw, c_out).transpose(0, 1, 4, 2, 3)
        gcols = np.matmul(gmat, np.swapaxes(kmat, -1, -2))
        gcols = gcols.reshape(bsz, h_in, w_in, d_in, kh, kw)
        gpad = np.zeros_like(padded)
        for u in range(kh):
            for v in range(kw):
                gpad[:, :, u : u + h_in, v : v + w_in] += gcols[:, :, :, :, u, v].transpose(
                    0, 3, 1, 2
                )
        gx = gpad[:, :, ph : ph + h_in, pw : pw + w_in]
        return (gx if x_batched else gx[0]), (gk if k_batched else gk[0])

    return _record(out, (x, kernel), vjp)


# -- backward pass ------------------------------------------------------------


def _toposort(root: Tensor) -> list:
    order, seen, stack = [], set(), [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor):
    """Accumulate d(loss)/d(t) into `t.grad` for every reachable tensor.

    Repeated calls without zeroing gradients accumulate. The loss must be a
    scalar produced by a graph that reaches at least one tracked tensor.
    """
    if not isinstance(loss, Tensor):
        raise ValueError("backward expects a Tensor loss")
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("loss does not require grad; no parameters are reachable")

    order = _toposort(loss)
    flowing = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = flowing.pop(id(node), None)
        if g is None:
            continue
        if node.grad is None:
            node.grad = g.copy()
        else:
            node.grad = node.grad + g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for parent, pg in zip(node._parents, parent_grads):
            if not parent.requires_grad or pg is None:
                continue
            acc = flowing.get(id(parent))
            flowing[id(parent)] = pg if acc is None else acc + pg
