"""Dense float64 tensors with reverse-mode automatic differentiation.

Every differentiable operation records a backward closure on a tape
(implicitly, through parent links); ``Tensor.backward()`` walks the graph in
reverse topological order.  Everything runs in float64 so analytic gradients
can be checked against central finite differences at tight tolerances.
"""

from __future__ import annotations

import contextlib

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import backend


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class WindowTooShortError(ValueError):
    """A convolution kernel does not fit inside its input window."""


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (evaluation fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- autodiff ---------------------------------------------------------

    def backward(self):
        """Populate ``grad`` on every reachable tensor that requires grad.

        Only valid on scalar outputs (e.g. a loss value).
        """
        if self.data.size != 1:
            raise ShapeError(
                f"backward() requires a scalar, got shape {self.data.shape}"
            )
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward_fn is None or node.grad is None:
                continue
            grads = node._backward_fn(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    # copy if g aliases the node's grad buffer (or a view of
                    # it); otherwise take ownership of the fresh array
                    if g is node.grad or g.base is not None:
                        g = np.ascontiguousarray(g).copy()
                    parent.grad = g
                else:
                    np.add(parent.grad, g, out=parent.grad)
            if node is not self:
                # interior grads are no longer needed; release the buffer
                node.grad = None

    # -- operators --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_ensure(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_ensure(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, key):
        return take(self, key)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)


class Parameter(Tensor):
    """A named trainable tensor."""

    __slots__ = ("name",)

    def __init__(self, name: str, data):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.data.shape})"


def _ensure(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _from_op(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# -- arithmetic -------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    data = a.data + b.data
    return _from_op(
        data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    data = a.data - b.data
    return _from_op(
        data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    data = a.data * b.data
    return _from_op(
        data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    data = a.data / b.data
    return _from_op(
        data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        ),
    )


def power(a, p: float) -> Tensor:
    a = _ensure(a)
    data = a.data**p
    return _from_op(data, (a,), lambda g: (g * p * a.data ** (p - 1),))


def texp(a) -> Tensor:
    a = _ensure(a)
    data = np.exp(a.data)
    return _from_op(data, (a,), lambda g: (g * data,))


def tsqrt(a) -> Tensor:
    a = _ensure(a)
    data = np.sqrt(a.data)
    return _from_op(data, (a,), lambda g: (g * 0.5 / data,))


def tabs(a) -> Tensor:
    a = _ensure(a)
    return _from_op(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def matmul(a, b) -> Tensor:
    a, b = _ensure(a), _ensure(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    data = a.data @ b.data

    def bwd(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return _from_op(data, (a, b), bwd)


# -- shape manipulation ------------------------------------------------------


def reshape(a, *shape) -> Tensor:
    a = _ensure(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = a.data.shape
    return _from_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def take(a, key) -> Tensor:
    """Numpy-style indexing; gradient scatters back additively."""
    a = _ensure(a)
    data = a.data[key]

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, key, g)
        return (ga,)

    return _from_op(data, (a,), bwd)


def take_rows(a, idx: np.ndarray) -> Tensor:
    """Gather rows of a 2-D tensor; repeated indices allowed."""
    a = _ensure(a)
    idx = np.asarray(idx, dtype=np.int64)
    data = a.data[idx]
    return _from_op(
        data, (a,), lambda g: (backend.segment_sum(g, idx, a.data.shape[0]),)
    )


def scatter_sum(a, ids: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``a`` into ``num_segments`` buckets given by ``ids``."""
    a = _ensure(a)
    ids = np.asarray(ids, dtype=np.int64)
    data = backend.segment_sum(a.data, ids, num_segments)
    return _from_op(data, (a,), lambda g: (g[ids],))


def weighted_scatter(values, scale, src: np.ndarray, dst: np.ndarray,
                     n_out: int) -> Tensor:
    """Fused gather-scale-scatter over an edge list.

    ``out[dst[e]] += scale[e] * values[src[e]]`` -- one kernel call instead
    of materializing per-edge message matrices.  ``scale`` may be a constant
    array (degree normalizers) or a Tensor (attention coefficients).
    """
    values = _ensure(values)
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    scale_t = scale if isinstance(scale, Tensor) else None
    scale_data = scale.data if scale_t is not None else np.asarray(scale, np.float64)
    if len(src) != len(dst) or len(src) != len(scale_data):
        raise ShapeError(
            f"edge arrays disagree: src {len(src)}, dst {len(dst)}, "
            f"scale {len(scale_data)}"
        )
    data = backend.weighted_scatter(values.data, src, dst, scale_data, n_out)

    def bwd(g):
        gv = None
        if values.requires_grad:
            gv = backend.weighted_scatter(g, dst, src, scale_data,
                                          values.data.shape[0])
        gs = None
        if scale_t is not None and scale_t.requires_grad:
            gs = backend.weighted_scatter_scale_grad(values.data, g, src, dst)
        return (gv, gs) if scale_t is not None else (gv,)

    parents = (values, scale_t) if scale_t is not None else (values,)
    return _from_op(data, parents, bwd)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [_ensure(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        out = []
        for i in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            out.append(g[tuple(sl)])
        return tuple(out)

    return _from_op(data, tensors, bwd)


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = _ensure(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        if not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _from_op(data, (a,), bwd)


def tmean(a, axis=None, keepdims=False) -> Tensor:
    a = _ensure(a)
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.data.shape[i] for i in axis]))
    else:
        n = a.data.shape[axis]
    return tsum(a, axis=axis, keepdims=keepdims) * (1.0 / n)


# -- activations -------------------------------------------------------------


def sigmoid(a) -> Tensor:
    a = _ensure(a)
    data = 1.0 / (1.0 + np.exp(-a.data))
    return _from_op(data, (a,), lambda g: (g * data * (1.0 - data),))


def tanh(a) -> Tensor:
    a = _ensure(a)
    data = np.tanh(a.data)
    return _from_op(data, (a,), lambda g: (g * (1.0 - data * data),))


def silu(a) -> Tensor:
    """x * sigmoid(x)."""
    a = _ensure(a)
    s = 1.0 / (1.0 + np.exp(-a.data))
    data = a.data * s
    return _from_op(data, (a,), lambda g: (g * s * (1.0 + a.data * (1.0 - s)),))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = _ensure(a)
    pos = a.data >= 0
    data = np.where(pos, a.data, slope * a.data)
    return _from_op(data, (a,), lambda g: (g * np.where(pos, 1.0, slope),))


# -- segment softmax ---------------------------------------------------------


def segment_softmax(scores, ids: np.ndarray, num_segments: int | None = None) -> Tensor:
    """Softmax normalized independently within each segment of ``ids``.

    Used to normalize attention scores over each target node's incoming
    edges.  An empty score vector is a no-op.
    """
    scores = _ensure(scores)
    ids = np.asarray(ids, dtype=np.int64)
    if scores.data.ndim != 1 or ids.shape != scores.data.shape:
        raise ShapeError(
            f"segment_softmax expects matching 1-D scores/ids, got "
            f"{scores.data.shape} and {ids.shape}"
        )
    if scores.data.size == 0:
        return _from_op(np.zeros(0), (scores,), lambda g: (np.zeros(0),))
    num = int(num_segments) if num_segments is not None else int(ids.max()) + 1
    m = backend.segment_max(scores.data, ids, num)
    e = np.exp(scores.data - m[ids])
    z = backend.segment_sum(e, ids, num)
    p = e / z[ids]

    def bwd(g):
        dot = backend.segment_sum(p * g, ids, num)
        return (p * (g - dot[ids]),)

    return _from_op(p, (scores,), bwd)


# -- 1-D convolution ---------------------------------------------------------


def conv1d(x, kernels, bias, padding: int = 0) -> Tensor:
    """Valid cross-correlation with stride 1 (optionally zero-padded).

    ``x`` is ``(C_in, L)`` or batched ``(N, C_in, L)``; ``kernels`` is
    ``(C_out, C_in, K)``; ``bias`` is ``(C_out,)``.  Output length is
    ``L + 2*padding - K + 1``.
    """
    x, kernels, bias = _ensure(x), _ensure(kernels), _ensure(bias)
    squeeze = x.ndim == 2
    x3d = reshape(x, (1,) + x.shape) if squeeze else x
    if x3d.ndim != 3 or kernels.ndim != 3:
        raise ShapeError(
            f"conv1d expects (N,C_in,L) input and (C_out,C_in,K) kernels, got "
            f"{x.shape} and {kernels.shape}"
        )
    n, c_in, length = x3d.shape
    c_out, c_in_k, k = kernels.shape
    if c_in != c_in_k:
        raise ShapeError(f"conv1d channel mismatch: input {c_in}, kernels {c_in_k}")
    if bias.shape != (c_out,):
        raise ShapeError(f"conv1d bias shape {bias.shape}, expected ({c_out},)")
    lpad = length + 2 * padding
    if k > lpad:
        raise WindowTooShortError(
            f"kernel size {k} exceeds input length {lpad}"
        )
    l_out = lpad - k + 1

    xp = x3d.data if padding == 0 else np.pad(
        x3d.data, ((0, 0), (0, 0), (padding, padding))
    )
    # im2col: windows (N, C_in, L_out, K) -> (N*L_out, C_in*K), then one GEMM
    win = sliding_window_view(xp, k, axis=2)
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(
        n * l_out, c_in * k
    )
    wmat = kernels.data.reshape(c_out, c_in * k)
    y = (cols @ wmat.T + bias.data).reshape(n, l_out, c_out).transpose(0, 2, 1)

    def bwd(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 1)).reshape(n * l_out, c_out)
        gb = g.sum(axis=(0, 2)) if bias.requires_grad else None
        gw = None
        if kernels.requires_grad:
            # recompute im2col columns instead of holding them on the tape
            win_b = sliding_window_view(xp, k, axis=2)
            cols_b = np.ascontiguousarray(win_b.transpose(0, 2, 1, 3)).reshape(
                n * l_out, c_in * k
            )
            gw = (gmat.T @ cols_b).reshape(c_out, c_in, k)
        gx = None
        if x3d.requires_grad:
            gcols = (gmat @ wmat).reshape(n, l_out, c_in, k)
            gxp = backend.col2im_add(gcols, lpad)
            gx = gxp if padding == 0 else gxp[:, :, padding:-padding]
        return gx, gw, gb

    out = _from_op(y, (x3d, kernels, bias), bwd)
    return reshape(out, (c_out, l_out)) if squeeze else out


# -- AdamW -------------------------------------------------------------------


def adamw_update(p, g, m, v, t, lr, betas, eps, weight_decay):
    """One decoupled-weight-decay Adam step on raw arrays.

    Returns updated ``(p, m, v)``; ``t`` is the 1-based step count.
    """
    if g.shape != p.shape:
        raise ShapeError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    b1, b2 = betas
    m = b1 * m + (1.0 - b1) * g
    v = b2 * v + (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    p = p * (1.0 - lr * weight_decay) - lr * m_hat / (np.sqrt(v_hat) + eps)
    return p, m, v


class AdamW:
    """AdamW over a list of Parameters (decoupled weight decay)."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.01):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.state = {
            p.name: {"m": np.zeros_like(p.data), "v": np.zeros_like(p.data)}
            for p in self.params
        }

    def step(self):
        self.t += 1
        for p in self.params:
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            st = self.state[p.name]
            p.data, st["m"], st["v"] = adamw_update(
                p.data, g, st["m"], st["v"], self.t,
                self.lr, self.betas, self.eps, self.weight_decay,
            )

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# -- initialization ----------------------------------------------------------


def uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    """uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / np.sqrt(max(fan_in, 1))
    return rng.uniform(-bound, bound, size=shape)
