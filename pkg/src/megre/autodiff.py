"""Tape-based reverse-mode differentiation over numpy arrays.

Every op below accepts plain ndarrays and/or :class:`Variable` wrappers.
With plain inputs it computes with numpy and returns a plain array, so the
same reconstruction code serves both evaluation and training.  With at
least one gradient-carrying Variable it records the operation on an
implicit tape (the parent links) and :func:`backward` later propagates
adjoints to the leaves.

Complex arrays use the real-pair convention: the adjoint of a complex node
z is g = dL/d(Re z) + i dL/d(Im z).  All trainable leaves are real, so this
reduces to ordinary gradients at the parameters while complex intermediates
(k-space, images) stay native complex128.  Rule of thumb under this
convention: for z = a*b, g_a = g*conj(b); for a unitary FFT the adjoint is
the inverse FFT; contributions landing on a real node keep only their real
part.
"""

from __future__ import annotations

import itertools

import numpy as np

from .fourier import fft_centered, ifft_centered


class NumericError(RuntimeError):
    """A computation produced a non-finite value."""


_node_counter = itertools.count()


class Variable:
    __slots__ = ("value", "grad", "requires", "_parents", "_backward", "_op", "_idx")

    def __init__(self, value, requires=False, parents=(), backward=None, op="leaf"):
        self.value = np.asarray(value)
        self.grad = None
        self.requires = requires
        self._parents = tuple(parents)
        self._backward = backward
        self._op = op
        self._idx = next(_node_counter)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Variable(op={self._op}, shape={self.value.shape}, dtype={self.value.dtype})"

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
        return neg(self)

    def __getitem__(self, idx):
        return getitem(self, idx)


def parameter(x):
    """Gradient-carrying leaf (real float64)."""
    return Variable(np.asarray(x, dtype=np.float64), requires=True, op="param")


def constant(x):
    return Variable(np.asarray(x), requires=False, op="const")


def is_variable(x):
    return isinstance(x, Variable)


def val(x):
    """Underlying ndarray of a Variable, or the input as an array."""
    return x.value if isinstance(x, Variable) else np.asarray(x)


def _any_var(*xs):
    return any(isinstance(x, Variable) for x in xs)


def _wrap(x):
    return x if isinstance(x, Variable) else constant(x)


def _make(value, parents, backward, op):
    requires = any(p.requires for p in parents)
    if not requires:
        # prune constant subgraphs: keep the value, drop the history
        return Variable(value, requires=False, op=op)
    return Variable(value, requires=True, parents=parents, backward=backward, op=op)


def _fit(g, ref):
    """Adapt an adjoint to the shape/dtype of the parent it flows into.

    Sums over broadcast axes and drops the imaginary part when the parent
    is real (dL/dx of a real x is real by definition).
    """
    ref_shape = ref.shape
    if g.shape != ref_shape:
        extra = g.ndim - len(ref_shape)
        if extra:
            g = g.sum(axis=tuple(range(extra)))
        axes = tuple(i for i, (gs, rs) in enumerate(zip(g.shape, ref_shape)) if rs == 1 and gs != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        g = g.reshape(ref_shape)
    if not np.iscomplexobj(ref) and np.iscomplexobj(g):
        g = g.real
    return g


def _accum(var, g):
    # grads are never mutated in place, so sharing/views are safe to store
    if not var.requires:
        return
    var.grad = g if var.grad is None else var.grad + g


def backward(root):
    """Propagate d(root)/d(leaf) through the graph; root must be real scalar."""
    if not isinstance(root, Variable):
        raise TypeError("backward needs a Variable")
    if root.value.size != 1:
        raise ValueError("backward root must be scalar")
    # iterative post-order; graph depth can exceed the recursion limit
    topo, visited, stack = [], set(), [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires and id(p) not in visited:
                stack.append((p, False))
    root.grad = np.ones_like(root.value, dtype=np.float64)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def first_nonfinite(root):
    """(op, node index) of the earliest-created non-finite node, or None."""
    seen, stack, bad = set(), [root], []
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if not np.all(np.isfinite(node.value)):
            bad.append(node)
        stack.extend(node._parents)
    if not bad:
        return None
    worst = min(bad, key=lambda n: n._idx)
    return worst._op, worst._idx


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b):
    if not _any_var(a, b):
        return np.asarray(a) + np.asarray(b)
    a, b = _wrap(a), _wrap(b)
    out_val = a.value + b.value

    def _bw(g):
        _accum(a, _fit(g, a.value))
        _accum(b, _fit(g, b.value))

    return _make(out_val, (a, b), _bw, "add")


def sub(a, b):
    if not _any_var(a, b):
        return np.asarray(a) - np.asarray(b)
    a, b = _wrap(a), _wrap(b)

    def _bw(g):
        _accum(a, _fit(g, a.value))
        _accum(b, _fit(-g, b.value))

    return _make(a.value - b.value, (a, b), _bw, "sub")


def neg(a):
    if not _any_var(a):
        return -np.asarray(a)

    def _bw(g):
        _accum(a, _fit(-g, a.value))

    return _make(-a.value, (a,), _bw, "neg")


def mul(a, b):
    if not _any_var(a, b):
        return np.asarray(a) * np.asarray(b)
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value

    def _bw(g):
        if a.requires:
            _accum(a, _fit(g * np.conj(bv), av))
        if b.requires:
            _accum(b, _fit(g * np.conj(av), bv))

    return _make(av * bv, (a, b), _bw, "mul")


def div(a, b):
    if not _any_var(a, b):
        return np.asarray(a) / np.asarray(b)
    a, b = _wrap(a), _wrap(b)
    av, bv = a.value, b.value

    def _bw(g):
        cb = np.conj(bv)
        if a.requires:
            _accum(a, _fit(g / cb, av))
        if b.requires:
            _accum(b, _fit(-g * np.conj(av) / (cb * cb), bv))

    return _make(av / bv, (a, b), _bw, "div")


def div_safe(a, b):
    """a / b with 0/0 -> 0, for real non-negative denominators.

    Used inside conjugate gradients, where a per-echo residual of exactly
    zero must freeze that echo instead of producing NaN.  The zero mask is
    taken from the forward value and treated as constant.
    """
    bv0 = val(b)
    mask = bv0 != 0
    safe = np.where(mask, bv0, 1.0)
    if not _any_var(a, b):
        return np.where(mask, np.asarray(a) / safe, 0.0)
    a, b = _wrap(a), _wrap(b)
    av = a.value
    out_val = np.where(mask, av / safe, 0.0)

    def _bw(g):
        if a.requires:
            _accum(a, _fit(g * mask / safe, av))
        if b.requires:
            _accum(b, _fit(-g * mask * av / (safe * safe), b.value))

    return _make(out_val, (a, b), _bw, "div_safe")


def tsum(a, axis=None, keepdims=False):
    if not _any_var(a):
        return np.sum(np.asarray(a), axis=axis, keepdims=keepdims)
    av = a.value
    out_val = np.sum(av, axis=axis, keepdims=keepdims)

    def _bw(g):
        gg = g
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            axes = tuple(ax % av.ndim for ax in axes)
            shape = tuple(1 if i in axes else s for i, s in enumerate(av.shape))
            gg = gg.reshape(shape)
        elif axis is None and not keepdims:
            gg = np.asarray(gg).reshape((1,) * av.ndim)
        _accum(a, np.broadcast_to(gg, av.shape))

    return _make(out_val, (a,), _bw, "sum")


def tmean(a, axis=None, keepdims=False):
    av = val(a)
    if axis is None:
        count = av.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([av.shape[ax] for ax in axes]))
    return div(tsum(a, axis=axis, keepdims=keepdims), float(count))


def reshape(a, shape):
    if not _any_var(a):
        return np.asarray(a).reshape(shape)
    av = a.value

    def _bw(g):
        _accum(a, g.reshape(av.shape))

    return _make(av.reshape(shape), (a,), _bw, "reshape")


def getitem(a, idx):
    if not _any_var(a):
        return np.asarray(a)[idx]
    av = a.value

    def _bw(g):
        buf = np.zeros_like(av)
        buf[idx] = g
        _accum(a, buf)

    return _make(av[idx], (a,), _bw, "getitem")


def concat(parts, axis=0):
    if not any(_any_var(p) for p in parts):
        return np.concatenate([np.asarray(p) for p in parts], axis=axis)
    parts = [_wrap(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    out_val = np.concatenate([p.value for p in parts], axis=axis)

    def _bw(g):
        start = 0
        for p, n in zip(parts, sizes):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(start, start + n)
            _accum(p, _fit(g[tuple(sl)], p.value))
            start += n

    return _make(out_val, tuple(parts), _bw, "concat")


# ---------------------------------------------------------------------------
# nonlinearities


def relu(a):
    if not _any_var(a):
        return np.maximum(np.asarray(a), 0.0)
    av = a.value
    mask = av > 0  # subgradient at 0 is 0

    def _bw(g):
        _accum(a, g * mask)

    return _make(av * mask, (a,), _bw, "relu")


def _sigmoid_value(av):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-av))


def sigmoid(a):
    if not _any_var(a):
        return _sigmoid_value(np.asarray(a))
    s = _sigmoid_value(a.value)

    def _bw(g):
        _accum(a, g * s * (1.0 - s))

    return _make(s, (a,), _bw, "sigmoid")


# ---------------------------------------------------------------------------
# complex bridging


def conj(a):
    if not _any_var(a):
        return np.conj(np.asarray(a))

    def _bw(g):
        _accum(a, _fit(np.conj(g), a.value))

    return _make(np.conj(a.value), (a,), _bw, "conj")


def creal(a):
    if not _any_var(a):
        return np.asarray(a).real.copy()
    av = a.value

    def _bw(g):
        _accum(a, g.astype(av.dtype))

    return _make(av.real.copy(), (a,), _bw, "creal")


def cimag(a):
    if not _any_var(a):
        return np.asarray(a).imag.copy()
    av = a.value

    def _bw(g):
        _accum(a, (1j * g).astype(av.dtype))

    return _make(av.imag.copy(), (a,), _bw, "cimag")


def make_complex(re, im):
    if not _any_var(re, im):
        return np.asarray(re) + 1j * np.asarray(im)
    re, im = _wrap(re), _wrap(im)

    def _bw(g):
        _accum(re, _fit(g.real, re.value))
        _accum(im, _fit(g.imag, im.value))

    return _make(re.value + 1j * im.value, (re, im), _bw, "make_complex")


def fftc(a, axes=(-2, -1)):
    if not _any_var(a):
        return fft_centered(a, axes)

    def _bw(g):
        _accum(a, ifft_centered(g, axes))  # adjoint of a unitary map

    return _make(fft_centered(a.value, axes), (a,), _bw, "fftc")


def ifftc(a, axes=(-2, -1)):
    if not _any_var(a):
        return ifft_centered(a, axes)

    def _bw(g):
        _accum(a, fft_centered(g, axes))

    return _make(ifft_centered(a.value, axes), (a,), _bw, "ifftc")


# ---------------------------------------------------------------------------
# structured linear ops


def _im2col(xp, kh, kw):
    # xp: (C, Hp, Wp) -> (H*W, C*kh*kw) for valid windows
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    c, h, w = win.shape[0], win.shape[1], win.shape[2]
    return win.transpose(1, 2, 0, 3, 4).reshape(h * w, c * kh * kw)


def _conv2d_value(x, w, b=None):
    cout, cin, kh, kw = w.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    cols = _im2col(xp, kh, kw)
    y = cols @ w.reshape(cout, cin * kh * kw).T
    if b is not None:
        y = y + b
    h, wd = x.shape[1], x.shape[2]
    return y.reshape(h, wd, cout).transpose(2, 0, 1)


def conv2d(x, w, b=None):
    """2-D convolution (cross-correlation), stride 1, zero-padded to same size.

    x: (C_in, H, W) real; w: (C_out, C_in, kh, kw) with odd kh, kw; b: (C_out,).
    """
    if not _any_var(x, w, b if b is not None else 0.0):
        return _conv2d_value(np.asarray(x), np.asarray(w), None if b is None else np.asarray(b))
    x = _wrap(x)
    w = _wrap(w)
    b = _wrap(b) if b is not None else None
    xv, wv = x.value, w.value
    bv = None if b is None else b.value
    cout, cin, kh, kw = wv.shape
    ph, pw = kh // 2, kw // 2
    out_val = _conv2d_value(xv, wv, bv)
    parents = (x, w) if b is None else (x, w, b)

    def _bw(g):
        gm = g.transpose(1, 2, 0).reshape(-1, cout)  # (H*W, C_out)
        if w.requires:
            xp = np.pad(xv, ((0, 0), (ph, ph), (pw, pw)))
            cols = _im2col(xp, kh, kw)  # recomputed: cheaper than keeping it live
            _accum(w, (gm.T @ cols).reshape(wv.shape))
        if b is not None and b.requires:
            _accum(b, gm.sum(axis=0))
        if x.requires:
            wt = wv[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
            _accum(x, _conv2d_value(g, np.ascontiguousarray(wt)))

    return _make(out_val, parents, _bw, "conv2d")


def _box_valid(x, k):
    # sum over every k x k window (valid), via integral image
    s = np.cumsum(np.cumsum(x, axis=0), axis=1)
    s = np.pad(s, ((1, 0), (1, 0)))
    return s[k:, k:] - s[:-k, k:] - s[k:, :-k] + s[:-k, :-k]


def window_sum(x, k):
    """Sum of x over all k x k windows, unit stride, valid positions only."""
    if not _any_var(x):
        return _box_valid(np.asarray(x), k)
    xv = x.value
    if xv.ndim != 2:
        raise ValueError("window_sum expects a 2-D array")

    def _bw(g):
        # adjoint of valid box-sum = full convolution with a ones kernel
        _accum(x, _box_valid(np.pad(g, k - 1), k))

    return _make(_box_valid(xv, k), (x,), _bw, "window_sum")


def straight_through(p, hard_value):
    """Binarized forward value with gradients passed through to ``p``.

    The backward pass treats the binarization as if it were the underlying
    probability map, i.e. dL/dU is forwarded unchanged as dL/dP.
    """
    hard = np.asarray(hard_value, dtype=np.float64)
    if not _any_var(p):
        return hard

    def _bw(g):
        _accum(p, _fit(g, p.value))

    return _make(hard, (p,), _bw, "straight_through")


def stop_gradient(a):
    return constant(val(a))
