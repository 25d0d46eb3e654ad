"""Reverse-mode automatic differentiation on numpy arrays.

A small tape engine sized for this project: dense float64 tensors, the op
set needed by the recurrent generators, critics and losses, and fused GRU
kernels for the hot training path.  The graph is rebuilt on every forward
pass; gradients accumulate into plain numpy arrays.
"""

from __future__ import annotations

import numpy as np

DTYPE = np.float64

_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction (inference mode)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_array(value) -> np.ndarray:
    """Float arrays keep their precision; everything else becomes float64."""
    if isinstance(value, np.ndarray) and value.dtype in (np.float64, np.float32):
        return value
    return np.asarray(value, dtype=DTYPE)


class Tensor:
    """A numpy array plus the tape node that produced it."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_array(data)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

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
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, grad={self.requires_grad})"

    # -- graph traversal -------------------------------------------------

    def backward(self, grad=None):
        """Accumulate gradients of this (scalar) tensor into leaf .grad."""
        if grad is None:
            if self.data.ndim != 0 and self.data.size != 1:
                raise ValueError("backward() without an explicit gradient "
                                 "requires a scalar tensor")
            grad = np.ones_like(self.data)
        grad = _as_array(grad)

        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if id(node) in seen:
                continue
            if done:
                seen.add(id(node))
                order.append(node)
                continue
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))

        grads = {id(self): grad}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                if node.grad is None:
                    node.grad = g.copy()
                else:
                    node.grad += g
                continue
            parent_grads = node._backward(g)
            for parent, pg in zip(node._parents, parent_grads):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- operator sugar ---------------------------------------------------

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

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __getitem__(self, key):
        return getitem(self, key)

    @property
    def T(self):
        return transpose(self)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def parameter(data) -> Tensor:
    if isinstance(data, np.ndarray) and data.dtype in (np.float64, np.float32):
        data = data.copy()
    else:
        data = np.array(data, dtype=DTYPE)
    return Tensor(data, requires_grad=True)


def _node(data, parents, backward) -> Tensor:
    if _grad_enabled and any(p.requires_grad for p in parents):
        out = Tensor(data, requires_grad=True)
        out._parents = tuple(parents)
        out._backward = backward
        return out
    return Tensor(data)


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum grad over the axes numpy broadcasting introduced."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- primitive ops ---------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.data.shape),
                            _unbroadcast(g, b.data.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.data.shape),
                            _unbroadcast(-g, b.data.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.data.shape),
                            _unbroadcast(g * a.data, b.data.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data / b.data, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.data.shape),
                            _unbroadcast(-g * a.data / (b.data * b.data),
                                         b.data.shape)))


def neg(a):
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul supports 2-D operands only")
    return _node(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def bmatmul(a, b):
    """Batched matmul over a leading group axis: (G,m,k) @ (G,k,n)."""
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.transpose(0, 2, 1),
                            a.data.transpose(0, 2, 1) @ g))


def transpose(a):
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ValueError("transpose supports 2-D tensors only")
    return _node(a.data.T, (a,), lambda g: (g.T,))


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid_inplace(x: np.ndarray) -> np.ndarray:
    """sigmoid(x) computed as 0.5 * tanh(x / 2) + 0.5, overwriting x."""
    x *= 0.5
    np.tanh(x, out=x)
    x *= 0.5
    x += 0.5
    return x


def sigmoid(a):
    a = as_tensor(a)
    out = _sigmoid_inplace(a.data.copy())
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a):
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _node(out, (a,), lambda g: (g * 0.5 / out,))


def square(a):
    a = as_tensor(a)
    return _node(a.data * a.data, (a,), lambda g: (g * 2.0 * a.data,))


def power(a, exponent):
    a = as_tensor(a)
    e = float(exponent)
    out = a.data ** e
    return _node(out, (a,), lambda g: (g * e * a.data ** (e - 1.0),))


def tensor_sum(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _node(out, (a,), backward)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    count = a.data.size if axis is None else np.prod(
        [a.data.shape[i] for i in (axis if isinstance(axis, tuple) else (axis,))])
    return tensor_sum(a, axis=axis, keepdims=keepdims) * (1.0 / float(count))


def getitem(a, key):
    a = as_tensor(a)
    out = a.data[key]

    def backward(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, key, g)
        return (buf,)

    return _node(out, (a,), backward)


def reshape(a, shape):
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,),
                 lambda g: (g.reshape(a.data.shape),))


def permute(a, axes):
    a = as_tensor(a)
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    return _node(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                 lambda g: (g.transpose(inverse),))


def btranspose(a):
    """Swap the last two axes of a stacked (G, m, n) tensor."""
    a = as_tensor(a)
    return _node(np.ascontiguousarray(a.data.transpose(0, 2, 1)), (a,),
                 lambda g: (g.transpose(0, 2, 1),))


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(data, tensors, backward)


def affine(x, w, b):
    """x @ w + b for 2-D x; the workhorse of every feedforward layer."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    out = x.data @ w.data + b.data
    return _node(out, (x, w, b),
                 lambda g: (g @ w.data.T, x.data.T @ g, g.sum(axis=0)))


def baffine(x, w, b):
    """Batched affine over a group axis: (G,B,F) @ (G,F,W) + (G,1,W)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    out = x.data @ w.data + b.data
    return _node(out, (x, w, b),
                 lambda g: (g @ w.data.transpose(0, 2, 1),
                            x.data.transpose(0, 2, 1) @ g,
                            g.sum(axis=1, keepdims=True)))


# -- fused GRU kernels -------------------------------------------------------
#
# Both kernels run G independent recurrences in lock step (one per kinematic
# chain); parameters carry a leading group axis.  Gate layout along the last
# axis of wx / b is [reset | update | candidate]; wh[..., :2H] acts on h and
# wh[..., 2H:] on (reset * h), following the original GRU formulation:
#
#   r = sigmoid(x Wxr + h Whr + br)
#   u = sigmoid(x Wxu + h Whu + bu)
#   c = tanh(x Wxc + (r * h) Whc + bc)
#   h' = (1 - u) * h + u * c
#
# Loops use preallocated (T, G, B, *) workspaces and in-place ufuncs; weight
# gradients are deferred to single batched matmuls after the BPTT loop.
# Groups with fewer input features than the padded width rely on zero
# padding: zero input lanes and zero-initialised padding rows/columns
# receive exactly-zero gradients, so padding is self-preserving.


def _gru_step_forward(gx, t, Hs, RU, C, RH, wh_rz, wh_c, tmp):
    """One forward step; reads Hs[t] and gate inputs gx, writes Hs[t+1]."""
    H = Hs.shape[-1]
    h = Hs[t]
    ru = RU[t]
    np.matmul(h, wh_rz, out=ru)
    ru += gx[..., :2 * H]
    _sigmoid_inplace(ru)
    rh = RH[t]
    np.multiply(ru[..., :H], h, out=rh)
    c = C[t]
    np.matmul(rh, wh_c, out=c)
    c += gx[..., 2 * H:]
    np.tanh(c, out=c)
    # h' = h + u * (c - h)
    np.subtract(c, h, out=tmp)
    tmp *= ru[..., H:]
    np.add(h, tmp, out=Hs[t + 1])


def _gru_step_backward(dh, t, Hs, RU, C, wh_rz_T, wh_c_T, dG, buf):
    """One BPTT step; consumes dh for Hs[t+1], returns dh for Hs[t].

    Gate pre-activation gradients are written into dG[t]; buf is scratch.
    """
    H = dh.shape[-1]
    h_prev = Hs[t]
    r = RU[t][..., :H]
    u = RU[t][..., H:]
    c = C[t]
    dr_pre = dG[t][..., :H]
    du_pre = dG[t][..., H:2 * H]
    dc_pre = dG[t][..., 2 * H:]

    # du = dh * (c - h);  dc = dh * u;  dh_prev = dh - dc
    np.subtract(c, h_prev, out=buf)
    np.multiply(dh, buf, out=du_pre)          # du (pre-squash for now)
    np.multiply(dh, u, out=dc_pre)            # dc
    dh_prev = dh
    dh_prev -= dc_pre
    # through the candidate tanh: dc_pre = dc * (1 - c^2)
    np.multiply(c, c, out=buf)
    np.subtract(1.0, buf, out=buf)
    dc_pre *= buf
    # candidate path: drh = dc_pre @ whc^T
    drh = dc_pre @ wh_c_T
    np.multiply(drh, h_prev, out=dr_pre)      # dr
    drh *= r
    dh_prev += drh
    # through the gate sigmoids: dg = d * s * (1 - s)
    np.subtract(1.0, r, out=buf)
    buf *= r
    dr_pre *= buf
    np.subtract(1.0, u, out=buf)
    buf *= u
    du_pre *= buf
    dh_prev += dG[t][..., :2 * H] @ wh_rz_T
    return dh_prev


def _group_flat(arr):
    """(T, G, B, F) -> contiguous (G, B*T, F) with (b, t) fastest on t."""
    T, G, B, F = arr.shape
    return np.ascontiguousarray(arr.transpose(1, 2, 0, 3)).reshape(G, B * T, F)


def gru_final_state(x_seq, h0, wx, wh, b):
    """Run G GRUs over (G, B, T, d) inputs; returns final states (G, B, H).

    Input projections for the whole sequence are fused into one batched
    matmul; the recurrence is a hand-written kernel with its own
    backward-through-time pass.
    """
    x_seq, h0, wx, wh, b = map(as_tensor, (x_seq, h0, wx, wh, b))
    X = x_seq.data
    G, B, T, d = X.shape
    H = wh.data.shape[1]
    GX = (X.reshape(G, B * T, d) @ wx.data + b.data).reshape(G, B, T, 3 * H)

    dt = GX.dtype
    Hs = np.empty((T + 1, G, B, H), dtype=dt)
    RU = np.empty((T, G, B, 2 * H), dtype=dt)
    C = np.empty((T, G, B, H), dtype=dt)
    RH = np.empty((T, G, B, H), dtype=dt)
    Hs[0] = h0.data
    tmp = np.empty((G, B, H), dtype=dt)
    wh_rz = np.ascontiguousarray(wh.data[:, :, :2 * H])
    wh_c = np.ascontiguousarray(wh.data[:, :, 2 * H:])
    for t in range(T):
        _gru_step_forward(GX[:, :, t], t, Hs, RU, C, RH, wh_rz, wh_c, tmp)

    def backward(g):
        wh_rz_T = wh_rz.transpose(0, 2, 1).copy()
        wh_c_T = wh_c.transpose(0, 2, 1).copy()
        dG = np.empty((T, G, B, 3 * H), dtype=dt)
        buf = np.empty((G, B, H), dtype=dt)
        dh = g.astype(dt, copy=True)
        for t in range(T - 1, -1, -1):
            dh = _gru_step_backward(dh, t, Hs, RU, C, wh_rz_T, wh_c_T, dG, buf)
        dGf = _group_flat(dG)
        Hf = _group_flat(Hs[:T])
        RHf = _group_flat(RH)
        dwh = np.empty_like(wh.data)
        np.matmul(Hf.transpose(0, 2, 1), dGf[:, :, :2 * H],
                  out=dwh[:, :, :2 * H])
        np.matmul(RHf.transpose(0, 2, 1), dGf[:, :, 2 * H:],
                  out=dwh[:, :, 2 * H:])
        Xf = X.reshape(G, B * T, d)
        dGbt = dGf  # (b, t) ordering matches Xf
        dwx = Xf.transpose(0, 2, 1) @ dGbt
        db = dGbt.sum(axis=1, keepdims=True)
        dx = None
        if x_seq.requires_grad:
            dx = (dGbt @ wx.data.transpose(0, 2, 1)).reshape(G, B, T, d)
        return (dx, dh, dwx, dwh, db)

    return _node(Hs[-1].copy(), (x_seq, h0, wx, wh, b), backward)


def gru_decode(seed, h0, wx, wh, b, wo, bo, n_steps):
    """Autoregressive rollout of G GRUs with residual output frames.

    Step k consumes the previous output frame (the seed for k = 0), updates
    the hidden state, and emits ``frame_k = input_k + h_k @ wo + bo``.
    Returns the (G, B, T, d) stack of frames.
    """
    seed, h0, wx, wh, b, wo, bo = map(as_tensor, (seed, h0, wx, wh, b, wo, bo))
    G, B, d = seed.data.shape
    H = wh.data.shape[1]
    T = int(n_steps)
    wh_rz = np.ascontiguousarray(wh.data[:, :, :2 * H])
    wh_c = np.ascontiguousarray(wh.data[:, :, 2 * H:])

    dt = np.result_type(seed.data, wh.data)
    Hs = np.empty((T + 1, G, B, H), dtype=dt)
    RU = np.empty((T, G, B, 2 * H), dtype=dt)
    C = np.empty((T, G, B, H), dtype=dt)
    RH = np.empty((T, G, B, H), dtype=dt)
    frames = np.empty((T, G, B, d), dtype=dt)
    Hs[0] = h0.data
    tmp = np.empty((G, B, H), dtype=dt)
    inp = seed.data
    for t in range(T):
        gx = inp @ wx.data
        gx += b.data
        _gru_step_forward(gx, t, Hs, RU, C, RH, wh_rz, wh_c, tmp)
        fr = frames[t]
        np.matmul(Hs[t + 1], wo.data, out=fr)
        fr += bo.data
        fr += inp
        inp = fr

    def backward(g):
        gT = g.transpose(2, 0, 1, 3)  # (T, G, B, d) view
        wh_rz_T = wh_rz.transpose(0, 2, 1).copy()
        wh_c_T = wh_c.transpose(0, 2, 1).copy()
        wo_T = wo.data.transpose(0, 2, 1).copy()
        wx_T = wx.data.transpose(0, 2, 1).copy()
        dG = np.empty((T, G, B, 3 * H), dtype=dt)
        dF = np.empty((T, G, B, d), dtype=dt)
        buf = np.empty((G, B, H), dtype=dt)
        dh_carry = np.zeros((G, B, H), dtype=dt)
        dinp_next = np.zeros((G, B, d), dtype=dt)
        for t in range(T - 1, -1, -1):
            dframe = dF[t]
            np.add(gT[t], dinp_next, out=dframe)
            dh = dframe @ wo_T
            dh += dh_carry
            dh_carry = _gru_step_backward(dh, t, Hs, RU, C,
                                          wh_rz_T, wh_c_T, dG, buf)
            dinp_next = dframe + dG[t] @ wx_T
        dGf = _group_flat(dG)
        Hf = _group_flat(Hs[:T])
        RHf = _group_flat(RH)
        dFf = _group_flat(dF)
        dwh = np.empty_like(wh.data)
        np.matmul(Hf.transpose(0, 2, 1), dGf[:, :, :2 * H],
                  out=dwh[:, :, :2 * H])
        np.matmul(RHf.transpose(0, 2, 1), dGf[:, :, 2 * H:],
                  out=dwh[:, :, 2 * H:])
        inps = np.concatenate([seed.data[None], frames[:-1]], axis=0)
        inpf = _group_flat(inps)
        dwx = inpf.transpose(0, 2, 1) @ dGf
        db = dGf.sum(axis=1, keepdims=True)
        Hnf = _group_flat(Hs[1:])
        dwo = Hnf.transpose(0, 2, 1) @ dFf
        dbo = dFf.sum(axis=1, keepdims=True)
        return (dinp_next, dh_carry, dwx, dwh, db, dwo, dbo)

    out = np.ascontiguousarray(frames.transpose(1, 2, 0, 3))
    return _node(out, (seed, h0, wx, wh, b, wo, bo), backward)


# -- numeric gradient checking ----------------------------------------------

def numeric_gradient(func, param: Tensor, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar func() w.r.t. one parameter."""
    grad = np.zeros_like(param.data)
    flat = param.data.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = float(func().data)
        flat[i] = orig - step
        lo = float(func().data)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def check_gradients(func, params, step: float = 1e-5,
                    rtol: float = 1e-4, atol: float = 1e-7) -> float:
    """Compare tape gradients of scalar func() against finite differences.

    Fails if any entry violates |analytic - numeric| > atol + rtol * scale.
    Returns the worst relative error over all parameters.
    """
    for p in params:
        p.zero_grad()
    out = func()
    out.backward()
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_gradient(func, p, step)
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        err = np.abs(analytic - numeric)
        rel = err / np.maximum(scale, atol / rtol)
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
        if np.any(err > atol + rtol * scale):
            idx = np.unravel_index(np.argmax(err - rtol * scale), err.shape)
            raise AssertionError(
                f"gradient mismatch at {idx}: analytic={analytic[idx]:.10g} "
                f"numeric={numeric[idx]:.10g}")
    return worst
