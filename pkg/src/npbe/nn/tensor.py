"""Dense tensors with tape-free reverse-mode differentiation.

Each op returns a new :class:`Tensor` that remembers its parents and a
closure accumulating gradients into them.  :func:`backward` orders the graph
reachable from a scalar loss topologically and runs the closures in reverse.

Broadcasting is deliberately narrow: ``add`` accepts equal shapes or a
trailing bias vector; anything else goes through :func:`expand`.
"""

from __future__ import annotations

from typing import Callable, NamedTuple, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "parents", "backward_fn", "name")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        parents: Sequence["Tensor"] = (),
        backward_fn: Callable[[np.ndarray], None] | None = None,
        name: str | None = None,
    ):
        if isinstance(data, (np.ndarray, np.generic)):
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g: np.ndarray):
        # gradients are never updated in place, so sharing ``g`` is safe
        self.grad = g if self.grad is None else self.grad + g

    def __repr__(self):
        label = f" {self.name}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype})"

    # operator sugar for the common cases
    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data: np.ndarray, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name)


def const(data, dtype=None) -> Tensor:
    arr = np.asarray(data, dtype=dtype or DEFAULT_DTYPE)
    return Tensor(arr)


def _node(data: np.ndarray, parents: Sequence[Tensor], fn: Callable[[np.ndarray], None]) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, fn)
    return Tensor(data)


def _shape_error(op: str, *shapes) -> ShapeError:
    return ShapeError(f"{op}: incompatible shapes " + " and ".join(str(tuple(s)) for s in shapes))


# ----------------------------------------------------------------------------
# arithmetic


def add(a: Tensor, b: Tensor) -> Tensor:
    """a + b for equal shapes, or a trailing bias vector b of shape (a.shape[-1],)."""
    if a.shape == b.shape:
        bias = False
    elif b.data.ndim == 1 and a.shape[-1:] == b.shape:
        bias = True
    else:
        raise _shape_error("add", a.shape, b.shape)
    out = a.data + b.data

    def fn(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0) if bias else g)

    return _node(out, (a, b), fn)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise _shape_error("sub", a.shape, b.shape)

    def fn(g):
        if a.requires_grad:
            a.accumulate(g)
        if b.requires_grad:
            b.accumulate(-g)

    return _node(a.data - b.data, (a, b), fn)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise _shape_error("mul", a.shape, b.shape)

    def fn(g):
        if a.requires_grad:
            a.accumulate(g * b.data)
        if b.requires_grad:
            b.accumulate(g * a.data)

    return _node(a.data * b.data, (a, b), fn)


def scale(a: Tensor, k: float) -> Tensor:
    def fn(g):
        a.accumulate(g * k)

    return _node(a.data * a.dtype.type(k), (a,), fn)


def matmul(x: Tensor, w: Tensor) -> Tensor:
    """x (..., n) @ w (n, m) -> (..., m)."""
    if w.data.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise _shape_error("matmul", x.shape, w.shape)
    out = x.data @ w.data

    def fn(g):
        if x.requires_grad:
            x.accumulate(g @ w.data.T)
        if w.requires_grad:
            w.accumulate(x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1]))

    return _node(out, (x, w), fn)


def dense(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


# ----------------------------------------------------------------------------
# nonlinearities


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)

    def fn(g):
        x.accumulate(g * (1 - y * y))

    return _node(y, (x,), fn)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1 / (1 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)

    def fn(g):
        x.accumulate(g * y * (1 - y))

    return _node(y, (x,), fn)


def elem_max(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise maximum; ties send the gradient to ``a``."""
    if a.shape != b.shape:
        raise _shape_error("elem_max", a.shape, b.shape)
    take_a = a.data >= b.data

    def fn(g):
        if a.requires_grad:
            a.accumulate(np.where(take_a, g, 0))
        if b.requires_grad:
            b.accumulate(np.where(take_a, 0, g))

    return _node(np.where(take_a, a.data, b.data), (a, b), fn)


# ----------------------------------------------------------------------------
# shape plumbing


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not xs:
        raise ValueError("concat of nothing")
    nd = xs[0].data.ndim
    ax = axis % nd
    for t in xs[1:]:
        if t.data.ndim != nd or t.shape[:ax] + t.shape[ax + 1:] != xs[0].shape[:ax] + xs[0].shape[ax + 1:]:
            raise _shape_error("concat", xs[0].shape, t.shape)
    out = np.concatenate([t.data for t in xs], axis=ax)
    bounds = np.cumsum([0] + [t.shape[ax] for t in xs])

    def fn(g):
        for t, lo, hi in zip(xs, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                idx = [slice(None)] * nd
                idx[ax] = slice(lo, hi)
                t.accumulate(g[tuple(idx)])

    return _node(out, xs, fn)


def slice_last(x: Tensor, lo: int, hi: int) -> Tensor:
    """x[..., lo:hi]."""
    out = x.data[..., lo:hi]

    def fn(g):
        full = np.zeros_like(x.data)
        full[..., lo:hi] = g
        x.accumulate(full)

    return _node(out, (x,), fn)


def take(x: Tensor, index: int, axis: int) -> Tensor:
    """x indexed at a single position along ``axis`` (the axis is dropped)."""
    out = np.take(x.data, index, axis=axis)

    def fn(g):
        full = np.zeros_like(x.data)
        idx = [slice(None)] * x.data.ndim
        idx[axis] = index
        full[tuple(idx)] = g
        x.accumulate(full)

    return _node(out, (x,), fn)


def stack(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not xs:
        raise ValueError("stack of nothing")
    for t in xs[1:]:
        if t.shape != xs[0].shape:
            raise _shape_error("stack", xs[0].shape, t.shape)
    out = np.stack([t.data for t in xs], axis=axis)

    def fn(g):
        for i, t in enumerate(xs):
            if t.requires_grad:
                t.accumulate(np.take(g, i, axis=axis))

    return _node(out, xs, fn)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def fn(g):
        x.accumulate(g.reshape(x.shape))

    return _node(out, (x,), fn)


def expand(x: Tensor, axis: int, n: int) -> Tensor:
    """Insert ``axis`` and repeat ``x`` ``n`` times along it."""
    out = np.repeat(np.expand_dims(x.data, axis), n, axis=axis)

    def fn(g):
        x.accumulate(g.sum(axis=axis))

    return _node(out, (x,), fn)


def embedding(ids: np.ndarray, table: Tensor) -> Tensor:
    """Rows of ``table`` (V, E) gathered by integer ``ids`` of any shape."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range [0, {table.shape[0]})")
    out = table.data[ids]

    def fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        table.accumulate(full)

    return _node(out, (table,), fn)


# ----------------------------------------------------------------------------
# reductions and distributions


def sum_all(x: Tensor) -> Tensor:
    def fn(g):
        x.accumulate(np.broadcast_to(g, x.shape).astype(x.dtype))

    return _node(np.asarray(x.data.sum(), dtype=x.dtype), (x,), fn)


def mean_all(x: Tensor) -> Tensor:
    return scale(sum_all(x), 1.0 / x.data.size)


def _masked(z: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return z
    return np.where(mask, z, -np.inf)


def softmax_np(z: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    z = _masked(z, mask)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_np(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(x: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis; ``mask`` (bool, same shape) excludes entries."""
    if mask is not None and mask.shape != x.shape:
        raise _shape_error("softmax mask", x.shape, mask.shape)
    y = softmax_np(x.data, mask)

    def fn(g):
        x.accumulate(y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _node(y, (x,), fn)


def log_softmax(x: Tensor) -> Tensor:
    y = log_softmax_np(x.data)
    p = np.exp(y)

    def fn(g):
        x.accumulate(g - p * g.sum(axis=-1, keepdims=True))

    return _node(y, (x,), fn)


def nll(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Per-row negative log-likelihood of integer ``targets`` under softmax(logits).

    logits (B, K), targets (B,) -> (B,).  Fused log-softmax for stability.
    """
    targets = np.asarray(targets)
    b, k = logits.shape
    if targets.shape != (b,):
        raise _shape_error("nll", logits.shape, targets.shape)
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise IndexError(f"target id out of range [0, {k})")
    lp = log_softmax_np(logits.data)
    rows = np.arange(b)
    out = -lp[rows, targets]

    def fn(g):
        d = np.exp(lp) * g[:, None]
        d[rows, targets] -= g
        logits.accumulate(d)

    return _node(out, (logits,), fn)


def weighted_sum(weights: Tensor, values: Tensor) -> Tensor:
    """sum_i weights[b, i] * values[b, i, :] -> (B, D)."""
    if weights.data.ndim != 2 or values.data.ndim != 3 or weights.shape != values.shape[:2]:
        raise _shape_error("weighted_sum", weights.shape, values.shape)
    out = np.einsum("bl,bld->bd", weights.data, values.data)

    def fn(g):
        if weights.requires_grad:
            weights.accumulate(np.einsum("bd,bld->bl", g, values.data))
        if values.requires_grad:
            values.accumulate(weights.data[:, :, None] * g[:, None, :])

    return _node(out, (weights, values), fn)


def add_gaussian_noise(x: Tensor, sigma: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """x + N(0, sigma^2) noise in training mode; identity otherwise."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if not training or sigma == 0 or rng is None:
        return x
    noise = rng.normal(0.0, sigma, size=x.shape).astype(x.dtype)

    def fn(g):
        x.accumulate(g)

    return _node(x.data + noise, (x,), fn)


def blend(mask: np.ndarray, new: Tensor, old: Tensor) -> Tensor:
    """mask * new + (1 - mask) * old with a constant (B, 1) mask."""
    if new.shape != old.shape:
        raise _shape_error("blend", new.shape, old.shape)
    m = mask.astype(new.dtype)

    def fn(g):
        if new.requires_grad:
            new.accumulate(g * m)
        if old.requires_grad:
            old.accumulate(g * (1 - m))

    return _node(m * new.data + (1 - m) * old.data, (new, old), fn)


# ----------------------------------------------------------------------------
# recurrent cell


class LstmState(NamedTuple):
    h: Tensor
    c: Tensor


def zero_state(batch: int, hidden: int, dtype=DEFAULT_DTYPE) -> LstmState:
    z = np.zeros((batch, hidden), dtype=dtype)
    return LstmState(Tensor(z), Tensor(z))


def lstm_cell(
    x: Tensor, h: Tensor, c: Tensor, w: Tensor, b: Tensor, mask: np.ndarray | None = None
) -> LstmState:
    """One LSTM step, gates ordered (input, forget, candidate, output).

    ``w`` is (In + H, 4H), ``b`` is (4H,).  Rows with mask 0 carry ``h`` and
    ``c`` through unchanged.  Returns (h_new, c_new).
    """
    bsz, n_in = x.shape
    hid = h.shape[1]
    if h.shape != (bsz, hid) or c.shape != (bsz, hid) or w.shape != (n_in + hid, 4 * hid) or b.shape != (4 * hid,):
        raise _shape_error("lstm_cell", x.shape, h.shape, c.shape, w.shape, b.shape)
    xh = np.concatenate([x.data, h.data], axis=1)
    z = xh @ w.data + b.data
    i = _sigmoid(z[:, :hid])
    f = _sigmoid(z[:, hid:2 * hid])
    gg = np.tanh(z[:, 2 * hid:3 * hid])
    o = _sigmoid(z[:, 3 * hid:])
    c_new = f * c.data + i * gg
    tc = np.tanh(c_new)
    h_new = o * tc
    if mask is not None:
        m = mask.astype(x.dtype).reshape(bsz, 1)
        h_out = m * h_new + (1 - m) * h.data
        c_out = m * c_new + (1 - m) * c.data
    else:
        m = None
        h_out, c_out = h_new, c_new
    packed = np.concatenate([h_out, c_out], axis=1)

    def fn(g):
        gh = g[:, :hid]
        gc_out = g[:, hid:]
        if m is not None:
            gh_new, gc_new = gh * m, gc_out * m
            gh_carry, gc_carry = gh * (1 - m), gc_out * (1 - m)
        else:
            gh_new, gc_new = gh, gc_out
            gh_carry = gc_carry = None
        do = gh_new * tc
        dc = gc_new + gh_new * o * (1 - tc * tc)
        di = dc * gg
        df = dc * c.data
        dg = dc * i
        dz = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - gg * gg), do * o * (1 - o)], axis=1
        )
        if w.requires_grad:
            w.accumulate(xh.T @ dz)
        if b.requires_grad:
            b.accumulate(dz.sum(axis=0))
        dxh = dz @ w.data.T
        if x.requires_grad:
            x.accumulate(dxh[:, :n_in])
        if h.requires_grad:
            dh = dxh[:, n_in:]
            h.accumulate(dh if gh_carry is None else dh + gh_carry)
        if c.requires_grad:
            dcp = dc * f
            c.accumulate(dcp if gc_carry is None else dcp + gc_carry)

    node = _node(packed, (x, h, c, w, b), fn)
    return LstmState(slice_last(node, 0, hid), slice_last(node, hid, 2 * hid))


def lstm_sequence(x: Tensor, w: Tensor, b: Tensor, mask: np.ndarray, reverse: bool = False) -> Tensor:
    """LSTM over a whole padded sequence, starting from a zero state.

    x (B, L, In), mask (B, L) bool.  Returns the hidden state after every
    position, (B, L, H); at masked positions the previous state is carried,
    so for a left-to-right pass position L-1 holds each row's final state and
    for a right-to-left pass position 0 does.  Equivalent to chaining
    :func:`lstm_cell` but with a single graph node and hand-written BPTT.
    """
    bsz, n, n_in = x.shape
    hid = w.shape[1] // 4
    if w.shape != (n_in + hid, 4 * hid) or b.shape != (4 * hid,) or mask.shape != (bsz, n):
        raise _shape_error("lstm_sequence", x.shape, w.shape, b.shape, mask.shape)
    dt = x.dtype
    wx, wh = w.data[:n_in], w.data[n_in:]
    xw = x.data @ wx + b.data
    order = range(n - 1, -1, -1) if reverse else range(n)
    m_all = mask.astype(dt)[:, :, None]
    h = np.zeros((bsz, hid), dtype=dt)
    c = np.zeros((bsz, hid), dtype=dt)
    out = np.empty((bsz, n, hid), dtype=dt)
    cache = {}
    for k in order:
        z = xw[:, k] + h @ wh
        i = _sigmoid(z[:, :hid])
        f = _sigmoid(z[:, hid:2 * hid])
        g = np.tanh(z[:, 2 * hid:3 * hid])
        o = _sigmoid(z[:, 3 * hid:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = m_all[:, k]
        cache[k] = (i, f, g, o, c, tc, h)
        h = m * h_new + (1 - m) * h
        c = m * c_new + (1 - m) * c
        out[:, k] = h

    def fn(G):
        dh_next = np.zeros((bsz, hid), dtype=dt)
        dc_next = np.zeros((bsz, hid), dtype=dt)
        dxw = np.empty((bsz, n, 4 * hid), dtype=dt)
        dwh = np.zeros_like(wh)
        for k in reversed(order):
            i, f, g, o, c_prev, tc, h_prev = cache[k]
            m = m_all[:, k]
            gh = G[:, k] + dh_next
            gc = dc_next
            gh_new = gh * m
            dc = gc * m + gh_new * o * (1 - tc * tc)
            dz = np.concatenate(
                [dc * g * i * (1 - i), dc * c_prev * f * (1 - f), dc * i * (1 - g * g), gh_new * tc * o * (1 - o)],
                axis=1,
            )
            dxw[:, k] = dz
            dwh += h_prev.T @ dz
            dh_next = dz @ wh.T + gh * (1 - m)
            dc_next = dc * f + gc * (1 - m)
        flat = dxw.reshape(-1, 4 * hid)
        if x.requires_grad:
            x.accumulate(dxw @ wx.T)
        if w.requires_grad:
            w.accumulate(np.concatenate([x.data.reshape(-1, n_in).T @ flat, dwh], axis=0))
        if b.requires_grad:
            b.accumulate(flat.sum(axis=0))

    return _node(out, (x, w, b), fn)


# ----------------------------------------------------------------------------
# differentiation


def _topo(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack_: list[tuple[Tensor, bool]] = [(root, False)]
    while stack_:
        t, done = stack_.pop()
        if done:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack_.append((t, True))
        for p in t.parents:
            if p.requires_grad and id(p) not in seen:
                stack_.append((p, False))
    return order


def backward(loss: Tensor, params: Sequence[Tensor] = ()) -> None:
    """Populate ``.grad`` on every tensor reachable from scalar ``loss``.

    Tensors in ``params`` are zeroed first, so parameters that do not
    contribute to the loss end with a zero gradient rather than None.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    for p in params:
        p.zero_grad()
    if not loss.requires_grad:
        return
    order = _topo(loss)
    for t in order:
        t.grad = None
    loss.grad = np.ones_like(loss.data)
    for t in reversed(order):
        if t.backward_fn is not None and t.grad is not None:
            t.backward_fn(t.grad)
