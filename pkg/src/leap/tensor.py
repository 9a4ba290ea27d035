"""A small reverse-mode differentiation kernel on top of numpy.

Only the operations needed by the path aggregators and the edge learner are
provided. All arrays are float64. Every op records a closure that pushes the
output gradient into its inputs; ``Tensor.backward`` replays them in reverse
topological order.
"""

from __future__ import annotations

import contextlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from scipy.special import expit

ACTIVATIONS = ("sigmoid", "tanh", "relu", "identity")
CHECKPOINT_FORMAT = "leap-checkpoint"
CHECKPOINT_VERSION = 1

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable tape recording (frozen-parameter evaluation)."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._consumed = False

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> dict["Tensor", np.ndarray]:
        """Back-propagate from this scalar; returns ``{leaf: gradient}``.

        The tape is released afterwards, so a second call without a fresh
        forward pass raises.
        """
        if self._consumed:
            raise RuntimeError("backward already called on this graph; run a new forward pass")
        if self.data.size != 1:
            raise ValueError("backward needs a scalar output")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
                if id(p) not in seen:
                    stack.append((p, False))

        self.grad = np.ones_like(self.data)
        leaves: dict[Tensor, np.ndarray] = {}
        for node in reversed(order):
            if node._backward is not None:
                if node.grad is not None:
                    node._backward(node.grad)
                node._backward = None
                node._parents = ()
                node.grad = None
                node._consumed = True
            elif node.requires_grad:
                if node.grad is None:
                    node.grad = np.zeros_like(node.data)
                leaves[node] = node.grad
        self._consumed = True
        return leaves

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return getitem(self, key)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: Optional[str] = None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64, copy=True)
    else:
        t.grad += g


def _result(data: np.ndarray, parents: Sequence[Tensor], backward: Callable[[np.ndarray], None]) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced in forward pass")
    needs = _grad_enabled and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _result(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _result(a.data * b.data, (a, b), backward)


def sum_all(x: Tensor) -> Tensor:
    def backward(g):
        _accumulate(x, np.broadcast_to(g, x.shape))

    return _result(np.asarray(x.data.sum()), (x,), backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    def backward(g):
        _accumulate(x, g.reshape(x.shape))

    return _result(x.data.reshape(shape), (x,), backward)


def getitem(x: Tensor, key) -> Tensor:
    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, key, g)
        _accumulate(x, full)

    return _result(x.data[key], (x,), backward)


def take(table: Tensor, idx) -> Tensor:
    """Row lookup ``table[idx]``; gradients scatter-add back into the table."""
    idx = np.asarray(idx, dtype=np.int64)

    def backward(g):
        if not table.requires_grad:
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx.reshape(-1), g.reshape(-1, table.shape[-1]))

    return _result(table.data[idx], (table,), backward)


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    if not xs:
        raise ValueError("concat of an empty list")
    xs = [as_tensor(x) for x in xs]
    if len(xs) == 1:
        return xs[0]
    ax = axis % xs[0].ndim
    bounds = np.cumsum([x.shape[ax] for x in xs])[:-1]

    def backward(g):
        for x, part in zip(xs, np.split(g, bounds, axis=ax)):
            _accumulate(x, part)

    return _result(np.concatenate([x.data for x in xs], axis=ax), xs, backward)


def activate(x: Tensor, kind: str) -> Tensor:
    if kind == "identity":
        return x
    if kind == "sigmoid":
        y = expit(x.data)
        dy = lambda: y * (1.0 - y)
    elif kind == "tanh":
        y = np.tanh(x.data)
        dy = lambda: 1.0 - y * y
    elif kind == "relu":
        y = np.maximum(x.data, 0.0)
        dy = lambda: (x.data > 0.0).astype(np.float64)
    else:
        raise ValueError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")

    def backward(g):
        _accumulate(x, g * dy())

    return _result(y, (x,), backward)


def linear(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ W.T + b`` over the last axis of ``x``."""
    x = as_tensor(x)
    if x.shape[-1] != W.shape[1]:
        raise ValueError(f"shape mismatch: input width {x.shape[-1]} vs weight {W.shape}")
    if b is not None and b.shape != (W.shape[0],):
        raise ValueError(f"bias shape {b.shape} does not match weight {W.shape}")
    out = x.data @ W.data.T
    if b is not None:
        out = out + b.data
    parents = (x, W) if b is None else (x, W, b)

    def backward(g):
        if x.requires_grad:
            _accumulate(x, g @ W.data)
        g2 = g.reshape(-1, W.shape[0])
        if W.requires_grad:
            _accumulate(W, g2.T @ x.data.reshape(-1, W.shape[1]))
        if b is not None and b.requires_grad:
            _accumulate(b, g2.sum(axis=0))

    return _result(out, parents, backward)


def affine(x: Tensor, W: Tensor, b: Tensor, act: str = "identity") -> Tensor:
    return activate(linear(x, W, b), act)


def masked_pool(x: Tensor, axis: int, mode: str, mask: Optional[np.ndarray] = None) -> Tensor:
    """Max or mean over ``axis``; ``mask`` covers ``x.shape[:axis + 1]``.

    Slices with no unmasked entry yield zeros (and receive no gradient).
    Max routes the gradient to the first maximal entry.
    """
    ax = axis % x.ndim
    if mask is None:
        m = np.ones(x.shape[: ax + 1], dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        if m.shape != x.shape[: ax + 1]:
            raise ValueError(f"mask shape {m.shape} does not cover {x.shape[: ax + 1]}")
    m = m.reshape(m.shape + (1,) * (x.ndim - ax - 1))
    counts = m.sum(axis=ax)
    has_any = counts > 0
    if mode == "avg":
        denom = np.where(has_any, counts, 1).astype(np.float64)
        out = np.where(m, x.data, 0.0).sum(axis=ax) / denom
        out = out * np.broadcast_to(has_any, out.shape)

        def backward(g):
            share = np.expand_dims(g / denom, ax)
            _accumulate(x, np.where(m, share, 0.0))

    elif mode == "max":
        masked = np.where(m, x.data, -np.inf)
        arg = np.argmax(masked, axis=ax)
        arg_e = np.expand_dims(arg, ax)
        out = np.take_along_axis(x.data, arg_e, axis=ax).squeeze(ax)
        valid = np.broadcast_to(has_any, out.shape)
        out = np.where(valid, out, 0.0)

        def backward(g):
            full = np.zeros_like(x.data)
            np.put_along_axis(full, arg_e, np.expand_dims(np.where(valid, g, 0.0), ax), axis=ax)
            _accumulate(x, full)

    else:
        raise ValueError(f"unknown pooling mode {mode!r}")
    return _result(out, (x,), backward)


def pool_rows(M: Tensor, mode: str, mask: Optional[Sequence[bool]] = None) -> Tensor:
    """Column-wise pooling over the rows of a 2-D array."""
    if M.ndim != 2 or M.shape[0] < 1:
        raise ValueError("pool_rows needs a non-empty 2-D array")
    if mask is not None and not np.any(mask):
        raise ValueError("all rows are masked")
    return masked_pool(M, 0, mode, mask)


@dataclass
class LSTMParams:
    """Gate order in the packed matrices is input, forget, cell, output."""

    Wx: Tensor  # (d, 4H)
    Wh: Tensor  # (H, 4H)
    b: Tensor  # (4H,)

    @property
    def hidden(self) -> int:
        return self.Wh.shape[0]

    @property
    def input_width(self) -> int:
        return self.Wx.shape[0]

    def tensors(self) -> list[Tensor]:
        return [self.Wx, self.Wh, self.b]

    @classmethod
    def init(cls, d: int, hidden: int, rng: np.random.Generator, name: str = "lstm") -> "LSTMParams":
        b = np.zeros(4 * hidden)
        b[hidden : 2 * hidden] = 1.0
        return cls(
            parameter(glorot(rng, d, 4 * hidden, (d, 4 * hidden)), f"{name}.Wx"),
            parameter(glorot(rng, hidden, 4 * hidden, (hidden, 4 * hidden)), f"{name}.Wh"),
            parameter(b, f"{name}.b"),
        )


def lstm_sequence(X: Tensor, p: LSTMParams) -> Tensor:
    """Run an LSTM (zero initial state) over axis -2 of ``X``; returns every hidden state."""
    if X.ndim < 2 or X.shape[-2] < 1:
        raise ValueError("lstm_sequence needs at least one timestep")
    if X.shape[-1] != p.input_width:
        raise ValueError(f"input width {X.shape[-1]} does not match LSTM input {p.input_width}")
    lead, T, d = X.shape[:-2], X.shape[-2], X.shape[-1]
    H = p.hidden
    x2 = X.data.reshape(-1, T, d)
    B = x2.shape[0]
    Wh = p.Wh.data
    pre = x2 @ p.Wx.data + p.b.data  # (B, T, 4H)
    gates = np.empty((B, T, 4 * H))
    cs = np.empty((B, T + 1, H))
    hs = np.empty((B, T + 1, H))
    cs[:, 0] = 0.0
    hs[:, 0] = 0.0
    for t in range(T):
        z = pre[:, t] + hs[:, t] @ Wh
        gt = gates[:, t]
        gt[:, : 2 * H] = expit(z[:, : 2 * H])
        gt[:, 2 * H : 3 * H] = np.tanh(z[:, 2 * H : 3 * H])
        gt[:, 3 * H :] = expit(z[:, 3 * H :])
        cs[:, t + 1] = gt[:, H : 2 * H] * cs[:, t] + gt[:, :H] * gt[:, 2 * H : 3 * H]
        hs[:, t + 1] = gt[:, 3 * H :] * np.tanh(cs[:, t + 1])
    out = hs[:, 1:].reshape(lead + (T, H))

    def backward(g):
        dH = g.reshape(B, T, H)
        dZ = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in range(T - 1, -1, -1):
            gt = gates[:, t]
            i, f, c_hat, o = gt[:, :H], gt[:, H : 2 * H], gt[:, 2 * H : 3 * H], gt[:, 3 * H :]
            tc = np.tanh(cs[:, t + 1])
            dh = dH[:, t] + dh_next
            dc = dc_next + dh * o * (1.0 - tc * tc)
            dz = dZ[:, t]
            dz[:, :H] = dc * c_hat * i * (1.0 - i)
            dz[:, H : 2 * H] = dc * cs[:, t] * f * (1.0 - f)
            dz[:, 2 * H : 3 * H] = dc * i * (1.0 - c_hat * c_hat)
            dz[:, 3 * H :] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = dz @ Wh.T
        flat = dZ.reshape(-1, 4 * H)
        if X.requires_grad:
            _accumulate(X, (dZ @ p.Wx.data.T).reshape(X.shape))
        _accumulate(p.Wx, x2.reshape(-1, d).T @ flat)
        _accumulate(p.Wh, hs[:, :-1].reshape(-1, H).T @ flat)
        _accumulate(p.b, flat.sum(axis=0))

    return _result(out, (X, p.Wx, p.Wh, p.b), backward)


def conv1d_k2(X: Tensor, K: Tensor, b: Tensor, act: str = "identity", edge_features: Optional[Tensor] = None) -> Tensor:
    """Width-2 convolution along axis -2: row ``t`` sees ``X[t] | X[t+1] (| E[t])``."""
    if X.ndim < 2 or X.shape[-2] < 2:
        raise ValueError("conv1d_k2 needs at least two timesteps")
    parts = [getitem(X, (Ellipsis, slice(None, -1), slice(None))), getitem(X, (Ellipsis, slice(1, None), slice(None)))]
    if edge_features is not None:
        parts.append(as_tensor(edge_features))
    return affine(concat(parts, axis=-1), K, b, act)


def loss(pred: Tensor, target, kind: str, eps: float = 1e-12) -> Tensor:
    """Mean binary cross-entropy (``bce``) or mean squared error (``mse``)."""
    t = np.asarray(target, dtype=np.float64)
    if t.shape != pred.shape:
        raise ValueError(f"prediction shape {pred.shape} differs from target {t.shape}")
    n = max(t.size, 1)
    if kind == "bce":
        if np.any((pred.data < 0.0) | (pred.data > 1.0)):
            raise ValueError("bce predictions must lie in [0, 1]")
        if np.any((t != 0.0) & (t != 1.0)):
            raise ValueError("bce targets must be 0 or 1")
        p = np.clip(pred.data, eps, 1.0 - eps)
        value = -np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p))

        def backward(g):
            _accumulate(pred, g * (-(t / p) + (1.0 - t) / (1.0 - p)) / n)

    elif kind == "mse":
        diff = pred.data - t
        value = np.mean(diff * diff)

        def backward(g):
            _accumulate(pred, g * 2.0 * diff / n)

    else:
        raise ValueError(f"unknown loss {kind!r}")
    return _result(np.asarray(value), (pred,), backward)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[int, np.ndarray] = field(default_factory=dict)
    v: dict[int, np.ndarray] = field(default_factory=dict)


def adam_step(params: Sequence[Tensor], grads: Sequence[Optional[np.ndarray]], state: AdamState) -> None:
    """One bias-corrected Adam update, in place. Moments are keyed by parameter position."""
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for k, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        if k not in state.m:
            state.m[k] = np.zeros_like(p.data)
            state.v[k] = np.zeros_like(p.data)
        m, v = state.m[k], state.v[k]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p.data -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


class Adam:
    def __init__(self, params: Iterable[Tensor], lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)


class CheckpointError(ValueError):
    pass


def save_arrays(path, arrays: dict[str, np.ndarray], meta: Optional[dict] = None) -> None:
    """Versioned container of named float64 arrays plus a JSON header."""
    header = {"format": CHECKPOINT_FORMAT, "version": CHECKPOINT_VERSION, "meta": meta or {}}
    payload = {f"param/{k}": np.ascontiguousarray(v, dtype=np.float64) for k, v in arrays.items()}
    payload["__header__"] = np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **payload)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with np.load(path, allow_pickle=False) as z:
            header = json.loads(z["__header__"].tobytes().decode())
            arrays = {k[len("param/"):]: z[k] for k in z.files if k.startswith("param/")}
    except (zipfile.BadZipFile, EOFError, OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    if header.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{path} is not a leap checkpoint")
    if header.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"checkpoint version {header.get('version')} != supported {CHECKPOINT_VERSION}")
    return arrays, header["meta"]
