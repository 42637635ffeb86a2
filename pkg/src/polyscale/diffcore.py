"""Reverse-mode automatic differentiation over a small fixed op vocabulary.

Everything is float64 numpy.  A ``Tensor`` wraps a value plus closures that
accumulate vector-Jacobian products into its parents, so a forward pass builds
the tape and ``backward`` walks it once.  Ops: matmul, add, sub, mul, scale,
sigmoid, tanh, softmax, concat, mean, square, row lookup, a fused softmax
cross-entropy, and a fused LSTM step.  No broadcasting: operand shapes must
match exactly where elementwise semantics apply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np


class Tensor:
    """A tape node: value, optional gradient, and backward closures."""

    __slots__ = ("value", "grad", "parents", "vjps", "requires_grad")

    def __init__(self, value, parents=(), vjps=(), requires_grad=False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.vjps = vjps
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"


def constant(value) -> Tensor:
    return Tensor(value)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(root: Tensor) -> None:
    """Accumulate dL/dp into every reachable parameter, L being ``root``.

    ``root`` must be a scalar.  Intermediate gradients are freed as soon as
    they have been propagated; leaf gradients accumulate (callers zero them).
    """
    if root.value.shape != ():
        raise ValueError(f"backward root must be a scalar, got shape {root.value.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    root.grad = np.ones(())
    for node in reversed(order):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in zip(node.parents, node.vjps):
            if not parent.requires_grad:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.value)
            vjp(g, parent.grad)
        if node.parents:
            node.grad = None


def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value
    out = av @ bv
    if av.ndim == 1 and bv.ndim == 2:
        vjps = (
            lambda g, acc: np.add(acc, bv @ g, out=acc),
            lambda g, acc: np.add(acc, np.outer(av, g), out=acc),
        )
    elif av.ndim == 2 and bv.ndim == 1:
        vjps = (
            lambda g, acc: np.add(acc, np.outer(g, bv), out=acc),
            lambda g, acc: np.add(acc, av.T @ g, out=acc),
        )
    elif av.ndim == 2 and bv.ndim == 2:
        vjps = (
            lambda g, acc: np.add(acc, g @ bv.T, out=acc),
            lambda g, acc: np.add(acc, av.T @ g, out=acc),
        )
    elif av.ndim == 1 and bv.ndim == 1:
        vjps = (
            lambda g, acc: np.add(acc, g * bv, out=acc),
            lambda g, acc: np.add(acc, g * av, out=acc),
        )
    else:
        raise ValueError(f"matmul: unsupported ndim pair {av.ndim}, {bv.ndim}")
    return Tensor(out, (a, b), vjps)


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.value.shape != b.value.shape:
        raise ValueError(f"{op}: shape mismatch {a.value.shape} vs {b.value.shape}")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return Tensor(
        a.value + b.value,
        (a, b),
        (
            lambda g, acc: np.add(acc, g, out=acc),
            lambda g, acc: np.add(acc, g, out=acc),
        ),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return Tensor(
        a.value - b.value,
        (a, b),
        (
            lambda g, acc: np.add(acc, g, out=acc),
            lambda g, acc: np.subtract(acc, g, out=acc),
        ),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return Tensor(
        av * bv,
        (a, b),
        (
            lambda g, acc: np.add(acc, g * bv, out=acc),
            lambda g, acc: np.add(acc, g * av, out=acc),
        ),
    )


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return Tensor(c * a.value, (a,), (lambda g, acc: np.add(acc, c * g, out=acc),))


def square(a: Tensor) -> Tensor:
    av = a.value
    return Tensor(av * av, (a,), (lambda g, acc: np.add(acc, 2.0 * av * g, out=acc),))


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    # exp only ever sees non-positive arguments, so it cannot overflow
    out = 1.0 / (1.0 + np.exp(-np.abs(z)))
    return np.where(z >= 0, out, 1.0 - out)


def sigmoid(a: Tensor) -> Tensor:
    out = _stable_sigmoid(a.value)
    return Tensor(out, (a,), (lambda g, acc: np.add(acc, g * out * (1.0 - out), out=acc),))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return Tensor(out, (a,), (lambda g, acc: np.add(acc, g * (1.0 - out * out), out=acc),))


def softmax(a: Tensor) -> Tensor:
    av = a.value
    if av.ndim != 1:
        raise ValueError("softmax expects a 1-D tensor")
    z = av - av.max()
    e = np.exp(z)
    p = e / e.sum()

    def vjp(g, acc):
        np.add(acc, p * (g - np.dot(g, p)), out=acc)

    return Tensor(p, (a,), (vjp,))


def concat(parts: Sequence[Tensor]) -> Tensor:
    parts = list(parts)
    if not parts:
        raise ValueError("concat of no tensors")
    for p in parts:
        if p.value.ndim != 1:
            raise ValueError("concat expects 1-D tensors")
    out = np.concatenate([p.value for p in parts])
    vjps = []
    offset = 0
    for p in parts:
        n = p.value.shape[0]

        def vjp(g, acc, lo=offset, hi=offset + n):
            np.add(acc, g[lo:hi], out=acc)

        vjps.append(vjp)
        offset += n
    return Tensor(out, tuple(parts), tuple(vjps))


def mean(parts: Sequence[Tensor]) -> Tensor:
    """Elementwise mean of same-shaped tensors."""
    parts = list(parts)
    if not parts:
        raise ValueError("mean of no tensors")
    shape = parts[0].value.shape
    for p in parts:
        if p.value.shape != shape:
            raise ValueError("mean: shape mismatch")
    inv = 1.0 / len(parts)
    out = parts[0].value.copy()
    for p in parts[1:]:
        out += p.value
    out *= inv

    def vjp(g, acc):
        np.add(acc, inv * g, out=acc)

    return Tensor(out, tuple(parts), (vjp,) * len(parts))


def row(matrix: Tensor, index: int) -> Tensor:
    """Row lookup, the embedding-table access path."""
    if matrix.value.ndim != 2:
        raise ValueError("row expects a 2-D tensor")
    index = int(index)
    out = matrix.value[index].copy()

    def vjp(g, acc):
        acc[index] += g

    return Tensor(out, (matrix,), (vjp,))


def softmax_xent(logits: Tensor, gold: int) -> tuple[Tensor, Tensor]:
    """Softmax distribution plus cross-entropy against a gold index.

    The loss is computed via log-sum-exp and its backward is the closed form
    p - onehot, so both stay finite for any logit magnitude.
    """
    zv = logits.value
    if zv.ndim != 1:
        raise ValueError("softmax_xent expects 1-D logits")
    gold = int(gold)
    if not 0 <= gold < zv.shape[0]:
        raise ValueError(f"gold index {gold} out of range for {zv.shape[0]} classes")
    m = zv.max()
    e = np.exp(zv - m)
    total = e.sum()
    p = e / total

    def vjp_probs(g, acc):
        np.add(acc, p * (g - np.dot(g, p)), out=acc)

    probs = Tensor(p, (logits,), (vjp_probs,))
    loss_value = (m + math.log(total)) - zv[gold]

    def vjp_loss(g, acc):
        acc += g * p
        acc[gold] -= g

    loss = Tensor(loss_value, (logits,), (vjp_loss,))
    return probs, loss


def neglog_pick(probs: Tensor, gold: int) -> Tensor:
    """Cross-entropy straight from a probability vector: -log p[gold]."""
    pv = probs.value
    gold = int(gold)
    if not 0 <= gold < pv.shape[0]:
        raise ValueError(f"gold index {gold} out of range for {pv.shape[0]} classes")
    pg = pv[gold]
    if pg <= 0.0:
        raise ValueError("gold probability must be positive")

    def vjp(g, acc):
        acc[gold] -= g / pg

    return Tensor(-math.log(pg), (probs,), (vjp,))


class ParameterStore:
    """Named parameter leaves with persistent gradient slots."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(value, dtype=np.float64), requires_grad=True)
        t.grad = np.zeros_like(t.value)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.items())

    def __len__(self):
        return len(self._params)

    @property
    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for t in self._params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.value)
            else:
                t.grad.fill(0.0)

    def n_values(self) -> int:
        return sum(t.value.size for t in self._params.values())

    def grad_norm(self) -> float:
        total = 0.0
        for t in self._params.values():
            if t.grad is not None:
                total += float(np.sum(t.grad * t.grad))
        return math.sqrt(total)


@dataclass
class LstmParams:
    """One direction of an LSTM: a gate triple (Wx, Wh, b) per gate."""

    wx_i: Tensor
    wh_i: Tensor
    b_i: Tensor
    wx_f: Tensor
    wh_f: Tensor
    b_f: Tensor
    wx_o: Tensor
    wh_o: Tensor
    b_o: Tensor
    wx_c: Tensor
    wh_c: Tensor
    b_c: Tensor

    @property
    def hidden_dim(self) -> int:
        return self.b_i.value.shape[0]


INIT_SCALE = 0.08


def init_lstm_params(
    store: ParameterStore, prefix: str, input_dim: int, hidden_dim: int, rng: np.random.Generator
) -> LstmParams:
    """Uniform(-0.08, 0.08) initialization, forget-gate bias pinned to 1."""

    def u(shape):
        return rng.uniform(-INIT_SCALE, INIT_SCALE, size=shape)

    tensors = {}
    for gate in ("i", "f", "o", "c"):
        tensors[f"wx_{gate}"] = store.add(f"{prefix}.wx_{gate}", u((input_dim, hidden_dim)))
        tensors[f"wh_{gate}"] = store.add(f"{prefix}.wh_{gate}", u((hidden_dim, hidden_dim)))
        bias = np.ones(hidden_dim) if gate == "f" else u((hidden_dim,))
        tensors[f"b_{gate}"] = store.add(f"{prefix}.b_{gate}", bias)
    return LstmParams(**tensors)


def _gate_cat(p: LstmParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gate weights side by side, in i/f/o/c order, for one batched matmul."""
    wx = np.concatenate((p.wx_i.value, p.wx_f.value, p.wx_o.value, p.wx_c.value), axis=1)
    wh = np.concatenate((p.wh_i.value, p.wh_f.value, p.wh_o.value, p.wh_c.value), axis=1)
    b = np.concatenate((p.b_i.value, p.b_f.value, p.b_o.value, p.b_c.value))
    return wx, wh, b


def lstm_step(x: Tensor, h: Tensor, c: Tensor, p: LstmParams) -> tuple[Tensor, Tensor]:
    """One LSTM step, fused into a single tape node.

    All four gate pre-activations come from one batched matmul against the
    concatenated weights; fusing collapses ~28 tape nodes per step into 3,
    and the encoders spend most of their time here.  The node's value
    stacks h_next over c_next; callers get row views of it.
    """
    return _lstm_step_cat(x, h, c, p, *_gate_cat(p))


def _lstm_step_cat(
    x: Tensor, h: Tensor, c: Tensor, p: LstmParams,
    wx: np.ndarray, wh: np.ndarray, b: np.ndarray,
) -> tuple[Tensor, Tensor]:
    # Shared backward intermediates are memoized per backward pass; the tape
    # is rebuilt for every forward pass, so the cache never goes stale.
    xv, hv, cv = x.value, h.value, c.value
    n = p.hidden_dim
    z = xv @ wx + hv @ wh + b
    gates = _stable_sigmoid(z[: 3 * n])
    i, f, o = gates[:n], gates[n : 2 * n], gates[2 * n :]
    g = np.tanh(z[3 * n :])
    c_next = f * cv + i * g
    tc = np.tanh(c_next)
    out = np.stack((o * tc, c_next))

    cache: list[tuple] = []

    def deltas(grad):
        if not cache:
            dc = grad[0] * o * (1.0 - tc * tc) + grad[1]
            dz = np.empty_like(z)
            dz[:n] = dc * g * i * (1.0 - i)
            dz[n : 2 * n] = dc * cv * f * (1.0 - f)
            dz[2 * n : 3 * n] = grad[0] * tc * o * (1.0 - o)
            dz[3 * n :] = dc * i * (1.0 - g * g)
            cache.append((dc, dz))
        return cache[0]

    def vjp_x(grad, acc):
        np.add(acc, wx @ deltas(grad)[1], out=acc)

    def vjp_h(grad, acc):
        np.add(acc, wh @ deltas(grad)[1], out=acc)

    def vjp_c(grad, acc):
        np.add(acc, deltas(grad)[0] * f, out=acc)

    def weight_vjp(vec, lo):
        def vjp(grad, acc):
            np.add(acc, np.outer(vec, deltas(grad)[1][lo : lo + n]), out=acc)
        return vjp

    def bias_vjp(lo):
        def vjp(grad, acc):
            np.add(acc, deltas(grad)[1][lo : lo + n], out=acc)
        return vjp

    node = Tensor(
        out,
        (x, h, c,
         p.wx_i, p.wh_i, p.b_i, p.wx_f, p.wh_f, p.b_f,
         p.wx_o, p.wh_o, p.b_o, p.wx_c, p.wh_c, p.b_c),
        (vjp_x, vjp_h, vjp_c,
         weight_vjp(xv, 0), weight_vjp(hv, 0), bias_vjp(0),
         weight_vjp(xv, n), weight_vjp(hv, n), bias_vjp(n),
         weight_vjp(xv, 2 * n), weight_vjp(hv, 2 * n), bias_vjp(2 * n),
         weight_vjp(xv, 3 * n), weight_vjp(hv, 3 * n), bias_vjp(3 * n)),
    )
    return row(node, 0), row(node, 1)


def lstm_encode(seq: Sequence[Tensor], params: LstmParams, reverse: bool = False) -> list[Tensor]:
    """Hidden states in input order; ``reverse`` runs the scan right to left."""
    if not seq:
        raise ValueError("cannot encode an empty sequence")
    hidden = params.hidden_dim
    gate_cat = _gate_cat(params)
    h = constant(np.zeros(hidden))
    c = constant(np.zeros(hidden))
    states: list[Tensor] = []
    indices = range(len(seq) - 1, -1, -1) if reverse else range(len(seq))
    for t in indices:
        h, c = _lstm_step_cat(seq[t], h, c, params, *gate_cat)
        states.append(h)
    if reverse:
        states.reverse()
    return states


def bilstm_encode(
    seq: Sequence[Tensor], forward: LstmParams, backward_params: LstmParams
) -> tuple[list[Tensor], Tensor]:
    """Per-step [fwd; bwd] states plus the final [last fwd; last bwd] state.

    The backward direction's "last" state is the one produced at the first
    input position, i.e. after it has consumed the whole sequence.
    """
    fwd = lstm_encode(seq, forward)
    bwd = lstm_encode(seq, backward_params, reverse=True)
    steps = [concat([f, b]) for f, b in zip(fwd, bwd)]
    final = concat([fwd[-1], bwd[0]])
    return steps, final


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return add(matmul(x, weight), bias)


class Adam:
    """Adam with global gradient-norm clipping, applied in place."""

    def __init__(self, store: ParameterStore, lr=1e-3, beta1=0.9, beta2=0.999,
                 eps=1e-8, clip_norm=5.0):
        self.store = store
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.clip_norm = clip_norm
        self.t = 0
        self._m = {name: np.zeros_like(t.value) for name, t in store}
        self._v = {name: np.zeros_like(t.value) for name, t in store}

    def step(self) -> None:
        self.t += 1
        norm = self.store.grad_norm()
        factor = 1.0
        if self.clip_norm is not None and norm > self.clip_norm:
            factor = self.clip_norm / norm
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, param in self.store:
            g = param.grad * factor
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            param.value -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def check_gradients(
    loss_fn: Callable[[], Tensor],
    store: ParameterStore,
    epsilon: float = 1e-4,
    names: Iterable[str] | None = None,
) -> float:
    """Max relative error between tape gradients and central differences.

    ``loss_fn`` must rebuild the tape from the store's current values on each
    call.  Relative error per coordinate is |ga - gn| / max(1e-8, |ga| + |gn|).
    """
    store.zero_grad()
    backward(loss_fn())
    analytic = {name: t.grad.copy() for name, t in store}
    worst = 0.0
    selected = list(names) if names is not None else store.names
    for name in selected:
        param = store[name]
        flat = param.value.reshape(-1)
        ga_flat = analytic[name].reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            f_plus = float(loss_fn().value)
            flat[j] = orig - epsilon
            f_minus = float(loss_fn().value)
            flat[j] = orig
            gn = (f_plus - f_minus) / (2.0 * epsilon)
            ga = ga_flat[j]
            rel = abs(ga - gn) / max(1e-8, abs(ga) + abs(gn))
            if rel > worst:
                worst = rel
    return worst
