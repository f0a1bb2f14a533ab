"""A small reverse-mode tensor engine and the layers the models need.

Tensors wrap float64 numpy arrays. Every op records its parents and a
closure mapping the output gradient to parent gradients; ``backward`` walks
the tape in reverse topological order.
"""
from __future__ import annotations

import numpy as np

RELU = "relu"
IDENTITY = "identity"


class Tensor:
    def __init__(self, data, requires_grad=False, _parents=(), _grad_fn=None):
        self.data = np.asarray(data, dtype=float)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = _parents
        self._grad_fn = _grad_fn
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``.grad`` of every reachable leaf."""
        if self.data.size != 1:
            raise ValueError("backward() needs a scalar output")
        if self._backward_done:
            raise RuntimeError("backward() already ran on this graph; run a new forward pass")
        self._backward_done = True

        order, seen = [], set()
        stack = [(self, False)]
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

        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._grad_fn is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._grad_fn(g)):
                if pg is None or not p.requires_grad:
                    continue
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg


class Parameter(Tensor):
    def __init__(self, data, name=""):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(data, parents, grad_fn):
    req = any(p.requires_grad for p in parents)
    return Tensor(data, req, tuple(parents) if req else (), grad_fn if req else None)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _result(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b) -> Tensor:
    """``a @ b`` with numpy batching rules; either side may be a constant."""
    a, b = as_tensor(a), as_tensor(b)

    def grad_fn(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _result(a.data @ b.data, (a, b), grad_fn)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _result(np.swapaxes(a.data, -1, -2), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def sum(a) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    return _result(np.array(a.data.sum()), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def dropout(x, p: float = 0.5, training: bool = True, rng=None) -> Tensor:
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)``."""
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    x = as_tensor(x)
    if not training or p == 0:
        return x
    if rng is None:
        raise ValueError("dropout in training mode needs an explicit rng")
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, keep)


def concat(a, b) -> Tensor:
    """Column-wise concatenation ``[a | b]``."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[:-1] != b.shape[:-1]:
        raise ValueError(f"cannot concatenate shapes {a.shape} and {b.shape}")
    k = a.shape[-1]
    return _result(
        np.concatenate([a.data, b.data], axis=-1), (a, b), lambda g: (g[..., :k], g[..., k:])
    )


def _check_weight(W, b, d_in):
    if W.data.ndim != 2 or W.shape[1] != d_in:
        raise ValueError(f"weight of shape {W.shape} does not accept {d_in} input features")
    if b is not None and b.shape != (W.shape[0],):
        raise ValueError(f"bias shape {b.shape} does not match {W.shape[0]} outputs")


def linear(x, W, b=None) -> Tensor:
    """``x W^T + b``."""
    x, W = as_tensor(x), as_tensor(W)
    b = None if b is None else as_tensor(b)
    _check_weight(W, b, x.shape[-1])
    out = matmul(x, transpose(W))
    return out if b is None else add(out, b)


def _activate(x, activation):
    if activation == RELU:
        return relu(x)
    if activation == IDENTITY:
        return x
    raise ValueError(f"unknown activation {activation!r}")


def gcn_layer(H, A_norm, W, B, activation=RELU, add_self=True) -> Tensor:
    """``act((I + A_norm) H W^T + B)``.

    ``A_norm`` is a constant ``(N, N)`` matrix or a ``(batch, N, N)`` stack
    matching a ``(batch, N, d)`` input. With ``add_self=False`` it is used
    as given (for an already renormalized ``A + I``).
    """
    H = as_tensor(H)
    P = np.asarray(A_norm.data if isinstance(A_norm, Tensor) else A_norm, dtype=float)
    n = H.shape[-2]
    if P.shape[-2:] != (n, n):
        raise ValueError(f"adjacency {P.shape} does not match {n} nodes")
    if add_self:
        P = P + np.eye(n)
    return _activate(linear(matmul(P, H), W, B), activation)


def graphconv_layer(Z, A_pool, W1, W2, b) -> Tensor:
    """``Z W1^T + A_pool Z W2^T + b`` on a coarsened graph."""
    Z = as_tensor(Z)
    P = np.asarray(A_pool.data if isinstance(A_pool, Tensor) else A_pool, dtype=float)
    k = Z.shape[-2]
    if P.shape[-2:] != (k, k):
        raise ValueError(f"pooled adjacency {P.shape} does not match {k} clusters")
    W2 = as_tensor(W2)
    _check_weight(W2, None, Z.shape[-1])
    return add(linear(Z, W1, b), linear(matmul(P, Z), W2))


def global_mean_pool(Z, graph_index, n_graphs: int) -> Tensor:
    """Per-graph mean of node rows; ``graph_index[u]`` names the graph of row ``u``."""
    Z = as_tensor(Z)
    idx = np.asarray(graph_index, dtype=np.int64)
    if Z.data.ndim != 2 or idx.shape != (Z.shape[0],):
        raise ValueError("global_mean_pool expects a 2-D node matrix and one index per row")
    if idx.size and (idx.min() < 0 or idx.max() >= n_graphs):
        raise ValueError(f"graph index outside 0..{n_graphs - 1}")
    counts = np.bincount(idx, minlength=n_graphs)
    if np.any(counts == 0):
        raise ValueError("every graph in the batch needs at least one node")
    M = np.zeros((n_graphs, Z.shape[0]))
    M[idx, np.arange(idx.size)] = 1.0 / counts[idx]
    return matmul(M, Z)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(logits, dtype=float)))


def softmax_cross_entropy(logits, labels) -> Tensor:
    """Batch mean of ``-log softmax(logits)[label]``."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n, C = logits.shape
    if labels.shape != (n,):
        raise ValueError(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= C):
        raise ValueError(f"labels must lie in 0..{C - 1}")
    logp = log_softmax(logits.data)
    loss = -logp[np.arange(n), labels].mean()

    def grad_fn(g):
        d = np.exp(logp)
        d[np.arange(n), labels] -= 1.0
        return (g * d / n,)

    return _result(np.array(loss), (logits,), grad_fn)


def glorot_uniform(shape, rng) -> np.ndarray:
    fan_out, fan_in = shape
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Adam:
    """Adam with an L2 penalty folded into the gradient (``g + wd * theta``)."""

    def __init__(self, params, lr=0.001, weight_decay=0.0, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        missing = [getattr(p, "name", "?") for p in self.params if p.grad is None]
        if missing:
            raise RuntimeError(f"no gradient for parameters {missing}; call backward() first")
        self.step_count += 1
        t = self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad + self.weight_decay * p.data
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            m_hat = m / (1 - self.beta1**t)
            v_hat = v / (1 - self.beta2**t)
            p.data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
