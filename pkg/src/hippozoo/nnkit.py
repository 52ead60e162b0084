"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Just enough machinery for the experiment networks: elementwise ops,
matmul, reductions, the activations used in the harnesses, an Mlp
container, SGD/AdamW, stop-gradient for TBPTT chunking, and a flat
binary checkpoint format.  Not a general deep learning framework.
"""

import struct

import numpy as np


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A node in the recorded computation (the tape is the graph itself)."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad=False, parents=(), backward=None):
        self.value = np.asarray(value, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents if self.requires_grad else ()
        self._backward = backward if self.requires_grad else None

    @property
    def shape(self):
        return self.value.shape

    # -- graph construction -------------------------------------------------

    @staticmethod
    def from_op(value, parents, backward):
        """Record a custom op: ``backward(grad)`` yields per-parent grads."""
        return Tensor(value, parents=tuple(parents), backward=backward)

    def detach(self):
        """Value-identical tensor carrying no gradient history."""
        return Tensor(self.value)

    # -- reverse pass -------------------------------------------------------

    def backward(self, grad=None):
        if grad is None:
            if self.value.size != 1:
                raise ValueError("implicit gradient only for scalar outputs")
            grad = np.ones_like(self.value)
        topo, seen = [], set()

        def visit(node):
            if id(node) in seen or not node.requires_grad:
                return
            seen.add(id(node))
            for p in node._parents:
                visit(p)
            topo.append(node)

        visit(self)
        grads = {id(self): np.asarray(grad, dtype=float)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.grad is not None or node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    # -- ops ----------------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        return Tensor.from_op(
            self.value + other.value, (self, other),
            lambda g: (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape)))

    __radd__ = __add__

    def __neg__(self):
        return Tensor.from_op(-self.value, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        return Tensor.from_op(
            self.value * other.value, (self, other),
            lambda g: (_unbroadcast(g * other.value, self.shape),
                       _unbroadcast(g * self.value, other.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        return Tensor.from_op(
            self.value / other.value, (self, other),
            lambda g: (_unbroadcast(g / other.value, self.shape),
                       _unbroadcast(-g * self.value / other.value ** 2,
                                    other.shape)))

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.value, other.value

        def bwd(g):
            if a.ndim == 1 and b.ndim == 1:
                return g * b, g * a
            if a.ndim == 1:
                return g @ b.T, np.outer(a, g)
            if b.ndim == 1:
                return np.outer(g, b), a.T @ g
            return g @ b.T, a.T @ g

        return Tensor.from_op(a @ b, (self, other), bwd)

    def sum(self):
        return Tensor.from_op(self.value.sum(), (self,),
                              lambda g: (np.broadcast_to(g, self.shape),))

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        out = self.value.mean(axis=axis)

        def bwd(g):
            if axis is None:
                return (np.broadcast_to(g / n, self.shape),)
            return (np.broadcast_to(np.expand_dims(g, axis) / n, self.shape),)

        return Tensor.from_op(out, (self,), bwd)

    def reshape(self, *shape):
        return Tensor.from_op(self.value.reshape(*shape), (self,),
                              lambda g: (g.reshape(self.shape),))

    def __getitem__(self, idx):
        def bwd(g):
            full = np.zeros_like(self.value)
            full[idx] = g
            return (full,)
        return Tensor.from_op(self.value[idx], (self,), bwd)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(value, rng=None):
    return Tensor(np.asarray(value, dtype=float), requires_grad=True)


def concat(tensors):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.value.shape[0] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(g[offsets[i]:offsets[i + 1]] for i in range(len(tensors)))

    return Tensor.from_op(np.concatenate([t.value for t in tensors]),
                          tuple(tensors), bwd)


def outer(u, v):
    u, v = as_tensor(u), as_tensor(v)
    return Tensor.from_op(np.outer(u.value, v.value), (u, v),
                          lambda g: (g @ v.value, g.T @ u.value))


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.value)
    return Tensor.from_op(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x):
    x = as_tensor(x)
    y = 1.0 / (1.0 + np.exp(-x.value))
    return Tensor.from_op(y, (x,), lambda g: (g * y * (1.0 - y),))


def softplus(x):
    x = as_tensor(x)
    y = np.logaddexp(0.0, x.value)
    s = 1.0 / (1.0 + np.exp(-x.value))
    return Tensor.from_op(y, (x,), lambda g: (g * s,))


def scaled_sigmoid(x, g_max):
    """Strictly inside (0, g_max)."""
    return sigmoid(x) * g_max


def relu(x):
    x = as_tensor(x)
    mask = x.value > 0
    return Tensor.from_op(x.value * mask, (x,), lambda g: (g * mask,))


def detach(x):
    """Stop-gradient: numerically identical, no history (TBPTT boundaries)."""
    return as_tensor(x).detach()


_ACTIVATIONS = {
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
    "identity": lambda x: x,
    "relu": relu,
}


class Linear:
    """Dense layer with uniform +-sqrt(1/fan_in) initialization."""

    def __init__(self, fan_in, fan_out, rng, bias=True):
        bound = np.sqrt(1.0 / fan_in)
        self.W = parameter(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        self.b = parameter(rng.uniform(-bound, bound, size=fan_out)) if bias else None

    def __call__(self, x):
        y = self.W @ x
        return y + self.b if self.b is not None else y

    def parameters(self):
        return [self.W] + ([self.b] if self.b is not None else [])


class Mlp:
    """Dense network: widths, per-layer activations, optional residual.

    ``activations`` has one entry per weight layer; the final entry may be
    ("scaled_sigmoid", g_max).  With ``residual=True`` a skip connection is
    added around hidden layers of matching width.
    """

    def __init__(self, widths, activations, rng, residual=False):
        if len(activations) != len(widths) - 1:
            raise ValueError("need one activation per weight layer")
        self.layers = [Linear(widths[i], widths[i + 1], rng)
                       for i in range(len(widths) - 1)]
        self.activations = list(activations)
        self.residual = residual

    def __call__(self, x):
        h = as_tensor(x)
        for layer, act in zip(self.layers, self.activations):
            out = layer(h)
            if isinstance(act, tuple):
                name, g_max = act
                if name != "scaled_sigmoid":
                    raise ValueError(f"unknown activation {name!r}")
                out = scaled_sigmoid(out, g_max)
            else:
                out = _ACTIVATIONS[act](out)
            if self.residual and out.shape == h.shape:
                out = out + h
            h = out
        return h

    forward = __call__

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]


def clip_grad_norm(params, max_norm):
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.  Parameters with no gradient are skipped.
    """
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    norm = np.sqrt(total)
    if norm > max_norm > 0:
        scale = max_norm / norm
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return norm


class Sgd:
    def __init__(self, params, lr):
        self.params = list(params)
        self.lr = lr

    def step(self):
        for p in self.params:
            if p.grad is not None:
                p.value -= self.lr * p.grad

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class AdamW:
    """Adam with decoupled weight decay and bias correction."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8,
                 weight_decay=0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for i, p in enumerate(self.params):
            p.value *= 1.0 - self.lr * self.weight_decay
            g = p.grad
            if g is None:
                continue
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * g
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * g * g
            m_hat = self.m[i] / (1.0 - b1 ** self.t)
            v_hat = self.v[i] / (1.0 - b2 ** self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# -- checkpoints ------------------------------------------------------------
#
# Format: magic b"HZPK", uint64 array count, then per array a uint64 ndim
# followed by uint64 dims, then all array values concatenated as
# little-endian float64.

_MAGIC = b"HZPK"


def save_params(path, params):
    arrays = [np.asarray(p.value, dtype="<f8") for p in params]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<Q", len(arrays)))
        for a in arrays:
            fh.write(struct.pack("<Q", a.ndim))
            fh.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        for a in arrays:
            fh.write(a.tobytes())


def load_params(path, params):
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a parameter checkpoint")
        (count,) = struct.unpack("<Q", fh.read(8))
        if count != len(params):
            raise ValueError(f"checkpoint holds {count} arrays, "
                             f"expected {len(params)}")
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack("<Q", fh.read(8))
            shapes.append(struct.unpack(f"<{ndim}Q", fh.read(8 * ndim)))
        for p, shape in zip(params, shapes):
            if tuple(p.value.shape) != tuple(shape):
                raise ValueError("checkpoint shape mismatch")
            n = int(np.prod(shape, dtype=np.int64))
            p.value = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()


def finite_difference_grads(loss_fn, params, h=1e-5):
    """Central finite differences of ``loss_fn()`` w.r.t. each parameter."""
    grads = []
    for p in params:
        g = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = loss_fn()
            flat[i] = old - h
            down = loss_fn()
            flat[i] = old
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads
