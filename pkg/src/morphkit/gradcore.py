"""Minimal deterministic reverse-mode autodiff over dense float64 arrays.

Expression graphs are built lazily from named ``leaf`` nodes and constants;
``evaluate`` runs a forward pass for a given set of leaf bindings and
``gradient`` adds a reverse pass.  Every tensor is a plain ``numpy`` array in
float64; any NaN/Inf produced by an op aborts with :class:`NonFiniteError`.

The engine is single-threaded and pure: identical (graph, bindings) gives
bit-identical outputs, which the training code relies on for reproducible
checkpoints.
"""

from __future__ import annotations

import itertools
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GradcoreError",
    "NonFiniteError",
    "Node",
    "Graph",
    "leaf",
    "const",
    "add",
    "sub",
    "mul",
    "div",
    "matmul",
    "conv2d",
    "relu",
    "exp",
    "log",
    "sqrt",
    "mean",
    "reduce_sum",
    "concat",
    "slice_axis",
    "reshape",
    "transpose2d",
    "take_rows",
    "onehot",
    "l2norm",
    "cosine_similarity",
    "softmax_cross_entropy",
    "acos",
    "cos",
    "clip",
    "logmeanexp",
    "grad_scale",
    "evaluate",
    "evaluate_many",
    "gradient",
    "value_and_grad",
    "finite_difference_check",
    "ParamSpec",
    "ParamStore",
    "sgd_update",
    "LrSchedule",
]


class GradcoreError(Exception):
    """Graph construction, binding, or shape failure."""


class NonFiniteError(GradcoreError):
    """An operation produced NaN or Inf."""


_uid = itertools.count()


class Node:
    """One record in an expression graph.

    ``op`` names a primitive; ``inputs`` are upstream nodes; ``params`` hold
    static op attributes (stride, axis, ...).  Leaves carry a ``name`` that is
    resolved against the bindings dict at evaluation time.
    """

    __slots__ = ("op", "inputs", "params", "name", "uid")

    def __init__(self, op, inputs=(), name=None, **params):
        self.op = op
        self.inputs = tuple(inputs)
        self.params = params
        self.name = name
        self.uid = next(_uid)

    def __repr__(self):
        if self.op == "leaf":
            return f"Node(leaf '{self.name}')"
        return f"Node({self.op}, {len(self.inputs)} in)"

    # arithmetic sugar; scalars and arrays are lifted to constants
    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __neg__(self):
        return mul(self, const(-1.0))

    def relu(self):
        return relu(self)

    def sum(self, axis=None):
        return reduce_sum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, shape):
        return reshape(self, shape)


def _lift(x):
    return x if isinstance(x, Node) else const(x)


def leaf(name: str) -> Node:
    return Node("leaf", name=name)


def const(value) -> Node:
    return Node("const", value=np.asarray(value, dtype=np.float64))


def add(a, b):
    return Node("add", (a, b))


def sub(a, b):
    return Node("sub", (a, b))


def mul(a, b):
    return Node("mul", (a, b))


def div(a, b):
    return Node("div", (a, b))


def matmul(a, b):
    return Node("matmul", (a, b))


def conv2d(x, w, stride=1, pad=0):
    """2-D convolution (cross-correlation) of NCHW input with FCkk filters."""
    return Node("conv2d", (x, w), stride=int(stride), pad=int(pad))


def relu(x):
    return Node("relu", (x,))


def exp(x):
    return Node("exp", (x,))


def log(x):
    return Node("log", (x,))


def sqrt(x):
    return Node("sqrt", (x,))


def mean(x, axis=None):
    return Node("mean", (x,), axis=axis)


def reduce_sum(x, axis=None):
    return Node("sum", (x,), axis=axis)


def concat(nodes, axis):
    return Node("concat", tuple(nodes), axis=int(axis))


def slice_axis(x, axis, start, stop):
    return Node("slice", (x,), axis=int(axis), start=int(start), stop=int(stop))


def reshape(x, shape):
    return Node("reshape", (x,), shape=tuple(int(s) for s in shape))


def transpose2d(x):
    return Node("transpose2d", (x,))


def take_rows(x, indices):
    """Gather rows of ``x`` by an integer index vector (non-differentiable input)."""
    return Node("take_rows", (x, _lift(indices)))


def onehot(labels, depth):
    """One-hot encode an integer label vector; no gradient flows to the labels."""
    return Node("onehot", (_lift(labels),), depth=int(depth))


def l2norm(x):
    """Euclidean norm along the last axis."""
    return Node("l2norm", (x,))


def cosine_similarity(a, b):
    """Row-wise cosine similarity along the last axis; errors on zero-norm rows."""
    return Node("cosine_similarity", (a, b))


def softmax_cross_entropy(logits, labels):
    """Per-sample cross-entropy of (N, C) logits against integer labels (N,)."""
    return Node("softmax_xent", (logits, _lift(labels)))


def acos(x):
    return Node("acos", (x,))


def cos(x):
    return Node("cos", (x,))


def clip(x, lo, hi):
    return Node("clip", (x,), lo=float(lo), hi=float(hi))


def logmeanexp(x):
    """log(mean(exp(x))) over all elements, computed with max-subtraction."""
    return Node("logmeanexp", (x,))


def grad_scale(x, k):
    """Identity forward, gradient multiplied by ``k`` on the way back.

    Diagnostics hook: with k != 1 the analytic gradient is deliberately
    biased, which gradient-check gates must detect.
    """
    return Node("grad_scale", (x,), k=float(k))


# ---------------------------------------------------------------------------
# forward / backward rules


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == tuple(shape):
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _axes_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def _restore_dims(grad, in_shape, axis):
    axes = _axes_tuple(axis, len(in_shape))
    shape = tuple(1 if i in axes else s for i, s in enumerate(in_shape))
    return np.broadcast_to(grad.reshape(shape), in_shape)


def _im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]
    oh, ow = win.shape[2], win.shape[3]
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    return cols.reshape(n * oh * ow, c * kh * kw), oh, ow


def _conv2d_forward(x, w, stride, pad):
    if x.ndim != 4 or w.ndim != 4:
        raise GradcoreError("conv2d expects NCHW input and FCkk filters")
    if x.shape[1] != w.shape[1]:
        raise GradcoreError(
            f"conv2d channel mismatch: input {x.shape} filters {w.shape}")
    f, _, kh, kw = w.shape
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    out = cols @ w.reshape(f, -1).T
    return out.reshape(x.shape[0], oh, ow, f).transpose(0, 3, 1, 2)


def _conv2d_backward(g, x, w, stride, pad):
    n, c, h, wd = x.shape
    f, _, kh, kw = w.shape
    cols, oh, ow = _im2col(x, kh, kw, stride, pad)
    gm = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, f)
    dw = (gm.T @ cols).reshape(w.shape)
    dcols = (gm @ w.reshape(f, -1)).reshape(n, oh, ow, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    for ki in range(kh):
        for kj in range(kw):
            dxp[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += \
                dcols[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
    dx = dxp[:, :, pad:pad + h, pad:pad + wd] if pad else dxp
    return dx, dw


def _cosine_parts(a, b):
    na = np.sqrt((a * a).sum(axis=-1))
    nb = np.sqrt((b * b).sum(axis=-1))
    if (na == 0).any() or (nb == 0).any():
        raise GradcoreError("zero-norm vector in cosine-similarity")
    dot = (a * b).sum(axis=-1)
    return na, nb, dot


def _softmax(logits):
    m = logits.max(axis=1, keepdims=True)
    e = np.exp(logits - m)
    return e / e.sum(axis=1, keepdims=True)


def _check_matmul(a, b):
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise GradcoreError(f"matmul shape mismatch: {a.shape} x {b.shape}")


def _fwd(op, vals, p):
    if op == "add":
        return vals[0] + vals[1]
    if op == "sub":
        return vals[0] - vals[1]
    if op == "mul":
        return vals[0] * vals[1]
    if op == "div":
        return vals[0] / vals[1]
    if op == "matmul":
        _check_matmul(vals[0], vals[1])
        return vals[0] @ vals[1]
    if op == "conv2d":
        return _conv2d_forward(vals[0], vals[1], p["stride"], p["pad"])
    if op == "relu":
        return np.maximum(vals[0], 0.0)
    if op == "exp":
        return np.exp(vals[0])
    if op == "log":
        return np.log(vals[0])
    if op == "sqrt":
        return np.sqrt(vals[0])
    if op == "mean":
        return np.asarray(vals[0].mean(axis=p["axis"]))
    if op == "sum":
        return np.asarray(vals[0].sum(axis=p["axis"]))
    if op == "concat":
        return np.concatenate(vals, axis=p["axis"])
    if op == "slice":
        idx = [slice(None)] * vals[0].ndim
        idx[p["axis"]] = slice(p["start"], p["stop"])
        return vals[0][tuple(idx)]
    if op == "reshape":
        return vals[0].reshape(p["shape"])
    if op == "transpose2d":
        return vals[0].T
    if op == "take_rows":
        return vals[0][vals[1].astype(np.int64)]
    if op == "onehot":
        lab = vals[0].astype(np.int64)
        out = np.zeros((lab.shape[0], p["depth"]))
        out[np.arange(lab.shape[0]), lab] = 1.0
        return out
    if op == "l2norm":
        return np.sqrt((vals[0] * vals[0]).sum(axis=-1))
    if op == "cosine_similarity":
        na, nb, dot = _cosine_parts(vals[0], vals[1])
        return dot / (na * nb)
    if op == "softmax_xent":
        logits, lab = vals[0], vals[1].astype(np.int64)
        m = logits.max(axis=1)
        lse = m + np.log(np.exp(logits - m[:, None]).sum(axis=1))
        return lse - logits[np.arange(lab.shape[0]), lab]
    if op == "acos":
        return np.arccos(np.clip(vals[0], -1.0, 1.0))
    if op == "cos":
        return np.cos(vals[0])
    if op == "clip":
        return np.clip(vals[0], p["lo"], p["hi"])
    if op == "logmeanexp":
        x = vals[0].ravel()
        m = x.max()
        return np.asarray(m + np.log(np.exp(x - m).mean()))
    if op == "grad_scale":
        return vals[0]
    raise GradcoreError(f"unknown primitive '{op}'")


def _bwd(op, g, vals, out, p):
    if op == "add":
        return (_unbroadcast(g, vals[0].shape), _unbroadcast(g, vals[1].shape))
    if op == "sub":
        return (_unbroadcast(g, vals[0].shape), _unbroadcast(-g, vals[1].shape))
    if op == "mul":
        return (_unbroadcast(g * vals[1], vals[0].shape),
                _unbroadcast(g * vals[0], vals[1].shape))
    if op == "div":
        return (_unbroadcast(g / vals[1], vals[0].shape),
                _unbroadcast(-g * vals[0] / (vals[1] * vals[1]), vals[1].shape))
    if op == "matmul":
        return (g @ vals[1].T, vals[0].T @ g)
    if op == "conv2d":
        return _conv2d_backward(g, vals[0], vals[1], p["stride"], p["pad"])
    if op == "relu":
        return (g * (vals[0] > 0),)
    if op == "exp":
        return (g * out,)
    if op == "log":
        return (g / vals[0],)
    if op == "sqrt":
        return (g * 0.5 / out,)
    if op == "mean":
        axes = _axes_tuple(p["axis"], vals[0].ndim)
        count = float(np.prod([vals[0].shape[a] for a in axes]))
        return (_restore_dims(np.asarray(g), vals[0].shape, p["axis"]) / count,)
    if op == "sum":
        return (_restore_dims(np.asarray(g), vals[0].shape, p["axis"]).copy(),)
    if op == "concat":
        widths = [v.shape[p["axis"]] for v in vals]
        return tuple(np.split(g, np.cumsum(widths)[:-1], axis=p["axis"]))
    if op == "slice":
        dg = np.zeros_like(vals[0])
        idx = [slice(None)] * vals[0].ndim
        idx[p["axis"]] = slice(p["start"], p["stop"])
        dg[tuple(idx)] = g
        return (dg,)
    if op == "reshape":
        return (g.reshape(vals[0].shape),)
    if op == "transpose2d":
        return (g.T,)
    if op == "take_rows":
        dg = np.zeros_like(vals[0])
        np.add.at(dg, vals[1].astype(np.int64), g)
        return (dg, None)
    if op == "onehot":
        return (None,)
    if op == "l2norm":
        n = out
        if (n == 0).any():
            raise NonFiniteError("l2norm gradient at zero vector")
        return (g[..., None] * vals[0] / n[..., None],)
    if op == "cosine_similarity":
        a, b = vals
        na, nb, dot = _cosine_parts(a, b)
        c = (dot / (na * nb))[..., None]
        ga = g[..., None] * (b / (na * nb)[..., None] - c * a / (na * na)[..., None])
        gb = g[..., None] * (a / (na * nb)[..., None] - c * b / (nb * nb)[..., None])
        return (ga, gb)
    if op == "softmax_xent":
        logits, lab = vals[0], vals[1].astype(np.int64)
        d = _softmax(logits)
        d[np.arange(lab.shape[0]), lab] -= 1.0
        return (d * g[:, None], None)
    if op == "acos":
        d = 1.0 - vals[0] * vals[0]
        if (d <= 0).any():
            raise NonFiniteError("acos gradient at |x| >= 1")
        return (-g / np.sqrt(d),)
    if op == "cos":
        return (-g * np.sin(vals[0]),)
    if op == "clip":
        return (g * ((vals[0] > p["lo"]) & (vals[0] < p["hi"])),)
    if op == "logmeanexp":
        x = vals[0].ravel()
        e = np.exp(x - x.max())
        w = (e / e.sum()).reshape(vals[0].shape)
        return (np.asarray(g) * w,)
    if op == "grad_scale":
        return (g * p["k"],)
    raise GradcoreError(f"no gradient rule for '{op}'")


# kink detectors: ops whose gradient is discontinuous; finite-difference
# probes that flip one of these masks straddle a kink and are skipped
def _kink_mask(op, vals, p):
    if op == "relu":
        return vals[0] > 0
    if op == "clip":
        return (vals[0] > p["lo"]) & (vals[0] < p["hi"])
    return None


_KINK_OPS = ("relu", "clip")


# ---------------------------------------------------------------------------
# evaluation


def _topo_order(outputs):
    order, state = [], {}
    stack = [(n, False) for n in reversed(outputs)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if state.get(node.uid):
            continue
        state[node.uid] = True
        stack.append((node, True))
        for inp in reversed(node.inputs):
            if not state.get(inp.uid):
                stack.append((inp, False))
    return order


class Graph:
    """A single-output expression graph with cached topological order."""

    def __init__(self, output: Node):
        self.output = output
        self.nodes = _topo_order([output])
        self.leaves = {n.name: n for n in self.nodes if n.op == "leaf"}


def _as_graph(g):
    return g if isinstance(g, Graph) else Graph(g)


def _forward(nodes, bindings, kinks=None):
    values = {}
    for n in nodes:
        if n.op == "leaf":
            if n.name not in bindings:
                raise GradcoreError(f"unbound leaf '{n.name}'")
            v = np.asarray(bindings[n.name], dtype=np.float64)
        elif n.op == "const":
            v = n.params["value"]
        else:
            with np.errstate(all="ignore"):
                v = _fwd(n.op, [values[i.uid] for i in n.inputs], n.params)
            if not np.all(np.isfinite(v)):
                raise NonFiniteError(f"non-finite value produced by '{n.op}'")
            if kinks is not None and n.op in _KINK_OPS:
                kinks.append(_kink_mask(n.op, [values[i.uid] for i in n.inputs],
                                        n.params))
        values[n.uid] = v
    return values


def evaluate(graph, bindings) -> np.ndarray:
    """Forward-evaluate a graph (or output node) at the given leaf bindings."""
    g = _as_graph(graph)
    return _forward(g.nodes, bindings)[g.output.uid]


def evaluate_many(outputs, bindings):
    """Evaluate several output nodes in one shared forward pass."""
    nodes = _topo_order(list(outputs))
    values = _forward(nodes, bindings)
    return [values[o.uid] for o in outputs]


def value_and_grad(graph, bindings, wrt):
    """Forward value plus reverse-mode gradients for the named leaves."""
    g = _as_graph(graph)
    values = _forward(g.nodes, bindings)
    out = values[g.output.uid]
    if out.size != 1:
        raise GradcoreError(f"gradient requires a scalar output, got shape {out.shape}")
    grads = {g.output.uid: np.ones_like(out)}
    leaf_grads = {}
    for n in reversed(g.nodes):
        gout = grads.pop(n.uid, None)
        if gout is None:
            continue
        if n.op == "leaf":
            # distinct leaf nodes may share a name; they bind to one tensor,
            # so their adjoints accumulate
            prev = leaf_grads.get(n.name)
            leaf_grads[n.name] = gout if prev is None else prev + gout
            continue
        if n.op == "const":
            continue
        in_grads = _bwd(n.op, gout, [values[i.uid] for i in n.inputs],
                        values[n.uid], n.params)
        for inp, ig in zip(n.inputs, in_grads):
            if ig is None:
                continue
            prev = grads.get(inp.uid)
            grads[inp.uid] = ig if prev is None else prev + ig
    result = {}
    for name in wrt:
        if name in leaf_grads:
            result[name] = np.asarray(leaf_grads[name], dtype=np.float64)
        elif name in bindings:
            result[name] = np.zeros_like(np.asarray(bindings[name], dtype=np.float64))
        else:
            raise GradcoreError(f"cannot differentiate w.r.t. unknown leaf '{name}'")
    return float(out.reshape(())), result


def gradient(graph, bindings, wrt):
    """Exact reverse-mode gradients of a scalar graph for the named leaves."""
    return value_and_grad(graph, bindings, wrt)[1]


def finite_difference_check(graph, bindings, wrt, eps=1e-5,
                            max_coords=8, seed=0):
    """Max relative error between analytic and central-difference gradients.

    Coordinates are subsampled deterministically per leaf (at most
    ``max_coords`` each).  Probes whose +/-eps evaluations land on different
    sides of a kink (relu / clip masks change) are skipped, as are probes
    that leave the finite domain.
    """
    g = _as_graph(graph)
    _, analytic = value_and_grad(graph, bindings, wrt)
    worst = 0.0
    for name in wrt:
        base = np.asarray(bindings[name], dtype=np.float64)
        flat = base.ravel()
        if flat.size <= max_coords:
            coords = np.arange(flat.size)
        else:
            rng = np.random.Generator(np.random.PCG64(seed + zlib.crc32(name.encode())))
            coords = rng.choice(flat.size, size=max_coords, replace=False)
            coords.sort()
        for idx in coords:
            probe = flat.copy()
            probe[idx] = flat[idx] + eps
            bp = dict(bindings)
            bp[name] = probe.reshape(base.shape)
            probe2 = flat.copy()
            probe2[idx] = flat[idx] - eps
            bm = dict(bindings)
            bm[name] = probe2.reshape(base.shape)
            try:
                kp, km = [], []
                vp = _forward(g.nodes, bp, kinks=kp)[g.output.uid]
                vm = _forward(g.nodes, bm, kinks=km)[g.output.uid]
            except NonFiniteError:
                continue
            if any(not np.array_equal(a, b) for a, b in zip(kp, km)):
                continue
            num = float((vp - vm).reshape(())) / (2.0 * eps)
            ana = analytic[name].ravel()[idx]
            rel = abs(ana - num) / max(1.0, abs(ana))
            worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class ParamSpec:
    """Initialization recipe for one named tensor."""

    name: str
    shape: tuple
    init: str = "uniform"  # "uniform" (fan-in scaled) or "zeros"
    fan_in: int | None = None


@dataclass
class ParamStore:
    """Named float64 tensors with a seeded, order-deterministic init record."""

    tensors: dict = field(default_factory=dict)
    seed: int | None = None
    init_scheme: str | None = None

    @classmethod
    def initialize(cls, specs, seed):
        rng = np.random.Generator(np.random.PCG64(seed))
        tensors = {}
        for spec in specs:
            if spec.name in tensors:
                raise GradcoreError(f"duplicate parameter '{spec.name}'")
            if spec.init == "zeros":
                tensors[spec.name] = np.zeros(spec.shape)
            elif spec.init == "uniform":
                bound = 1.0 / np.sqrt(float(spec.fan_in))
                tensors[spec.name] = rng.uniform(-bound, bound, size=spec.shape)
            else:
                raise GradcoreError(f"unknown init scheme '{spec.init}'")
        return cls(tensors=tensors, seed=seed, init_scheme="fan_in_uniform")

    def copy(self):
        return ParamStore(tensors={k: v.copy() for k, v in self.tensors.items()},
                          seed=self.seed, init_scheme=self.init_scheme)

    def names(self):
        return list(self.tensors)

    def __getitem__(self, name):
        return self.tensors[name]

    def save(self, path):
        """Versioned binary dump: magic 'MKPT1' then per-tensor records."""
        with open(path, "wb") as f:
            f.write(b"MKPT1")
            for name, arr in self.tensors.items():
                nb = name.encode("utf-8")
                f.write(struct.pack("<I", len(nb)))
                f.write(nb)
                f.write(struct.pack("<I", arr.ndim))
                for d in arr.shape:
                    f.write(struct.pack("<I", d))
                f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as f:
            data = f.read()
        if data[:5] != b"MKPT1":
            raise GradcoreError(f"{path}: bad magic, not a MKPT1 checkpoint")
        tensors = {}
        off = 5
        while off < len(data):
            (nlen,) = struct.unpack_from("<I", data, off)
            off += 4
            name = data[off:off + nlen].decode("utf-8")
            off += nlen
            (rank,) = struct.unpack_from("<I", data, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}I", data, off)
            off += 4 * rank
            count = int(np.prod(dims)) if rank else 1
            arr = np.frombuffer(data, dtype="<f8", count=count, offset=off)
            off += 8 * count
            tensors[name] = arr.reshape(dims).astype(np.float64)
        return cls(tensors=tensors)


def sgd_update(params: ParamStore, grads, lr):
    """In-place SGD step ``p <- p - lr * g`` over every parameter."""
    for name, t in params.tensors.items():
        if name not in grads:
            raise GradcoreError(f"missing gradient for parameter '{name}'")
        t -= lr * grads[name]
    return params


@dataclass(frozen=True)
class LrSchedule:
    """Step decay: multiply by ``decay`` every ``every`` epochs, floored."""

    initial: float = 0.1
    decay: float = 0.9
    every: int = 5
    floor: float = 1e-6

    def at(self, epoch: int) -> float:
        return max(self.initial * self.decay ** (epoch // self.every), self.floor)
