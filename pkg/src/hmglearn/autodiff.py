"""Dense float64 tensors with reverse-mode automatic differentiation.

Deliberately small: only the primitives the encoder, the contrastive
losses, and the prediction heads need. Every primitive validates shapes
eagerly and raises on any non-finite forward value. Gradients accumulate
into leaf tensors until zero_grads is called.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np


class ShapeMismatch(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


class NonScalarRoot(ValueError):
    pass


_GRAD_ENABLED = [True]


class no_grad:
    """Context manager that disables tape recording (forward-only)."""

    def __enter__(self):
        _GRAD_ENABLED.append(False)
        return self

    def __exit__(self, *exc):
        _GRAD_ENABLED.pop()
        return False


class Tensor:
    __slots__ = ("data", "parents", "vjp", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.parents = parents
        self.vjp = vjp
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter(Tensor):
    """Named, trainable tensor belonging to a parameter group."""

    __slots__ = ("name", "group")

    def __init__(self, data, name: str, group: str):
        super().__init__(data, requires_grad=True)
        self.name = name
        self.group = group


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _check_finite(data, op):
    if not np.all(np.isfinite(data)):
        raise NonFiniteValue(f"non-finite value produced by {op}")


def _make(data, parents, vjp, op):
    _check_finite(data, op)
    if _GRAD_ENABLED[-1] and any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=tuple(parents), vjp=vjp)
    return Tensor(data)


def _unbroadcast(grad, shape):
    """Sum out axes that numpy broadcasting introduced."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# Primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data + b.data
    except ValueError as exc:
        raise ShapeMismatch(f"add: {a.shape} vs {b.shape}") from exc

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(out, (a, b), vjp, "add")


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = a.data * b.data
    except ValueError as exc:
        raise ShapeMismatch(f"mul: {a.shape} vs {b.shape}") from exc

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(out, (a, b), vjp, "mul")


def scale(a: Tensor, factor: float) -> Tensor:
    out = a.data * factor

    def vjp(g):
        return (g * factor,)

    return _make(out, (a,), vjp, "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; supports stacked (batched) leading dimensions."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeMismatch("matmul operands must be at least 2-D")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), vjp, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x @ w + b."""
    return add(matmul(x, w), b)


def concat(tensors, axis: int) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        grads = []
        for k in range(len(tensors)):
            sl = [slice(None)] * g.ndim
            sl[axis if axis >= 0 else g.ndim + axis] = slice(offsets[k], offsets[k + 1])
            grads.append(g[tuple(sl)])
        return tuple(grads)

    return _make(out, tensors, vjp, "concat")


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)

    def vjp(g):
        return (g.reshape(a.data.shape),)

    return _make(out, (a,), vjp, "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    out = np.transpose(a.data, axes)
    inverse = np.argsort(axes)

    def vjp(g):
        return (np.transpose(g, inverse),)

    return _make(out, (a,), vjp, "transpose")


def gather_rows(a: Tensor, indices) -> Tensor:
    """Select rows along axis 0. Duplicate indices accumulate gradient."""
    idx = np.asarray(indices, dtype=np.intp)
    out = a.data[idx]

    def vjp(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        return (ga,)

    return _make(out, (a,), vjp, "gather_rows")


def topk_select(a: Tensor, indices) -> Tensor:
    """Row selection by externally computed top-k indices."""
    return gather_rows(a, indices)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, stop)
    sl = tuple(sl)
    out = a.data[sl]

    def vjp(g):
        ga = np.zeros_like(a.data)
        ga[sl] = g
        return (ga,)

    return _make(out, (a,), vjp, "slice_axis")


def sum_axis(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.full_like(a.data, 1.0) * g,)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _make(out, (a,), vjp, "sum_axis")


def sum_rows(a: Tensor) -> Tensor:
    """Sum over axis 0 (adds the rows together)."""
    return sum_axis(a, axis=0)


def mean_rows(a: Tensor) -> Tensor:
    n = a.data.shape[0]
    return scale(sum_rows(a), 1.0 / n)


def row_softmax(a: Tensor) -> Tensor:
    """Softmax along the last axis."""
    mx = a.data.max(axis=-1, keepdims=True)
    e = np.exp(a.data - mx)
    out = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), vjp, "row_softmax")


def masked_softmax(a: Tensor, mask: np.ndarray) -> Tensor:
    """Softmax along the last axis restricted to True mask entries.

    Rows with no unmasked entries produce all-zero output (the empty-sender
    convention for attention).
    """
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), a.data.shape)
    neg = np.where(mask, a.data, -np.inf)
    mx = neg.max(axis=-1, keepdims=True)
    safe_mx = np.where(np.isfinite(mx), mx, 0.0)
    with np.errstate(invalid="ignore"):
        e = np.where(mask, np.exp(a.data - safe_mx), 0.0)
    s = e.sum(axis=-1, keepdims=True)
    out = np.divide(e, s, out=np.zeros_like(e), where=s > 0)

    def vjp(g):
        dot = (g * out).sum(axis=-1, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), vjp, "masked_softmax")


def leaky_relu(a: Tensor, slope: float = 0.01) -> Tensor:
    out = np.where(a.data >= 0, a.data, slope * a.data)

    def vjp(g):
        return (np.where(a.data >= 0, g, slope * g),)

    return _make(out, (a,), vjp, "leaky_relu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), vjp, "tanh")


def log(a: Tensor) -> Tensor:
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(a.data)

    def vjp(g):
        return (g / a.data,)

    return _make(out, (a,), vjp, "log")


def exp(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = np.exp(a.data)

    def vjp(g):
        return (g * out,)

    return _make(out, (a,), vjp, "exp")


def softplus(a: Tensor) -> Tensor:
    """log(1 + e^x), evaluated stably."""
    out = np.maximum(a.data, 0.0) + np.log1p(np.exp(-np.abs(a.data)))

    def vjp(g):
        return (g / (1.0 + np.exp(-a.data)),)

    return _make(out, (a,), vjp, "softplus")


COSINE_EPS = 1e-12


def l2_normalize_rows(a: Tensor, eps: float = COSINE_EPS) -> Tensor:
    """Rows divided by max(row L2 norm, eps); zero rows stay zero."""
    norm = np.sqrt((a.data * a.data).sum(axis=-1, keepdims=True))
    denom = np.maximum(norm, eps)
    out = a.data / denom

    def vjp(g):
        clamped = norm <= eps
        dot = (g * out).sum(axis=-1, keepdims=True)
        ga = (g - out * dot) / denom
        # Below the clamp the map is linear: y = x / eps.
        ga = np.where(clamped, g / denom, ga)
        return (ga,)

    return _make(out, (a,), vjp, "l2_normalize_rows")


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """Row-wise cosine similarity with the denominator clamped at 1e-12."""
    if a.shape != b.shape:
        raise ShapeMismatch(f"cosine_similarity: {a.shape} vs {b.shape}")
    return sum_axis(mul(l2_normalize_rows(a), l2_normalize_rows(b)), axis=-1)


# ---------------------------------------------------------------------------
# Backward pass


def backward(root: Tensor) -> None:
    """Reverse-mode sweep from a scalar root; accumulates into .grad."""
    if root.data.size != 1:
        raise NonScalarRoot(f"backward root must be scalar, got shape {root.shape}")
    if not root.requires_grad:
        return
    topo: list[Tensor] = []
    seen = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root.data)}
    for node in reversed(topo):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if not node.parents:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if not parent.requires_grad:
                continue
            if parent.parents:
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg
            else:
                parent.grad = pg if parent.grad is None else parent.grad + pg


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


# ---------------------------------------------------------------------------
# Optimizers


def sgd_step(params, grads, step_size: float) -> None:
    """In-place SGD update; grads aligned with params (None entries skipped)."""
    for p, g in zip(params, grads):
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"sgd_step: grad {g.shape} vs param {p.data.shape}")
        p.data -= step_size * g


@dataclass
class AdamState:
    step: int = 0
    moments: dict = field(default_factory=dict)

    def slot(self, name, shape):
        if name not in self.moments:
            self.moments[name] = (np.zeros(shape), np.zeros(shape))
        return self.moments[name]


def adam_step(params, state: AdamState, step_size: float = 1e-3,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """In-place Adam update over named parameters (None grads skipped)."""
    state.step += 1
    t = state.step
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t
    for p in params:
        g = p.grad
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeMismatch(f"adam_step: grad {g.shape} vs param {p.data.shape}")
        m, v = state.slot(p.name, p.data.shape)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p.data -= step_size * (m / bias1) / (np.sqrt(v / bias2) + eps)


# ---------------------------------------------------------------------------
# Gradient checking


@dataclass
class GradCheckReport:
    max_rel_err: dict
    tol: float

    @property
    def ok(self) -> bool:
        return all(v <= self.tol for v in self.max_rel_err.values())

    def worst(self):
        group = max(self.max_rel_err, key=self.max_rel_err.get)
        return group, self.max_rel_err[group]


def grad_check(fn, params, eps: float = 1e-5, tol: float = 1e-6,
               max_coords_per_group: int = 200, rng=None) -> GradCheckReport:
    """Compare analytic gradients of fn() against central finite differences.

    fn must be a deterministic closure over params returning a scalar Tensor.
    Groups larger than max_coords_per_group are sampled (seeded rng).
    """
    params = list(params)
    if rng is None:
        rng = np.random.default_rng(0)
    zero_grads(params)
    backward(fn())
    analytic = {p.name: (np.zeros_like(p.data) if p.grad is None else p.grad.copy())
                for p in params}

    groups: dict[str, list[Parameter]] = {}
    for p in params:
        groups.setdefault(p.group, []).append(p)

    report: dict[str, float] = {}
    for group, members in groups.items():
        coords = [(p, i) for p in members for i in range(p.data.size)]
        if len(coords) > max_coords_per_group:
            chosen = rng.choice(len(coords), size=max_coords_per_group, replace=False)
            coords = [coords[i] for i in sorted(chosen)]
        worst = 0.0
        for p, i in coords:
            flat = p.data.reshape(-1)
            orig = flat[i]
            with no_grad():
                flat[i] = orig + eps
                hi = float(fn().data)
                flat[i] = orig - eps
                lo = float(fn().data)
            flat[i] = orig
            fd = (hi - lo) / (2.0 * eps)
            an = analytic[p.name].reshape(-1)[i]
            rel = abs(fd - an) / max(abs(fd), abs(an), 1e-6)
            worst = max(worst, rel)
        report[group] = worst
    return GradCheckReport(max_rel_err=report, tol=tol)


# ---------------------------------------------------------------------------
# Checkpoint persistence

CHECKPOINT_MAGIC = b"HMGCKPT1"


def save_checkpoint(path, named_arrays: dict, config_digest: str) -> None:
    """Sectioned binary: magic, count, per-parameter records, digest footer."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(named_arrays)))
        for name, array in named_arrays.items():
            raw = np.ascontiguousarray(array, dtype=np.float64)
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", raw.ndim))
            fh.write(struct.pack(f"<{raw.ndim}I", *raw.shape))
            fh.write(raw.tobytes())
        digest = config_digest.encode("utf-8")
        fh.write(struct.pack("<I", len(digest)))
        fh.write(digest)


class CheckpointError(ValueError):
    pass


def load_checkpoint(path):
    """Returns (name -> float64 array, config digest string)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad checkpoint magic in {path}")
    offset = len(CHECKPOINT_MAGIC)

    def read(fmt):
        nonlocal offset
        size = struct.calcsize(fmt)
        values = struct.unpack_from(fmt, blob, offset)
        offset += size
        return values

    (count,) = read("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = read("<I")
        name = blob[offset : offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = read("<I")
        shape = read(f"<{rank}I") if rank else ()
        size = int(math.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(
            blob, dtype="<f8", count=size, offset=offset
        ).reshape(shape).copy()
        offset += size * 8
    (digest_len,) = read("<I")
    digest = blob[offset : offset + digest_len].decode("utf-8")
    return arrays, digest
