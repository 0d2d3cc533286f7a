"""Dense float64 tensors with recorded-tape reverse-mode differentiation.

Every differentiable operation computes its forward result eagerly (NumPy /
compiled kernels) and, when a :class:`Graph` is active, appends a node with a
backward rule to the tape. Nodes are recorded in execution order, so the tape
is topologically sorted by construction and :func:`backward` simply walks it
in reverse. Without an active graph the same functions run in plain inference
mode and record nothing.

The operator set is fixed to what the shadow networks need; this is not a
general-purpose autodiff library.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from . import kernels


class ShapeError(ValueError):
    """Raised when operand shapes violate an operation's contract."""


class Tensor:
    """A dense float64 array with an optional gradient buffer.

    Layout is row-major; 4-D feature maps use (batch, channel, height, width)
    order. ``grad`` is lazily created by :func:`backward` and accumulates
    across calls until :meth:`zero_grad`.
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={tuple(self.shape)}, requires_grad={self.requires_grad}{tag})"


class _Node:
    __slots__ = ("inputs", "output", "backward_fn")

    def __init__(self, inputs, output, backward_fn):
        self.inputs = inputs
        self.output = output
        self.backward_fn = backward_fn


class Graph:
    """Recording tape: an ordered list of operations for one forward pass.

    Used as a context manager; operations executed inside the ``with`` block
    are recorded. Node order is the recording order, which guarantees every
    node's inputs were produced earlier.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Graph":
        _GRAPH_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _GRAPH_STACK.pop()
        assert popped is self, "graph contexts must nest properly"

    def __len__(self) -> int:
        return len(self.nodes)


_GRAPH_STACK: list[Graph] = []


def _active_graph() -> Optional[Graph]:
    return _GRAPH_STACK[-1] if _GRAPH_STACK else None


def _record(inputs: Sequence[Tensor], out_data: np.ndarray,
            backward_fn: Callable[[np.ndarray], tuple]) -> Tensor:
    out = Tensor(out_data)
    graph = _active_graph()
    if graph is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        graph.nodes.append(_Node(tuple(inputs), out, backward_fn))
    return out


def backward(graph: Graph, loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every recorded tensor.

    ``loss`` must be a scalar produced on ``graph``. Repeated calls without
    zeroing grads add up (used for gradient accumulation across micro-steps).
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    adjoint: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    tensors: dict[int, Tensor] = {id(loss): loss}
    for node in reversed(graph.nodes):
        g_out = adjoint.get(id(node.output))
        if g_out is None:
            continue
        grads = node.backward_fn(g_out)
        for inp, g in zip(node.inputs, grads):
            if g is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in adjoint:
                adjoint[key] = adjoint[key] + g
            else:
                adjoint[key] = g
                tensors[key] = inp
    for key, t in tensors.items():
        g = adjoint[key]
        t.grad = g.copy() if t.grad is None else t.grad + g


# ---------------------------------------------------------------------------
# elementwise and reduction operations


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add: shapes {a.shape} and {b.shape} differ")
    return _record((a, b), a.data + b.data, lambda g: (g, g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul: shapes {a.shape} and {b.shape} differ")
    return _record((a, b), a.data * b.data, lambda g: (g * b.data, g * a.data))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _record((a,), a.data * c, lambda g: (g * c,))


def relu(a: Tensor) -> Tensor:
    """Elementwise max(x, 0); gradient flows only where x > 0."""
    mask = a.data > 0.0
    return _record((a,), np.where(mask, a.data, 0.0), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    # numerically symmetric form, stays in (0,1) for finite inputs
    s = np.empty_like(a.data)
    pos = a.data >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    e = np.exp(a.data[~pos])
    s[~pos] = e / (1.0 + e)
    return _record((a,), s, lambda g: (g * s * (1.0 - s),))


def _scalar(g: np.ndarray) -> float:
    return float(g.reshape(-1)[0])


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum())
    return _record((a,), out, lambda g: (np.full_like(a.data, _scalar(g)),))


# ---------------------------------------------------------------------------
# structural operations


def concat_channels(inputs: Sequence[Tensor]) -> Tensor:
    """Stack 4-D tensors along the channel axis."""
    if not inputs:
        raise ShapeError("concat_channels: empty input list")
    first = inputs[0]
    for t in inputs:
        if t.data.ndim != 4:
            raise ShapeError(f"concat_channels: expected 4-D tensors, got {t.shape}")
        if t.shape[0] != first.shape[0] or t.shape[2:] != first.shape[2:]:
            raise ShapeError(
                f"concat_channels: spatial/batch mismatch {t.shape} vs {first.shape}")
    sizes = [t.shape[1] for t in inputs]
    out = np.concatenate([t.data for t in inputs], axis=1)

    def bw(g):
        offs = np.cumsum([0] + sizes)
        return tuple(g[:, offs[i]:offs[i + 1]] for i in range(len(sizes)))

    return _record(tuple(inputs), out, bw)


def channel_slice(a: Tensor, start: int, stop: int) -> Tensor:
    """Select channels [start, stop) of a 4-D tensor."""
    if a.data.ndim != 4 or not (0 <= start < stop <= a.shape[1]):
        raise ShapeError(f"channel_slice: bad range [{start},{stop}) for shape {a.shape}")
    out = np.ascontiguousarray(a.data[:, start:stop])

    def bw(g):
        full = np.zeros_like(a.data)
        full[:, start:stop] = g
        return (full,)

    return _record((a,), out, bw)


def elementwise_mul_broadcast(features: Tensor, gate: Tensor) -> Tensor:
    """Scale every feature channel per-pixel by a single-channel gate."""
    if features.data.ndim != 4 or gate.data.ndim != 4:
        raise ShapeError("elementwise_mul_broadcast: expected 4-D tensors")
    if gate.shape[1] != 1:
        raise ShapeError(f"elementwise_mul_broadcast: gate must have 1 channel, got {gate.shape[1]}")
    if gate.shape[0] != features.shape[0] or gate.shape[2:] != features.shape[2:]:
        raise ShapeError(
            f"elementwise_mul_broadcast: mismatch {features.shape} vs {gate.shape}")
    out = features.data * gate.data

    def bw(g):
        return g * gate.data, (g * features.data).sum(axis=1, keepdims=True)

    return _record((features, gate), out, bw)


# ---------------------------------------------------------------------------
# convolution, pooling, upsampling


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None,
           padding: int = 0) -> Tensor:
    """2-D cross-correlation in B,C,H,W layout with zero padding.

    For odd kernel extents, padding (k-1)/2 preserves the spatial size.
    """
    if x.data.ndim != 4 or kernel.data.ndim != 4:
        raise ShapeError("conv2d: input and kernel must be 4-D")
    co, ci, kh, kw = kernel.shape
    if x.shape[1] != ci:
        raise ShapeError(
            f"conv2d: input has {x.shape[1]} channels, kernel expects {ci}")
    if not (0 <= padding <= kh - 1 and padding <= kw - 1):
        raise ShapeError(f"conv2d: padding {padding} out of range for {kh}x{kw} kernel")
    if x.shape[2] + 2 * padding < kh or x.shape[3] + 2 * padding < kw:
        raise ShapeError(f"conv2d: input {x.shape} smaller than kernel {kernel.shape}")
    if bias is not None and bias.shape != (co,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} != ({co},)")

    y = kernels.conv2d_forward(x.data, kernel.data, padding)
    if bias is not None:
        y += bias.data[None, :, None, None]

    def bw(g):
        gx, gk = kernels.conv2d_backward(x.data, kernel.data, g, padding)
        if bias is None:
            return gx, gk
        return gx, gk, g.sum(axis=(0, 2, 3))

    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return _record(inputs, y, bw)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; ties route the gradient to the first max."""
    if x.data.ndim != 4:
        raise ShapeError("maxpool2: expected a 4-D tensor")
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2: spatial size {h}x{w} not divisible by 2")
    blocks = x.data.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = np.ascontiguousarray(blocks).reshape(b, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def bw(g):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], g[..., None], axis=-1)
        gx = gflat.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return (np.ascontiguousarray(gx).reshape(b, c, h, w),)

    return _record((x,), out, bw)


def _interp_weights(n_out: int, n_in: int) -> np.ndarray:
    """Corner-aligned linear interpolation matrix (n_out x n_in), rows sum to 1."""
    m = np.zeros((n_out, n_in))
    if n_in == 1 or n_out == 1:
        m[:, 0] = 1.0
        return m
    step = (n_in - 1) / (n_out - 1)
    for i in range(n_out):
        s = i * step
        i0 = min(int(np.floor(s)), n_in - 2)
        frac = s - i0
        m[i, i0] += 1.0 - frac
        m[i, i0 + 1] += frac
    return m


def upsample_bilinear(x: Tensor, target: tuple[int, int]) -> Tensor:
    """Bilinear upsampling with corner-aligned sampling to (H, W)."""
    if x.data.ndim != 4:
        raise ShapeError("upsample_bilinear: expected a 4-D tensor")
    th, tw = target
    h, w = x.shape[2], x.shape[3]
    if th < h or tw < w:
        raise ShapeError(f"upsample_bilinear: downsampling {h}x{w} -> {th}x{tw} rejected")
    mr = _interp_weights(th, h)
    mc = _interp_weights(tw, w)
    out = np.einsum("Hh,bchw,Ww->bcHW", mr, x.data, mc, optimize=True)

    def bw(g):
        return (np.einsum("Hh,bcHW,Ww->bchw", mr, g, mc, optimize=True),)

    return _record((x,), out, bw)
