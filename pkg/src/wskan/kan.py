"""Kolmogorov-Arnold networks with learnable spline edge functions.

Every edge carries a univariate function

    psi(x) = w_b * silu(x) + w_s * sum_i c_i B_i(x)

over a shared B-spline basis; a layer maps x to out[p] = sum_q psi_{p,q}(x[q])
and a network is a stack of such layers.  Parameters for one layer live in a
single (d_out, d_in, 2 + n_basis) array: channel 0 is w_b, channel 1 is w_s,
the rest are spline coefficients.  That stacked layout is what the symmetry
group, the alignment routines and the flat-vector baselines all act on.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logsumexp

from .containers import read_container, write_container
from .splines import SplineSpec, basis_grad_matrix, basis_matrix, make_spec

__all__ = [
    "KanLayer",
    "KanNet",
    "ForwardTrace",
    "KanGrads",
    "silu",
    "silu_grad",
    "kan_init",
    "phi_eval",
    "layer_forward",
    "kan_forward",
    "kan_forward_batch",
    "kan_forward_trace",
    "kan_grad",
    "kan_grad_batch",
    "mse_value_and_grad",
    "cross_entropy_value_and_grad",
    "train_kan",
    "save_kan",
    "load_kan",
    "kan_to_text",
    "kan_from_text",
]

KAN_MAGIC = b"WKAN"
KAN_VERSION = 1


def silu(x):
    x = np.asarray(x, dtype=np.float64)
    return x * expit(x)


def silu_grad(x):
    x = np.asarray(x, dtype=np.float64)
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


@dataclass
class KanLayer:
    """One KAN layer: a (d_out, d_in) matrix of univariate edge functions."""

    params: np.ndarray  # (d_out, d_in, 2 + n_basis), float64

    @property
    def d_out(self) -> int:
        return self.params.shape[0]

    @property
    def d_in(self) -> int:
        return self.params.shape[1]

    @property
    def w_b(self) -> np.ndarray:
        return self.params[..., 0]

    @property
    def w_s(self) -> np.ndarray:
        return self.params[..., 1]

    @property
    def c(self) -> np.ndarray:
        return self.params[..., 2:]


@dataclass
class KanNet:
    spec: SplineSpec
    layers: list[KanLayer]

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].d_in] + [lay.d_out for lay in self.layers]

    def copy(self) -> "KanNet":
        return KanNet(self.spec, [KanLayer(lay.params.copy()) for lay in self.layers])


@dataclass
class ForwardTrace:
    """Per-layer activations x^0..x^L and per-edge post-psi values."""

    activations: list[np.ndarray]  # L+1 vectors, activations[l] has shape (d_l,)
    edge_values: list[np.ndarray]  # L matrices, edge_values[l] has shape (d_{l+1}, d_l)

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


@dataclass
class KanGrads:
    """Parameter gradients, one stacked array per layer, plus the input gradient."""

    layers: list[np.ndarray]
    x_grad: np.ndarray


def _check_dims(dims) -> list[int]:
    dims = [int(d) for d in dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ValueError(f"dims must list at least two positive sizes, got {dims}")
    return dims


def kan_init(dims, spec: SplineSpec, rng: np.random.Generator,
             base_weight: float = 1.0, spline_weight: float = 1.0,
             coef_std: float = 0.1) -> KanNet:
    """Fresh network: w_b and w_s constant, coefficients ~ N(0, coef_std^2)."""
    dims = _check_dims(dims)
    layers = []
    for d_in, d_out in zip(dims[:-1], dims[1:]):
        p = np.empty((d_out, d_in, 2 + spec.n_basis), dtype=np.float64)
        p[..., 0] = base_weight
        p[..., 1] = spline_weight
        p[..., 2:] = rng.normal(0.0, coef_std, size=(d_out, d_in, spec.n_basis))
        layers.append(KanLayer(p))
    return KanNet(spec, layers)


def phi_eval(spec: SplineSpec, phi: np.ndarray, x: float) -> float:
    """Evaluate one edge function given its parameter vector (w_b, w_s, c...)."""
    phi = np.asarray(phi, dtype=np.float64)
    if phi.shape != (2 + spec.n_basis,):
        raise ValueError(f"edge parameter vector must have length {2 + spec.n_basis}")
    b = basis_matrix(spec, np.asarray(x, dtype=np.float64))
    return float(phi[0] * silu(x) + phi[1] * (phi[2:] @ b))


def _edge_values_from_basis(layer: KanLayer, x: np.ndarray, basis: np.ndarray) -> np.ndarray:
    sil = silu(x)
    spl = np.einsum("pqi,bqi->bpq", layer.c, basis)
    return layer.w_b[None, :, :] * sil[:, None, :] + layer.w_s[None, :, :] * spl


def _edge_values_batch(layer: KanLayer, spec: SplineSpec, x: np.ndarray) -> np.ndarray:
    """Post-psi values for a batch, shape (batch, d_out, d_in)."""
    return _edge_values_from_basis(layer, x, basis_matrix(spec, x))


def _forward_batch(net: KanNet, x: np.ndarray, keep_edges: bool = False, keep_basis: bool = False):
    """Shared forward path; returns activations, edge values, basis matrices.

    The per-layer basis matrices are retained only on request so the
    backward pass can reuse them instead of re-evaluating the recursion.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.layers[0].d_in:
        raise ValueError(f"input must have shape (batch, {net.layers[0].d_in}), got {x.shape}")
    acts = [x]
    edges = []
    bases = []
    for layer in net.layers:
        basis = basis_matrix(net.spec, acts[-1])
        if keep_basis:
            bases.append(basis)
        ev = _edge_values_from_basis(layer, acts[-1], basis)
        if keep_edges:
            edges.append(ev)
        acts.append(ev.sum(axis=2))
    return acts, edges, bases


def kan_forward_batch(net: KanNet, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a (batch, d_0) array of inputs."""
    acts, _, _ = _forward_batch(net, x)
    return acts[-1]


def kan_forward(net: KanNet, x: np.ndarray) -> np.ndarray:
    """Evaluate the network on a single (d_0,) input."""
    x = np.asarray(x, dtype=np.float64)
    return kan_forward_batch(net, x[None, :])[0]


def layer_forward(layer: KanLayer, spec: SplineSpec, x: np.ndarray) -> np.ndarray:
    """Apply one layer to a single (d_in,) vector."""
    x = np.asarray(x, dtype=np.float64)
    return _edge_values_batch(layer, spec, x[None, :])[0].sum(axis=1)


def kan_forward_trace(net: KanNet, x: np.ndarray) -> ForwardTrace:
    """Forward pass recording activations and per-edge values.

    Uses the identical computation path as kan_forward, so the recorded
    output is bit-for-bit equal and each activation equals the sum of its
    incoming edge values in the same summation order.
    """
    x = np.asarray(x, dtype=np.float64)
    acts, edges, _ = _forward_batch(net, x[None, :], keep_edges=True)
    return ForwardTrace(activations=[a[0] for a in acts], edge_values=[e[0] for e in edges])


def _grad_batch_from(net: KanNet, acts: list[np.ndarray], bases: list[np.ndarray],
                     upstream: np.ndarray) -> KanGrads:
    spec = net.spec
    grads: list[np.ndarray] = [None] * len(net.layers)
    u = upstream
    for li in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[li]
        xin = acts[li]
        sil = silu(xin)
        basis = bases[li]
        spl = np.einsum("pqi,bqi->bpq", layer.c, basis)
        g = np.empty_like(layer.params)
        g[..., 0] = np.einsum("bp,bq->pq", u, sil)
        g[..., 1] = np.einsum("bp,bpq->pq", u, spl)
        g[..., 2:] = layer.w_s[..., None] * np.einsum("bp,bqi->pqi", u, basis)
        grads[li] = g
        # input gradient: silu path everywhere, spline path only inside (a, b)
        dbasis = basis_grad_matrix(spec, xin)
        inside = (xin > spec.a) & (xin < spec.b)
        dbasis = dbasis * inside[..., None]
        wc = layer.w_s[..., None] * layer.c
        spline_in = np.einsum("bqi,bqi->bq", np.einsum("bp,pqi->bqi", u, wc), dbasis)
        u = (u @ layer.w_b) * silu_grad(xin) + spline_in
    return KanGrads(layers=grads, x_grad=u)


def kan_grad_batch(net: KanNet, x: np.ndarray, upstream: np.ndarray) -> KanGrads:
    """Gradients of sum_b <upstream[b], f(x[b])> w.r.t. parameters and x.

    upstream has shape (batch, d_L).  Spline inputs are clamped to the
    basis domain, so the spline term contributes no input-gradient outside
    (a, b); the silu term always does.
    """
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    acts, _, bases = _forward_batch(net, x, keep_basis=True)
    return _grad_batch_from(net, acts, bases, upstream)


def kan_grad(net: KanNet, x: np.ndarray, upstream: np.ndarray) -> KanGrads:
    """Single-input form of kan_grad_batch; upstream has shape (d_L,)."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    g = kan_grad_batch(net, x[None, :], upstream[None, :])
    return KanGrads(layers=g.layers, x_grad=g.x_grad[0])


def mse_value_and_grad(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over all elements, with gradient w.r.t. pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    diff = pred - target
    return float(np.mean(diff * diff)), (2.0 / diff.size) * diff


def cross_entropy_value_and_grad(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy of integer labels under softmax(logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    n = logits.shape[0]
    lse = logsumexp(logits, axis=1)
    loss = float(np.mean(lse - logits[np.arange(n), labels]))
    soft = np.exp(logits - lse[:, None])
    soft[np.arange(n), labels] -= 1.0
    return loss, soft / n


@dataclass
class TrainLog:
    epoch_losses: list[float] = field(default_factory=list)


def train_kan(net: KanNet, x: np.ndarray, y: np.ndarray, *, loss: str = "mse",
              epochs: int = 100, lr: float = 0.01, batch_size: int = 128,
              rng: np.random.Generator) -> tuple[KanNet, TrainLog]:
    """Plain minibatch gradient descent at a fixed learning rate.

    loss is "mse" (y is float, shape (n, d_L)) or "cross-entropy"
    (y is int labels, shape (n,)).  Returns a trained copy and the
    per-epoch mean training loss.
    """
    if loss not in ("mse", "cross-entropy"):
        raise ValueError(f"unknown loss {loss!r}")
    net = net.copy()
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    log = TrainLog()
    for _ in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = x[idx], y[idx]
            acts, _, bases = _forward_batch(net, xb, keep_basis=True)
            pred = acts[-1]
            if loss == "mse":
                val, dpred = mse_value_and_grad(pred, yb)
            else:
                val, dpred = cross_entropy_value_and_grad(pred, yb)
            g = _grad_batch_from(net, acts, bases, dpred)
            for layer, gl in zip(net.layers, g.layers):
                layer.params -= lr * gl
            total += val * len(idx)
        log.epoch_losses.append(total / n)
    return net, log


# ---------------------------------------------------------------------------
# checkpoint format: binary container plus an equivalent text form


def save_kan(net: KanNet) -> bytes:
    """Serialize to the versioned binary checkpoint format."""
    header = {
        "format_version": KAN_VERSION,
        "dims": net.dims,
        "a": net.spec.a,
        "b": net.spec.b,
        "grid_size": net.spec.grid_size,
        "degree": net.spec.degree,
    }
    arrays = [(f"layer{i}", lay.params) for i, lay in enumerate(net.layers)]
    return write_container(KAN_MAGIC, KAN_VERSION, header, arrays)


def load_kan(data: bytes) -> KanNet:
    """Parse a binary checkpoint, validating shapes and finiteness."""
    _, header, arrays = read_container(data, KAN_MAGIC, KAN_VERSION)
    dims = _check_dims(header["dims"])
    spec = make_spec(header["a"], header["b"], header["grid_size"], header["degree"])
    layers = []
    for i, (d_in, d_out) in enumerate(zip(dims[:-1], dims[1:])):
        p = arrays[f"layer{i}"]
        if p.shape != (d_out, d_in, 2 + spec.n_basis):
            raise ValueError(f"layer {i} block has shape {p.shape}, dims say {(d_out, d_in, 2 + spec.n_basis)}")
        if not np.all(np.isfinite(p)):
            raise ValueError(f"layer {i} contains non-finite parameters")
        layers.append(KanLayer(p))
    return KanNet(spec, layers)


def kan_to_text(net: KanNet) -> str:
    """Human-readable equivalent of the binary checkpoint (exact floats)."""
    lines = [
        f"wskan-kan-checkpoint {KAN_VERSION}",
        "dims " + " ".join(str(d) for d in net.dims),
        f"domain {net.spec.a!r} {net.spec.b!r}",
        f"grid {net.spec.grid_size} degree {net.spec.degree}",
    ]
    for li, lay in enumerate(net.layers):
        lines.append(f"layer {li}")
        for p in range(lay.d_out):
            for q in range(lay.d_in):
                vals = " ".join(repr(v) for v in lay.params[p, q].tolist())
                lines.append(f"edge {p} {q} {vals}")
    return "\n".join(lines) + "\n"


def kan_from_text(text: str) -> KanNet:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    head = lines[0].split()
    if head[0] != "wskan-kan-checkpoint":
        raise ValueError("not a kan text checkpoint")
    if int(head[1]) > KAN_VERSION:
        raise ValueError(f"unsupported text checkpoint version {head[1]}")
    dims = _check_dims(lines[1].split()[1:])
    _, a, b = lines[2].split()
    g_tok = lines[3].split()
    spec = make_spec(float(a), float(b), int(g_tok[1]), int(g_tok[3]))
    layers = [KanLayer(np.zeros((d_out, d_in, 2 + spec.n_basis))) for d_in, d_out in zip(dims[:-1], dims[1:])]
    li = -1
    for ln in lines[4:]:
        tok = ln.split()
        if tok[0] == "layer":
            li = int(tok[1])
        elif tok[0] == "edge":
            p, q = int(tok[1]), int(tok[2])
            layers[li].params[p, q] = [float(v) for v in tok[3:]]
        else:
            raise ValueError(f"unrecognized line in text checkpoint: {ln!r}")
    return KanNet(spec, layers)
