"""Hidden-neuron permutation symmetries of KANs.

Relabeling the neurons of each hidden layer leaves the computed function
unchanged once every layer's edge-function matrix is re-indexed to match:
layer l's rows follow layer-(l+1) neurons and its columns follow layer-l
neurons.  The group is the product of the symmetric groups of the hidden
layer widths; input and output neurons keep their labels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kan import KanLayer, KanNet, kan_forward_batch

__all__ = [
    "Permutation",
    "GroupElement",
    "identity_element",
    "sample_group_element",
    "permute_phi",
    "act",
    "compose",
    "InvarianceReport",
    "verify_invariance",
]


@dataclass(frozen=True)
class Permutation:
    """A permutation of {0..n-1}; sigma[i] is the image of i."""

    sigma: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=np.int64)
        object.__setattr__(self, "sigma", s)
        if s.ndim != 1 or not np.array_equal(np.sort(s), np.arange(len(s))):
            raise ValueError(f"not a permutation array: {s}")

    def __len__(self) -> int:
        return len(self.sigma)

    def __call__(self, i: int) -> int:
        return int(self.sigma[i])

    def inverse(self) -> "Permutation":
        return Permutation(np.argsort(self.sigma))

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.sigma, np.arange(len(self.sigma))))

    @staticmethod
    def identity(n: int) -> "Permutation":
        return Permutation(np.arange(n))


@dataclass(frozen=True)
class GroupElement:
    """One permutation per hidden layer, ordered first hidden to last."""

    perms: tuple[Permutation, ...]

    def __post_init__(self):
        object.__setattr__(self, "perms", tuple(self.perms))

    def hidden_sizes(self) -> list[int]:
        return [len(p) for p in self.perms]

    def inverse(self) -> "GroupElement":
        return GroupElement(tuple(p.inverse() for p in self.perms))

    def is_identity(self) -> bool:
        return all(p.is_identity() for p in self.perms)


def identity_element(dims) -> GroupElement:
    return GroupElement(tuple(Permutation.identity(d) for d in dims[1:-1]))


def sample_group_element(dims, rng: np.random.Generator) -> GroupElement:
    """Uniform random permutation per hidden layer."""
    return GroupElement(tuple(Permutation(rng.permutation(d)) for d in dims[1:-1]))


def compose(g2: GroupElement, g1: GroupElement) -> GroupElement:
    """The element acting like g1 followed by g2: act(g2, act(g1, net)) == act(compose(g2, g1), net)."""
    if g2.hidden_sizes() != g1.hidden_sizes():
        raise ValueError("group elements act on different hidden widths")
    return GroupElement(tuple(Permutation(p1.sigma[p2.sigma]) for p1, p2 in zip(g1.perms, g2.perms)))


def permute_phi(layer: KanLayer, row_perm: Permutation, col_perm: Permutation) -> KanLayer:
    """Re-index a layer's edge-function matrix: out[p][q] = in[row^-1(p)][col(q)]."""
    if len(row_perm) != layer.d_out or len(col_perm) != layer.d_in:
        raise ValueError(
            f"permutation sizes {(len(row_perm), len(col_perm))} do not match layer {(layer.d_out, layer.d_in)}"
        )
    inv_row = row_perm.inverse().sigma
    return KanLayer(layer.params[np.ix_(inv_row, col_perm.sigma)].copy())


def act(g: GroupElement, net: KanNet) -> KanNet:
    """Apply a hidden-layer relabeling; the resulting net computes the same function.

    Layer l's new entry [p][q] is the old entry [sigma_l(p)][sigma_{l-1}(q)]
    with identity at the input and output layers.
    """
    dims = net.dims
    if g.hidden_sizes() != dims[1:-1]:
        raise ValueError(f"group element hidden sizes {g.hidden_sizes()} do not match net dims {dims}")
    n_layers = len(net.layers)
    out = []
    for i, layer in enumerate(net.layers):
        row = g.perms[i].sigma if i < n_layers - 1 else np.arange(layer.d_out)
        col = g.perms[i - 1].sigma if i > 0 else np.arange(layer.d_in)
        out.append(KanLayer(layer.params[np.ix_(row, col)].copy()))
    return KanNet(net.spec, out)


@dataclass
class InvarianceReport:
    max_deviation: float
    n_elements: int
    n_inputs: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_deviation < self.tol


def verify_invariance(net: KanNet, n_inputs: int, tol: float,
                      rng: np.random.Generator, n_elements: int = 8) -> InvarianceReport:
    """Check that random relabelings leave the network function unchanged.

    Samples group elements and inputs (uniform over the spline domain) and
    reports the largest absolute output deviation.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if n_inputs < 1 or n_elements < 1:
        raise ValueError("need at least one input and one group element")
    d0 = net.dims[0]
    xs = rng.uniform(net.spec.a, net.spec.b, size=(n_inputs, d0))
    base = kan_forward_batch(net, xs)
    worst = 0.0
    for _ in range(n_elements):
        g = sample_group_element(net.dims, rng)
        dev = np.abs(kan_forward_batch(act(g, net), xs) - base).max()
        worst = max(worst, float(dev))
    return InvarianceReport(max_deviation=worst, n_elements=n_elements, n_inputs=n_inputs, tol=tol)
