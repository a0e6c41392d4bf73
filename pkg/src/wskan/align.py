"""Weight alignment of KANs over the hidden-relabeling group.

Given nets A and B with equal dims, find the relabeling g maximizing
<vec(A), vec(act(g, B))>; since relabelings preserve norms this is the
same as minimizing the L2 distance between parameter vectors.  The
maximization runs coordinate ascent: each hidden layer's permutation is
refreshed in a seeded random order by solving a linear assignment over a
cost that collects the two parameter blocks the layer touches.  A layer
update is accepted only on strict improvement, so the objective trace is
non-decreasing and the sweep loop terminates.

merge_many aligns a population to its own running average and returns
the average as a reference basis plus every input net aligned to it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .kan import KanLayer, KanNet
from .symmetry import GroupElement, Permutation, act, identity_element

__all__ = [
    "contract",
    "alignment_objective",
    "layer_cost_matrix",
    "solve_lap",
    "AlignmentResult",
    "align_pair",
    "net_mean",
    "MergeResult",
    "merge_many",
    "alignment_report",
]


def contract(p_left: Permutation | None, phi: np.ndarray, p_right: Permutation | None) -> np.ndarray:
    """Permute rows and columns of a stacked parameter block.

    Computes out[p, q, c] = sum_{p', q'} L[p, p'] * phi[p', q', c] * R[q, q']
    where L is p_left's matrix, R is the transpose of p_right's matrix and a
    permutation matrix has entry [i, j] = 1 iff i = sigma(j).  None means
    identity.  Index form: out[p, q, c] = phi[inv_left(p), right(q), c].
    """
    phi = np.asarray(phi)
    rows = np.arange(phi.shape[0]) if p_left is None else p_left.inverse().sigma
    cols = np.arange(phi.shape[1]) if p_right is None else p_right.sigma
    return phi[np.ix_(rows, cols)].copy()


def _channel_weights(net: KanNet, channel_weights: np.ndarray | None) -> np.ndarray:
    n_ch = net.layers[0].params.shape[2]
    if channel_weights is None:
        return np.ones(n_ch)
    w = np.asarray(channel_weights, dtype=np.float64)
    if w.shape != (n_ch,):
        raise ValueError(f"channel_weights must have shape ({n_ch},), got {w.shape}")
    return w


def alignment_objective(net_a: KanNet, net_b: KanNet, g: GroupElement,
                        channel_weights: np.ndarray | None = None) -> float:
    """Weighted inner product sum_c w_c <A_c, act(g, B)_c>; weights default to ones."""
    if net_a.dims != net_b.dims:
        raise ValueError(f"nets have different dims: {net_a.dims} vs {net_b.dims}")
    w = _channel_weights(net_a, channel_weights)
    moved = act(g, net_b)
    return float(sum(np.vdot(la.params * w, lb.params)
                     for la, lb in zip(net_a.layers, moved.layers)))


def layer_cost_matrix(net_a: KanNet, net_b: KanNet, perms: list[Permutation], hidden: int,
                      channel_weights: np.ndarray | None = None) -> np.ndarray:
    """Assignment cost for one hidden layer with its neighbors held fixed.

    hidden is 1-based among hidden layers (1..L-1).  cost[p, p'] is the
    objective contribution of matching A's neuron p to B's neuron p':
    correlations over the incoming parameter block (columns re-indexed by
    the previous layer's current permutation) plus the outgoing block
    (rows re-indexed by the next layer's current permutation); boundary
    layers contribute a single term.  Choosing the assignment that
    maximizes sum_p cost[p, pi(p)] raises the global objective by exactly
    the assignment-sum improvement.
    """
    dims = net_a.dims
    n_hidden = len(dims) - 2
    if not 1 <= hidden <= n_hidden:
        raise ValueError(f"hidden layer index must be in 1..{n_hidden}, got {hidden}")
    w = _channel_weights(net_a, channel_weights)
    lower_a = net_a.layers[hidden - 1].params * w
    lower_b = net_b.layers[hidden - 1].params
    prev = perms[hidden - 2].sigma if hidden >= 2 else np.arange(dims[hidden - 1])
    cost = np.einsum("pqc,Pqc->pP", lower_a, lower_b[:, prev, :])
    upper_a = net_a.layers[hidden].params * w
    upper_b = net_b.layers[hidden].params
    nxt = perms[hidden].sigma if hidden <= n_hidden - 1 else np.arange(dims[hidden + 1])
    cost += np.einsum("rpc,rPc->pP", upper_a, upper_b[nxt, :, :])
    return cost


def solve_lap(cost: np.ndarray, maximize: bool = True) -> Permutation:
    """Optimal assignment returning sigma with row p matched to column sigma(p).

    Among optimal assignments the lexicographically smallest sigma is
    returned (ties broken toward low column indices row by row).
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost must be square, got {cost.shape}")
    c = -cost if maximize else cost
    n = c.shape[0]
    rows, cols = linear_sum_assignment(c)
    best = float(c[rows, cols].sum())
    tol = 1e-9 * max(1.0, float(np.abs(c).max()) * n)
    # greedy prefix fixing: smallest column per row that still reaches the optimum
    avail = list(range(n))
    sigma = np.empty(n, dtype=np.int64)
    fixed = 0.0
    for row in range(n):
        for cand in avail:
            rest_rows = np.arange(row + 1, n)
            rest_cols = np.array([cc for cc in avail if cc != cand], dtype=np.int64)
            if len(rest_rows):
                sub = c[np.ix_(rest_rows, rest_cols)]
                rr, cc_idx = linear_sum_assignment(sub)
                rest = float(sub[rr, cc_idx].sum())
            else:
                rest = 0.0
            if fixed + c[row, cand] + rest <= best + tol:
                sigma[row] = cand
                fixed += c[row, cand]
                avail.remove(cand)
                break
        else:
            raise RuntimeError("assignment search failed to extend an optimal prefix")
    return Permutation(sigma)


@dataclass
class AlignmentResult:
    g: GroupElement
    objective_trace: list[float]
    converged: bool
    sweeps: int


def align_pair(net_a: KanNet, net_b: KanNet, rng: np.random.Generator,
               max_sweeps: int = 100, tol: float = 1e-9,
               channel_weights: np.ndarray | None = None) -> AlignmentResult:
    """Coordinate-ascent alignment of net_b onto net_a.

    Returns the best relabeling found; act(result.g, net_b) is the aligned
    copy.  The recorded objective trace (one entry per sweep, plus the
    start) never decreases.
    """
    if net_a.dims != net_b.dims:
        raise ValueError(f"nets have different dims: {net_a.dims} vs {net_b.dims}")
    dims = net_a.dims
    n_hidden = len(dims) - 2
    perms = [Permutation.identity(d) for d in dims[1:-1]]
    trace = [alignment_objective(net_a, net_b, GroupElement(tuple(perms)), channel_weights)]
    converged = n_hidden == 0
    sweeps = 0
    scale = max(1.0, abs(trace[0]))
    for _ in range(max_sweeps if n_hidden else 0):
        sweeps += 1
        changed = False
        for hidden in rng.permutation(n_hidden) + 1:
            cost = layer_cost_matrix(net_a, net_b, perms, int(hidden), channel_weights)
            cur = float(cost[np.arange(len(perms[hidden - 1])), perms[hidden - 1].sigma].sum())
            cand = solve_lap(cost, maximize=True)
            gain = float(cost[np.arange(len(cand)), cand.sigma].sum()) - cur
            # accept only strict improvement so the trace cannot dip
            if gain > 1e-12 * scale and not np.array_equal(cand.sigma, perms[hidden - 1].sigma):
                perms[hidden - 1] = cand
                changed = True
        trace.append(alignment_objective(net_a, net_b, GroupElement(tuple(perms)), channel_weights))
        if not changed or trace[-1] - trace[-2] < tol:
            converged = True
            break
    return AlignmentResult(g=GroupElement(tuple(perms)), objective_trace=trace, converged=converged, sweeps=sweeps)


def net_mean(nets: list[KanNet]) -> KanNet:
    """Parameter-wise average of same-shape nets."""
    if not nets:
        raise ValueError("cannot average zero nets")
    dims = nets[0].dims
    if any(n.dims != dims for n in nets):
        raise ValueError("nets have different dims")
    layers = []
    for li in range(len(nets[0].layers)):
        layers.append(KanLayer(np.mean([n.layers[li].params for n in nets], axis=0)))
    return KanNet(nets[0].spec, layers)


@dataclass
class MergeResult:
    reference: KanNet
    aligned: list[KanNet]          # every input net, aligned, in input order
    elements: list[GroupElement]   # relabeling applied to each input net
    round_objectives: list[float]
    converged: bool


def merge_many(nets: list[KanNet], rng: np.random.Generator, subset_size: int | None = None,
               tol: float = 1e-3, max_rounds: int = 25) -> MergeResult:
    """Joint alignment of a population of same-architecture nets.

    A subset (default: all) is iteratively aligned, each net to the mean
    of the others, until the aggregate objective sum_i <net_i, mean>
    moves less than tol between rounds.  The subset mean becomes the
    reference and every net, in or out of the subset, is aligned to it.
    """
    if len(nets) < 2:
        raise ValueError("merge_many needs at least two nets")
    if any(n.dims != nets[0].dims for n in nets):
        raise ValueError("nets have different dims")
    k = len(nets) if subset_size is None else min(subset_size, len(nets))
    if k < 1:
        raise ValueError("subset_size must be at least 1")
    subset = [nets[i].copy() for i in range(k)]
    dims = nets[0].dims
    elements = [identity_element(dims) for _ in range(k)]
    round_objs: list[float] = []
    converged = k == 1
    from .symmetry import compose  # local import to avoid cycle noise at module load

    for _ in range(max_rounds if k > 1 else 0):
        for i in rng.permutation(k):
            others = [subset[j] for j in range(k) if j != i]
            res = align_pair(net_mean(others), subset[i], rng)
            subset[i] = act(res.g, subset[i])
            elements[i] = compose(res.g, elements[i])
        mean_net = net_mean(subset)
        obj = float(sum(np.vdot(s.layers[li].params, mean_net.layers[li].params)
                        for s in subset for li in range(len(s.layers))))
        round_objs.append(obj)
        if len(round_objs) >= 2 and abs(round_objs[-1] - round_objs[-2]) < tol:
            converged = True
            break
    reference = net_mean(subset)
    aligned = list(subset)
    for i in range(k, len(nets)):
        res = align_pair(reference, nets[i], rng)
        aligned.append(act(res.g, nets[i]))
        elements.append(res.g)
    return MergeResult(reference=reference, aligned=aligned, elements=elements,
                       round_objectives=round_objs, converged=converged)


def alignment_report(result: AlignmentResult) -> str:
    """Plain-text summary: per-sweep objective values and the final permutations."""
    lines = ["alignment report"]
    for i, obj in enumerate(result.objective_trace):
        label = "start" if i == 0 else f"sweep {i}"
        lines.append(f"{label} objective {obj!r}")
    lines.append(f"converged {result.converged}")
    for li, perm in enumerate(result.g.perms, start=1):
        lines.append(f"hidden {li} permutation " + " ".join(str(int(s)) for s in perm.sigma))
    return "\n".join(lines) + "\n"
