"""Uniform B-spline bases on a bounded interval.

A basis is determined by a domain [a, b], a grid size G (number of core
intervals) and a degree k.  The knot vector is uniform and extended k knots
past each endpoint, which yields G + k basis functions.  Inputs are clamped
to [a, b] before evaluation, and the last core interval is treated as closed
so the basis still sums to one at x = b.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "SplineSpec",
    "make_spec",
    "n_basis",
    "basis_eval",
    "basis_matrix",
    "basis_grad_x",
    "basis_grad_matrix",
    "spline_eval",
]


@dataclass(frozen=True)
class SplineSpec:
    """Immutable description of a uniform B-spline basis.

    Attributes
    ----------
    a, b : float
        Domain endpoints, a < b.
    grid_size : int
        Number of core intervals G >= 1.
    degree : int
        Spline degree k >= 0.
    knots : ndarray
        Extended uniform knot vector of length G + 2k + 1 with
        knots[k] == a and knots[k + G] == b.
    """

    a: float
    b: float
    grid_size: int
    degree: int
    knots: np.ndarray = field(repr=False, compare=False)

    @property
    def n_basis(self) -> int:
        return self.grid_size + self.degree


def make_spec(a: float, b: float, grid_size: int, degree: int) -> SplineSpec:
    """Build a SplineSpec with a uniform extended knot vector.

    Raises
    ------
    ValueError
        If the domain is empty/non-finite or grid/degree are out of range.
    """
    a = float(a)
    b = float(b)
    if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
        raise ValueError(f"invalid domain: need finite a < b, got [{a}, {b}]")
    if grid_size < 1:
        raise ValueError(f"invalid grid: grid_size must be >= 1, got {grid_size}")
    if degree < 0:
        raise ValueError(f"invalid grid: degree must be >= 0, got {degree}")
    step = (b - a) / grid_size
    idx = np.arange(-degree, grid_size + degree + 1, dtype=np.float64)
    knots = a + idx * step
    return SplineSpec(a=a, b=b, grid_size=int(grid_size), degree=int(degree), knots=knots)


def n_basis(spec: SplineSpec) -> int:
    return spec.n_basis


def _check_finite(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input to spline evaluation")


def _degree_zero(spec: SplineSpec, x: np.ndarray) -> np.ndarray:
    """Indicator functions of the knot intervals, last core interval closed."""
    t = spec.knots
    ind = (t[:-1] <= x[..., None]) & (x[..., None] < t[1:])
    out = ind.astype(np.float64)
    # x == b must land in the last core interval only, not in the extension
    # interval [b, b + step) whose half-open indicator also fires
    last_core = spec.grid_size + spec.degree - 1
    at_b = x == spec.b
    if np.any(at_b):
        out[at_b, :] = 0.0
        out[at_b, last_core] = 1.0
    return out


def _safe_div(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """Elementwise num/den with 0/0 -> 0 (empty-interval guard)."""
    out = np.zeros(np.broadcast_shapes(num.shape, den.shape), dtype=np.float64)
    np.divide(num, den, out=out, where=den != 0)
    return out


def basis_matrix(spec: SplineSpec, x: np.ndarray) -> np.ndarray:
    """Evaluate all G + k basis functions at an array of points.

    Parameters
    ----------
    x : ndarray, any shape
        Points; values outside [a, b] are clamped.

    Returns
    -------
    ndarray, shape x.shape + (G + k,)
    """
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    x = np.clip(x, spec.a, spec.b)
    t = spec.knots
    vals = _degree_zero(spec, x)
    for r in range(1, spec.degree + 1):
        m = len(t) - 1 - r  # number of degree-r functions
        left = _safe_div(x[..., None] - t[:m], t[r : r + m] - t[:m])
        right = _safe_div(t[r + 1 : r + 1 + m] - x[..., None], t[r + 1 : r + 1 + m] - t[1 : 1 + m])
        vals = left * vals[..., :m] + right * vals[..., 1 : m + 1]
    return vals[..., : spec.n_basis]


def basis_eval(spec: SplineSpec, x: float) -> np.ndarray:
    """Evaluate all basis functions at a single point, shape (G + k,)."""
    return basis_matrix(spec, np.asarray(x, dtype=np.float64))


def basis_grad_matrix(spec: SplineSpec, x: np.ndarray) -> np.ndarray:
    """First derivatives of all basis functions at an array of points.

    At interior knots the right-limit value is returned; for degree 0 the
    derivative is zero everywhere.  Shape x.shape + (G + k,).
    """
    x = np.asarray(x, dtype=np.float64)
    _check_finite(x)
    x = np.clip(x, spec.a, spec.b)
    k = spec.degree
    nb = spec.n_basis
    if k == 0:
        return np.zeros(x.shape + (nb,), dtype=np.float64)
    t = spec.knots
    vals = _degree_zero(spec, x)
    for r in range(1, k):
        m = len(t) - 1 - r
        left = _safe_div(x[..., None] - t[:m], t[r : r + m] - t[:m])
        right = _safe_div(t[r + 1 : r + 1 + m] - x[..., None], t[r + 1 : r + 1 + m] - t[1 : 1 + m])
        vals = left * vals[..., :m] + right * vals[..., 1 : m + 1]
    # vals now holds the degree k-1 functions; apply the derivative identity
    m = nb
    den_a = t[k : k + m] - t[:m]
    den_b = t[k + 1 : k + 1 + m] - t[1 : 1 + m]
    term_a = _safe_div(vals[..., :m], np.broadcast_to(den_a, vals[..., :m].shape))
    term_b = _safe_div(vals[..., 1 : m + 1], np.broadcast_to(den_b, vals[..., 1 : m + 1].shape))
    return k * (term_a - term_b)


def basis_grad_x(spec: SplineSpec, x: float) -> np.ndarray:
    """Derivative of each basis function at a single point, shape (G + k,)."""
    return basis_grad_matrix(spec, np.asarray(x, dtype=np.float64))


def spline_eval(spec: SplineSpec, coefs: np.ndarray, x: float) -> float:
    """Evaluate sum_i coefs[i] * B_i(x)."""
    coefs = np.asarray(coefs, dtype=np.float64)
    if coefs.shape != (spec.n_basis,):
        raise ValueError(f"coefs must have shape ({spec.n_basis},), got {coefs.shape}")
    return float(basis_eval(spec, x) @ coefs)
