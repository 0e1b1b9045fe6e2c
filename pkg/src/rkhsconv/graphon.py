"""Graphons, box-product kernels, box powers, and spectral filtering on grids.

A graphon is a symmetric measurable W: [0,1]^2 -> [0,1].  The box product
(S1 [] S2)(u, v) = integral of S1(u, z) S2(z, v) dz is the continuum analogue
of a matrix product; W [] W is a reproducing kernel, and repeated box
products raise the integral operator's eigenvalues to powers.  Everything
here works on a midpoint-quadrature grid: a function of two variables
becomes an n x n matrix sampled at midpoints, and the box product becomes a
matrix product scaled by the cell width h = 1/n.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg


@dataclass(frozen=True)
class Graphon:
    """A named graphon evaluator; ``fn`` must accept numpy arrays."""

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray] = field(compare=False)

    def __call__(self, u, v):
        return self.fn(np.asarray(u, dtype=float), np.asarray(v, dtype=float))

    def to_json(self):
        if self.name.startswith("constant:"):
            return {"graphon": "constant_p", "p": float(self.name.split(":", 1)[1])}
        return {"graphon": self.name}


def dirichlet_green() -> Graphon:
    """W(u, v) = min(u, v) (1 - max(u, v)).

    This is the Green's function of -d^2/dx^2 on [0, 1] with zero boundary
    values; its integral operator has eigenvalues 1/(k pi)^2 with
    eigenfunctions sqrt(2) sin(k pi x), which makes it a convenient
    spectral test case.
    """
    return Graphon("dirichlet_green", lambda u, v: np.minimum(u, v) * (1.0 - np.maximum(u, v)))


def constant(p: float) -> Graphon:
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"constant graphon level must lie in [0, 1], got {p}")
    return Graphon(f"constant:{p}", lambda u, v: np.full(np.broadcast(u, v).shape, float(p)))


def graphon_from_json(data) -> Graphon:
    if isinstance(data, str):
        name = data
        p = None
    else:
        name = data.get("graphon")
        p = data.get("p")
    if name == "dirichlet_green":
        return dirichlet_green()
    if name == "constant_p":
        return constant(float(p))
    if isinstance(name, str) and name.startswith("constant:"):
        return constant(float(name.split(":", 1)[1]))
    raise ValueError(f"unknown graphon {name!r}")


@dataclass(frozen=True)
class DiscretizedKernel:
    """A two-variable function sampled on the n-point midpoint grid of [0, 1]."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"discretized kernel must be square, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("discretized kernel contains non-finite entries")
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def grid(self) -> np.ndarray:
        """Midpoints (i + 1/2) / n; endpoints are avoided on purpose."""
        return (np.arange(self.n) + 0.5) / self.n


def midpoint_grid(n: int) -> np.ndarray:
    return (np.arange(n) + 0.5) / n


def box_product(a: DiscretizedKernel, b: DiscretizedKernel) -> DiscretizedKernel:
    """Midpoint quadrature of (A [] B)(u, v) = integral A(u, z) B(z, v) dz."""
    if a.n != b.n:
        raise ValueError(f"grid sizes differ: {a.n} vs {b.n}")
    return DiscretizedKernel(a.values @ b.values * a.spacing)


def quadrature_delta(n: int) -> DiscretizedKernel:
    """The identity of the box product on the grid: (1/h) I."""
    return DiscretizedKernel(np.eye(n) * n)


def sample_graphon(w: Graphon, n: int) -> DiscretizedKernel:
    g = midpoint_grid(n)
    return DiscretizedKernel(w(g[:, None], g[None, :]))


def graphon_kernel(w: Graphon, n: int) -> DiscretizedKernel:
    """The reproducing kernel K = W [] W on the n-point grid."""
    if n < 64:
        raise ValueError(f"grid size must be at least 64, got {n}")
    s = sample_graphon(w, n)
    return box_product(s, s)


def box_power(k: DiscretizedKernel, r: int) -> DiscretizedKernel:
    """K^r = K [] K^(r-1); eigenvalues of the operator are raised to the r-th power."""
    if r < 1:
        raise ValueError(f"box power needs r >= 1, got {r}")
    out = k
    for _ in range(r - 1):
        out = box_product(out, k)
    return out


def spectral_decompose(k: DiscretizedKernel, k_max: int):
    """Top eigenpairs of the integral operator f -> integral K(., z) f(z) dz.

    Returns a list of (eigenvalue, eigenfunction) pairs with eigenvalues in
    descending order and eigenfunctions L2-normalized under the midpoint
    quadrature (h * sum(phi^2) = 1).
    """
    n = k.n
    if not (1 <= k_max <= n):
        raise ValueError(f"k_max must lie in [1, {n}], got {k_max}")
    h = k.spacing
    sym = 0.5 * (k.values + k.values.T) * h
    vals, vecs = scipy.linalg.eigh(sym, subset_by_index=(n - k_max, n - 1))
    order = np.argsort(vals)[::-1]
    pairs = []
    for idx in order:
        phi = vecs[:, idx] / np.sqrt(h)
        pairs.append((float(vals[idx]), phi))
    return pairs


def poly_filter_apply(coeffs, k: DiscretizedKernel, x, k_max: int = 50) -> np.ndarray:
    """Apply the polynomial kernel filter sum_r a_r K^(r+1) to a grid signal.

    The filter output is y(v) = <p_K(., v), x>_H.  On the eigenbasis of K this
    collapses to y = sum_k p(lambda_k) <phi_k, x>_L2 phi_k, because the H
    inner product of an eigenfunction is its L2 inner product divided by
    lambda_k while p_K carries the extra factor lambda_k * p(lambda_k).  The
    sum is truncated at ``k_max`` eigenpairs; with all-unit coefficients of
    degree zero (p = 1) the filter reproduces x up to that truncation.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (k.n,):
        raise ValueError(f"signal length {x.shape} does not match grid size {k.n}")
    coeffs = np.asarray(coeffs, dtype=float)
    h = k.spacing
    y = np.zeros_like(x)
    for lam, phi in spectral_decompose(k, min(k_max, k.n)):
        p_lam = float(np.polyval(coeffs[::-1], lam)) if coeffs.size else 0.0
        y += p_lam * (h * phi @ x) * phi
    return y
