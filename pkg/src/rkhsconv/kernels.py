"""Reproducing-kernel evaluators and Gram-matrix assembly.

Each kernel realizes the inner product of its Hilbert space through
``<k_v, k_u> = K(u, v)``.  Kernels are immutable after construction and all
evaluation paths are pure; ``eval_packed`` is the vectorized core every hot
path goes through, operating on packed coordinate arrays as produced by
``domain_ops.pack_centers``.
"""

from __future__ import annotations

import numpy as np

from . import graphon as graphon_mod
from .domain_ops import Center, Planar, Rotation3, Scalar, UnitInterval, pack_centers
from .errors import DomainMismatchError


class Kernel:
    """Base class; subclasses set ``center_type`` and implement ``eval_packed``."""

    center_type: type

    def eval(self, u: Center, v: Center) -> float:
        """K(u, v) for two centers of this kernel's domain."""
        self.check_center(u)
        self.check_center(v)
        return float(self.eval_packed(u.coords()[None, :], v.coords()[None, :])[0, 0])

    def eval_packed(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Gram block K(a_i, b_j) for packed coordinates a: (n, d), b: (m, d)."""
        raise NotImplementedError

    def gram(self, centers) -> np.ndarray:
        """Symmetric Gram matrix over a nonempty sequence of centers."""
        packed = centers if isinstance(centers, np.ndarray) else pack_centers(centers)
        if packed.shape[0] == 0:
            raise ValueError("gram needs at least one center")
        g = self.eval_packed(packed, packed)
        return 0.5 * (g + g.T)

    def peak(self) -> float:
        """Upper bound on sup_x |k_v(x)|, used for prune error reports."""
        raise NotImplementedError

    def shift_slope(self) -> float:
        """Upper bound on |k_v(x) - k_w(x)| / dist(v, w), for merge error reports."""
        raise NotImplementedError

    def check_center(self, c: Center) -> None:
        if type(c) is not self.center_type:
            raise DomainMismatchError(
                f"{type(self).__name__} evaluates {self.center_type.__name__} centers, "
                f"got {type(c).__name__}"
            )

    def to_json(self) -> dict:
        raise NotImplementedError

    def __eq__(self, other):
        return type(self) is type(other) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(tuple(sorted((k, str(v)) for k, v in self.to_json().items())))

    def __repr__(self):
        args = ", ".join(f"{k}={v}" for k, v in self.to_json().items() if k != "type")
        return f"{type(self).__name__}({args})"


class Gaussian1D(Kernel):
    """K(u, v) = exp(-B (u - v)^2) on the real line."""

    center_type = Scalar

    def __init__(self, B: float):
        if not B > 0:
            raise ValueError(f"bandwidth B must be positive, got {B}")
        self.B = float(B)

    def eval_packed(self, a, b):
        d = a[:, 0][:, None] - b[:, 0][None, :]
        return np.exp(-self.B * d * d)

    def peak(self):
        return 1.0

    def shift_slope(self):
        # max_t |d/dt exp(-B t^2)| = sqrt(2B) e^(-1/2)
        return float(np.sqrt(2.0 * self.B) * np.exp(-0.5))

    def to_json(self):
        return {"type": "gaussian1d", "B": self.B}


class Gaussian2D(Kernel):
    """K(u, v) = exp(-|u - v|^2 / (2 sigma^2)) on the plane.

    ``sigma`` is the kernel width in coordinate units.  The bandwidth form
    exp(-B |u - v|^2) is the same kernel with B = 1 / (2 sigma^2); use
    ``from_bandwidth`` to construct it that way.
    """

    center_type = Planar

    def __init__(self, sigma: float):
        if not sigma > 0:
            raise ValueError(f"width sigma must be positive, got {sigma}")
        self.sigma = float(sigma)

    @classmethod
    def from_bandwidth(cls, B: float) -> "Gaussian2D":
        if not B > 0:
            raise ValueError(f"bandwidth B must be positive, got {B}")
        return cls(sigma=float(np.sqrt(0.5 / B)))

    def eval_packed(self, a, b):
        d2 = (
            (a * a).sum(axis=1)[:, None]
            + (b * b).sum(axis=1)[None, :]
            - 2.0 * (a @ b.T)
        )
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-d2 / (2.0 * self.sigma**2))

    def peak(self):
        return 1.0

    def shift_slope(self):
        return float(np.exp(-0.5) / self.sigma)

    def to_json(self):
        return {"type": "gaussian2d", "sigma": self.sigma}


class Sinc(Kernel):
    """K(u, v) = (B / pi) sinc((B / pi)(u - v)), the B-bandlimited kernel.

    ``sinc`` is the normalized convention sin(pi t) / (pi t), so the kernel
    equals sin(B (u - v)) / (pi (u - v)) with value B / pi on the diagonal.
    """

    center_type = Scalar

    def __init__(self, B: float):
        if not B > 0:
            raise ValueError(f"bandwidth B must be positive, got {B}")
        self.B = float(B)

    def eval_packed(self, a, b):
        d = a[:, 0][:, None] - b[:, 0][None, :]
        scale = self.B / np.pi
        return scale * np.sinc(scale * d)

    def peak(self):
        return self.B / np.pi

    def shift_slope(self):
        # sup_t |sinc'(t)| < 1.4 (attained near t = 0.72)
        return float(1.4 * (self.B / np.pi) ** 2)

    def to_json(self):
        return {"type": "sinc", "B": self.B}


class SpherePoly(Kernel):
    """K(u, v) = <p_u, p_v>^d for sphere points p = R e0, e0 = (0, 0, 1).

    Centers are rotations; the kernel only sees the rotated base point, so
    two rotations with the same base point evaluate identically.
    """

    center_type = Rotation3

    def __init__(self, d: int):
        if int(d) != d or d < 1:
            raise ValueError(f"polynomial degree must be a positive integer, got {d}")
        self.d = int(d)

    def eval_packed(self, a, b):
        pa = a.reshape(-1, 3, 3)[:, :, 2]
        pb = b.reshape(-1, 3, 3)[:, :, 2]
        return (pa @ pb.T) ** self.d

    def peak(self):
        return 1.0

    def shift_slope(self):
        # |<p,q>^d - <p,q'>^d| <= d |q - q'| <= d |R - R'|_F
        return float(self.d)

    def to_json(self):
        return {"type": "sphere_poly", "d": self.d}


class GraphonBox(Kernel):
    """K(u, v) = integral W(u, z) W(z, v) dz, by composite trapezoid quadrature.

    ``n_quad`` is the number of trapezoid intervals on [0, 1].  The grid and
    weights are precomputed once, so evaluation is a single matrix product.
    """

    center_type = UnitInterval

    def __init__(self, W: graphon_mod.Graphon, n_quad: int = 2000):
        if n_quad < 64:
            raise ValueError(f"n_quad must be at least 64, got {n_quad}")
        self.W = W
        self.n_quad = int(n_quad)
        self._z = np.linspace(0.0, 1.0, self.n_quad + 1)
        w = np.full(self.n_quad + 1, 1.0 / self.n_quad)
        w[0] *= 0.5
        w[-1] *= 0.5
        self._quad_weights = w
        probe = np.linspace(1.0 / 256, 1.0, 256)
        kp = self.eval_packed(probe[:, None], probe[:, None])
        self._peak = float(np.max(np.abs(kp)))
        self._slope = float(np.max(np.abs(np.diff(kp, axis=1))) * 256)

    def eval_packed(self, a, b):
        wa = self.W(a[:, 0][:, None], self._z[None, :])
        wb = self.W(b[:, 0][:, None], self._z[None, :])
        return (wa * self._quad_weights[None, :]) @ wb.T

    def peak(self):
        return self._peak

    def shift_slope(self):
        return self._slope

    def to_json(self):
        j = {"type": "graphon_box", "n_quad": self.n_quad}
        j.update(self.W.to_json())
        return j


def kernel_from_json(data: dict) -> Kernel:
    """Inverse of ``Kernel.to_json``."""
    kind = data.get("type")
    if kind == "gaussian1d":
        return Gaussian1D(B=float(data["B"]))
    if kind == "gaussian2d":
        return Gaussian2D(sigma=float(data["sigma"]))
    if kind == "sinc":
        return Sinc(B=float(data["B"]))
    if kind == "sphere_poly":
        return SpherePoly(d=int(data["d"]))
    if kind == "graphon_box":
        return GraphonBox(
            W=graphon_mod.graphon_from_json(data),
            n_quad=int(data.get("n_quad", 2000)),
        )
    raise ValueError(f"unknown kernel type {kind!r}")
