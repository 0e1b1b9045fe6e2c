"""Kernel-center domains and their monoid/group composition laws.

Signals in this package are weighted sums of kernel sections ``k_v``; the
convolution of two such signals composes their centers with a binary
operation that is associative and has a two-sided identity.  This module
defines the center variants (scalars, planar points, unit-interval points,
3x3 rotations) and the composition laws used on them.

Centers are immutable values.  Hot paths never touch these objects one by
one: every variant packs into a flat float vector (``coords``) and each
operation exposes a vectorized ``compose_packed`` on arrays of packed
coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainMismatchError

_ROT_ORTHO_TOL = 1e-10


@dataclass(frozen=True)
class Scalar:
    """A point on the real line."""

    x: float

    dim = 1

    def coords(self):
        return np.array([self.x], dtype=float)

    @staticmethod
    def from_coords(c):
        return Scalar(float(c[0]))


@dataclass(frozen=True)
class Planar:
    """A point in the plane."""

    x: float
    y: float

    dim = 2

    def coords(self):
        return np.array([self.x, self.y], dtype=float)

    @staticmethod
    def from_coords(c):
        return Planar(float(c[0]), float(c[1]))


@dataclass(frozen=True)
class UnitInterval:
    """A point in the half-open interval (0, 1]."""

    t: float

    dim = 1

    def __post_init__(self):
        if not (0.0 < self.t <= 1.0):
            raise DomainMismatchError(
                f"unit-interval center must lie in (0, 1], got {self.t}"
            )

    def coords(self):
        return np.array([self.t], dtype=float)

    @staticmethod
    def from_coords(c):
        return UnitInterval(float(c[0]))


class Rotation3:
    """A rotation of R^3, stored as an orthogonal matrix with det +1.

    Sphere centers are stored as rotations rather than surface points; a
    rotation R stands for the sphere point R @ e0 with base point
    e0 = (0, 0, 1).  The lift from points to rotations is not unique, so
    callers that care about a specific rotation must construct it themselves.
    """

    dim = 9

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.array(matrix, dtype=float)
        if m.shape != (3, 3):
            raise DomainMismatchError(f"rotation matrix must be 3x3, got {m.shape}")
        err = np.max(np.abs(m.T @ m - np.eye(3)))
        det = np.linalg.det(m)
        if err > _ROT_ORTHO_TOL or abs(det - 1.0) > _ROT_ORTHO_TOL:
            raise DomainMismatchError(
                f"matrix is not a rotation: |R^T R - I|_max = {err:.2e}, det = {det:.12f}"
            )
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def __setattr__(self, name, value):
        raise AttributeError("Rotation3 is immutable")

    def coords(self):
        return self.matrix.reshape(9).copy()

    @staticmethod
    def from_coords(c):
        return Rotation3(np.asarray(c, dtype=float).reshape(3, 3))

    def base_point(self):
        """The sphere point this rotation represents: R @ (0, 0, 1)."""
        return self.matrix[:, 2].copy()

    def __eq__(self, other):
        return isinstance(other, Rotation3) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self):
        return hash(self.matrix.tobytes())

    def __repr__(self):
        return f"Rotation3({self.matrix.tolist()})"


Center = Union[Scalar, Planar, UnitInterval, Rotation3]


def rotation_about_z(angle_rad: float) -> Rotation3:
    c, s = np.cos(angle_rad), np.sin(angle_rad)
    return Rotation3([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def center_distance(a: Center, b: Center) -> float:
    """Distance used for merging and test metrics.

    Euclidean for scalar/planar/unit-interval centers, Frobenius distance of
    the matrices (chordal) for rotations.
    """
    if type(a) is not type(b):
        raise DomainMismatchError(f"cannot compare {type(a).__name__} with {type(b).__name__}")
    return float(np.linalg.norm(a.coords() - b.coords()))


def pack_centers(centers) -> np.ndarray:
    """Stack centers into an (n, dim) coordinate array."""
    centers = list(centers)
    if not centers:
        return np.zeros((0, 1))
    first = type(centers[0])
    for c in centers:
        if type(c) is not first:
            raise DomainMismatchError("mixed center variants in one sequence")
    return np.array([c.coords() for c in centers])


class DomainOp:
    """Base class for the composition law on centers.

    Subclasses define ``center_type``, the identity element, composition of
    two centers, and a vectorized composition on packed coordinate arrays.
    All instances are stateless values, safe to share across threads.
    """

    center_type: type
    name: str

    def identity(self) -> Center:
        raise NotImplementedError

    def compose(self, u: Center, v: Center) -> Center:
        """Return the center of ``k_u * k_v``.

        The first argument comes from the left factor of the convolution,
        the second from the right factor.
        """
        self.check_center(u)
        self.check_center(v)
        out = self.compose_packed(u.coords()[None, :], v.coords()[None, :])
        return self.center_type.from_coords(out[0])

    def compose_packed(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Vectorized compose on equal-length (n, dim) coordinate arrays."""
        raise NotImplementedError

    def compose_outer(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """All-pairs composition: (n, d) x (m, d) -> (n*m, d), row-major in a."""
        n, m = a.shape[0], b.shape[0]
        aa = np.repeat(a, m, axis=0)
        bb = np.tile(b, (n, 1))
        return self.compose_packed(aa, bb)

    def check_center(self, c: Center) -> None:
        if type(c) is not self.center_type:
            raise DomainMismatchError(
                f"{self.name} composes {self.center_type.__name__} centers, "
                f"got {type(c).__name__}"
            )

    def check_packed(self, a: np.ndarray) -> None:
        """Validate packed coordinates (range checks where the law needs them)."""

    def to_json(self) -> dict:
        return {"op": self.name}

    def __eq__(self, other):
        return type(self) is type(other) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(tuple(sorted(self.to_json().items())))

    def __repr__(self):
        return f"{type(self).__name__}()"


class Translation1D(DomainOp):
    """Real line under addition; identity 0."""

    center_type = Scalar
    name = "translation_1d"

    def identity(self):
        return Scalar(0.0)

    def compose_packed(self, a, b):
        return a + b


class Translation2D(DomainOp):
    """Plane under componentwise addition; identity (0, 0)."""

    center_type = Planar
    name = "translation_2d"

    def identity(self):
        return Planar(0.0, 0.0)

    def compose_packed(self, a, b):
        return a + b


class ComponentwiseProduct2D(DomainOp):
    """Plane under componentwise multiplication; identity (1, 1)."""

    center_type = Planar
    name = "componentwise_product_2d"

    def identity(self):
        return Planar(1.0, 1.0)

    def compose_packed(self, a, b):
        return a * b


class CyclicSum(DomainOp):
    """Cyclic addition on [0, sup]: v + u, minus sup when the sum leaves [0, sup].

    Inputs outside [0, sup] are rejected rather than reduced; the single
    subtraction is enough because in-range inputs sum to at most 2*sup.
    """

    center_type = Scalar
    name = "cyclic_sum"

    def __init__(self, sup: float):
        if not sup > 0:
            raise ValueError(f"cyclic sum needs sup > 0, got {sup}")
        self.sup = float(sup)

    def identity(self):
        return Scalar(0.0)

    def check_packed(self, a):
        if a.size and (a.min() < 0.0 or a.max() > self.sup):
            bad = a[(a[:, 0] < 0.0) | (a[:, 0] > self.sup)][0, 0]
            raise DomainMismatchError(
                f"cyclic-sum center {bad} outside [0, {self.sup}]"
            )

    def compose_packed(self, a, b):
        self.check_packed(a)
        self.check_packed(b)
        s = a + b
        return np.where(s > self.sup, s - self.sup, s)

    def to_json(self):
        return {"op": self.name, "sup": self.sup}

    def __repr__(self):
        return f"CyclicSum(sup={self.sup})"


class UnitIntervalProduct(DomainOp):
    """(0, 1] under multiplication; identity 1."""

    center_type = UnitInterval
    name = "unit_interval_product"

    def identity(self):
        return UnitInterval(1.0)

    def compose_packed(self, a, b):
        return a * b


class ModularSum01(DomainOp):
    """(0, 1] under addition mod 1, with representative 0 mapped to 1.

    The identity is the boundary representative 1 (congruent to 0), which
    keeps every composed center inside (0, 1].
    """

    center_type = UnitInterval
    name = "modular_sum_01"

    def identity(self):
        return UnitInterval(1.0)

    def compose_packed(self, a, b):
        s = np.mod(a + b, 1.0)
        return np.where(s <= 0.0, 1.0, s)


class SphereRotation(DomainOp):
    """SO(3) composition for sphere centers stored as rotations.

    ``compose(u, v)`` returns the rotation R_v @ R_u, so that the base point
    of ``u`` is rotated by ``v``; this is the composition under which
    ``k_u * k_v`` moves ``u``'s sphere point according to ``v``.
    """

    center_type = Rotation3
    name = "sphere_rotation"

    def identity(self):
        return Rotation3(np.eye(3))

    def compose_packed(self, a, b):
        ra = a.reshape(-1, 3, 3)
        rb = b.reshape(-1, 3, 3)
        return np.matmul(rb, ra).reshape(-1, 9)


_OP_REGISTRY = {
    cls.name: cls
    for cls in (
        Translation1D,
        Translation2D,
        ComponentwiseProduct2D,
        UnitIntervalProduct,
        ModularSum01,
        SphereRotation,
    )
}


def op_from_json(data: dict) -> DomainOp:
    """Inverse of ``DomainOp.to_json``."""
    name = data.get("op")
    if name == CyclicSum.name:
        return CyclicSum(sup=float(data["sup"]))
    try:
        return _OP_REGISTRY[name]()
    except KeyError:
        raise ValueError(f"unknown domain op {name!r}") from None
