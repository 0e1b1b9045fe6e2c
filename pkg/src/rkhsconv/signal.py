"""RKHS signals as weighted sums of kernel sections, and their algebra.

A signal is f = sum_v alpha_v k_v with k_v(x) = K(x, v).  Addition and
scaling act on the weights; the convolution of two signals composes their
centers under the domain operation and multiplies their weights:

    (sum_v a_v k_v) * (sum_u b_u k_u) = sum_{v,u} a_v b_u k_{v o u}

which is bilinear, associative, and has unit k_delta.  Inner products come
from the reproducing property <k_v, k_u> = K(u, v).

Signals are immutable; centers and weights live in packed numpy arrays so
that evaluation, Gram assembly, and convolution stay vectorized.  Repeated
convolutions multiply term counts, so ``convolve`` enforces a term cap and
``prune`` merges coincident centers and drops negligible weights.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy.signal import fftconvolve
from scipy.spatial import cKDTree

from .domain_ops import Center, DomainOp, Scalar, UnitInterval, pack_centers
from .errors import DomainMismatchError, TermBudgetError
from .kernels import Kernel

DEFAULT_MERGE_TOL = 1e-9
DEFAULT_DROP_TOL = 1e-12
DEFAULT_TERM_CAP = 50_000


_SWEEP_WINDOW_LIMIT = 4096
_NO_PAIRS = np.zeros((0, 2), dtype=int)


@lru_cache(maxsize=128)
def _triu_indices(n: int):
    return np.triu_indices(n, 1)


def _near_pairs(centers: np.ndarray, tol: float) -> np.ndarray:
    """Index pairs (i, j) with |c_i - c_j| <= tol (full center distance).

    A sweep along the first coordinate shortlists candidate windows: any
    qualifying pair differs by at most tol in every coordinate, so both
    members fall inside one maximal run of consecutive sorted first
    coordinates with gaps <= tol.  Windows are checked exactly by pairwise
    differencing; generic center sets produce no windows at all.
    """
    x = centers[:, 0]
    order = np.argsort(x, kind="stable")
    gaps_close = np.diff(x[order]) <= tol
    if not gaps_close.any():
        return _NO_PAIRS
    boundaries = np.flatnonzero(np.diff(gaps_close.astype(np.int8)))
    edges = np.concatenate(([0], boundaries + 1, [gaps_close.size]))
    chunks = []
    for a, b in zip(edges[:-1], edges[1:]):
        if not gaps_close[a]:
            continue
        members = order[a : b + 1]
        if len(members) > _SWEEP_WINDOW_LIMIT:
            sub_pairs = cKDTree(centers[members]).query_pairs(
                r=tol, output_type="ndarray"
            )
            if len(sub_pairs):
                chunks.append(members[sub_pairs])
            continue
        iu = _triu_indices(len(members))
        diff = centers[members[iu[0]]] - centers[members[iu[1]]]
        hit = (diff * diff).sum(axis=1) <= tol * tol
        if hit.any():
            chunks.append(np.column_stack((members[iu[0][hit]], members[iu[1][hit]])))
    return np.concatenate(chunks) if chunks else _NO_PAIRS


def merge_packed(centers: np.ndarray, tol: float):
    """Group packed centers lying within ``tol`` of each other.

    Returns ``(reps, inverse, roots)`` where ``reps`` indexes the first
    member of each group in storage order, ``inverse[i]`` is the group of
    row ``i``, and ``roots[i]`` its representative row.  Grouping is the
    transitive closure of the pairwise relation, so chains of nearby centers
    collapse into one group.
    """
    n = centers.shape[0]
    if n <= 1:
        ar = np.arange(n)
        return ar, ar.copy(), ar.copy()
    pairs = _near_pairs(centers, tol)
    if len(pairs) == 0:
        ar = np.arange(n)
        return ar, ar.copy(), ar.copy()

    parent = np.arange(n)

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in pairs:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    roots = np.array([find(i) for i in range(n)], dtype=int)
    reps, inverse = np.unique(roots, return_inverse=True)
    return reps, inverse, roots


@dataclass(frozen=True)
class PruneReport:
    """Bound on how much a prune can change pointwise evaluations.

    ``dropped_bound`` is exact: sum of |w| * sup|k| over dropped terms.
    ``merge_bound`` bounds the effect of snapping merged centers onto their
    representative, via the kernel's shift slope.
    """

    n_merged: int
    n_dropped: int
    dropped_bound: float
    merge_bound: float

    @property
    def evaluation_bound(self) -> float:
        return self.dropped_bound + self.merge_bound


class RkhsSignal:
    """An immutable kernel expansion tied to a kernel and a domain operation."""

    __slots__ = ("kernel", "op", "centers", "weights")

    def __init__(self, kernel: Kernel, op: DomainOp, centers: np.ndarray, weights: np.ndarray):
        if kernel.center_type is not op.center_type:
            raise DomainMismatchError(
                f"kernel domain {kernel.center_type.__name__} does not match "
                f"op domain {op.center_type.__name__}"
            )
        dim = kernel.center_type.dim
        centers = np.asarray(centers, dtype=float).reshape(-1, dim)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        if centers.shape[0] != weights.shape[0]:
            raise ValueError(
                f"{centers.shape[0]} centers vs {weights.shape[0]} weights"
            )
        if not (np.all(np.isfinite(centers)) and np.all(np.isfinite(weights))):
            raise ValueError("signal terms must be finite")
        if kernel.center_type is UnitInterval and centers.size:
            if centers.min() <= 0.0 or centers.max() > 1.0:
                raise DomainMismatchError("unit-interval centers must lie in (0, 1]")
        op.check_packed(centers)
        centers.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "kernel", kernel)
        object.__setattr__(self, "op", op)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "weights", weights)

    def __setattr__(self, name, value):
        raise AttributeError("RkhsSignal is immutable")

    # ---------------------------------------------------------------- build

    @classmethod
    def _unsafe(cls, kernel, op, centers: np.ndarray, weights: np.ndarray):
        """Construct without validation; callers must pass packed arrays that
        are already known to be finite, shaped, and in-domain (outputs of
        arithmetic on validated signals)."""
        sig = object.__new__(cls)
        centers.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(sig, "kernel", kernel)
        object.__setattr__(sig, "op", op)
        object.__setattr__(sig, "centers", centers)
        object.__setattr__(sig, "weights", weights)
        return sig

    @classmethod
    def from_terms(cls, kernel: Kernel, op: DomainOp, terms: Iterable[Tuple[Center, float]]):
        terms = list(terms)
        for center, _ in terms:
            kernel.check_center(center)
        centers = pack_centers([c for c, _ in terms]) if terms else np.zeros((0, kernel.center_type.dim))
        weights = np.array([w for _, w in terms], dtype=float)
        return cls(kernel, op, centers, weights)

    @classmethod
    def zero(cls, kernel: Kernel, op: DomainOp):
        return cls.from_terms(kernel, op, [])

    @classmethod
    def unit(cls, kernel: Kernel, op: DomainOp):
        """k_delta, the unit of the convolution."""
        return cls.from_terms(kernel, op, [(op.identity(), 1.0)])

    @property
    def n_terms(self) -> int:
        return self.centers.shape[0]

    @property
    def terms(self) -> list:
        make = self.kernel.center_type.from_coords
        return [(make(c), float(w)) for c, w in zip(self.centers, self.weights)]

    def _like(self, centers, weights) -> "RkhsSignal":
        return RkhsSignal(self.kernel, self.op, centers, weights)

    # ----------------------------------------------------------- evaluation

    def evaluate(self, x: Center) -> float:
        """f(x) = sum_v alpha_v K(x, v)."""
        self.kernel.check_center(x)
        return float(self.evaluate_packed(x.coords()[None, :])[0])

    def evaluate_packed(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at many packed points at once; returns shape (n_points,)."""
        points = np.asarray(points, dtype=float)
        if self.n_terms == 0:
            return np.zeros(points.shape[0])
        return self.kernel.eval_packed(points, self.centers) @ self.weights

    def evaluate_at_own_centers(self) -> np.ndarray:
        if self.n_terms == 0:
            return np.zeros(0)
        return self.kernel.gram(self.centers) @ self.weights

    # -------------------------------------------------------------- algebra

    def _check_same_space(self, other: "RkhsSignal", need_op: bool) -> None:
        if self.kernel != other.kernel:
            raise DomainMismatchError(
                f"kernels differ: {self.kernel!r} vs {other.kernel!r}"
            )
        if need_op and self.op != other.op:
            raise DomainMismatchError(f"domain ops differ: {self.op!r} vs {other.op!r}")

    def inner(self, other: "RkhsSignal") -> float:
        """<f, g> = sum_{v,u} alpha_v beta_u K(u, v)."""
        self._check_same_space(other, need_op=False)
        if self.n_terms == 0 or other.n_terms == 0:
            return 0.0
        g = self.kernel.eval_packed(self.centers, other.centers)
        return float(self.weights @ g @ other.weights)

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def add(self, other: "RkhsSignal") -> "RkhsSignal":
        self._check_same_space(other, need_op=True)
        out = RkhsSignal._unsafe(
            self.kernel,
            self.op,
            np.concatenate([self.centers, other.centers]),
            np.concatenate([self.weights, other.weights]),
        )
        return out.prune()

    @staticmethod
    def sum_of(signals: Sequence["RkhsSignal"]) -> "RkhsSignal":
        """Sum many signals with a single concatenation and prune."""
        signals = list(signals)
        if not signals:
            raise ValueError("sum_of needs at least one signal")
        first = signals[0]
        for s in signals[1:]:
            first._check_same_space(s, need_op=True)
        nonzero = [s for s in signals if s.n_terms]
        if not nonzero:
            return RkhsSignal.zero(first.kernel, first.op)
        out = RkhsSignal._unsafe(
            first.kernel,
            first.op,
            np.concatenate([s.centers for s in nonzero]),
            np.concatenate([s.weights for s in nonzero]),
        )
        return out.prune()

    def scale(self, c: float) -> "RkhsSignal":
        # scaling cannot create center coincidences, so only the drop step
        # of prune applies
        w = self.weights * float(c)
        keep = np.abs(w) >= DEFAULT_DROP_TOL
        if keep.all():
            return RkhsSignal._unsafe(self.kernel, self.op, self.centers, w)
        return RkhsSignal._unsafe(self.kernel, self.op, self.centers[keep], w[keep])

    def __add__(self, other):
        return self.add(other)

    def __sub__(self, other):
        return self.add(other.scale(-1.0))

    def __mul__(self, c):
        return self.scale(c)

    __rmul__ = __mul__

    def convolve(self, other: "RkhsSignal", term_cap: int = DEFAULT_TERM_CAP) -> "RkhsSignal":
        """The algebra product; centers compose, weights multiply pairwise."""
        self._check_same_space(other, need_op=True)
        n, m = self.n_terms, other.n_terms
        if n * m > term_cap:
            raise TermBudgetError(
                f"convolution would create {n * m} terms, above the cap {term_cap}; "
                "prune the inputs or raise the cap"
            )
        if n == 0 or m == 0:
            return RkhsSignal.zero(self.kernel, self.op)
        centers = self.op.compose_outer(self.centers, other.centers)
        weights = (self.weights[:, None] * other.weights[None, :]).reshape(-1)
        return RkhsSignal._unsafe(self.kernel, self.op, centers, weights).prune()

    # ---------------------------------------------------------------- prune

    def prune(
        self,
        merge_tol: float = DEFAULT_MERGE_TOL,
        drop_tol: float = DEFAULT_DROP_TOL,
    ) -> "RkhsSignal":
        return self.prune_with_report(merge_tol, drop_tol)[0]

    def prune_with_report(
        self,
        merge_tol: float = DEFAULT_MERGE_TOL,
        drop_tol: float = DEFAULT_DROP_TOL,
    ) -> Tuple["RkhsSignal", PruneReport]:
        """Merge centers closer than ``merge_tol`` and drop tiny weights.

        The representative of a merged group is its first term in storage
        order; the report bounds how far evaluations can move.
        """
        if merge_tol < 0 or drop_tol < 0:
            raise ValueError("prune tolerances must be nonnegative")
        n = self.n_terms
        if n == 0:
            return self, PruneReport(0, 0, 0.0, 0.0)

        reps, inverse, roots = merge_packed(self.centers, merge_tol)
        if len(reps) == n:
            keep = np.abs(self.weights) >= drop_tol if drop_tol > 0 else None
            if keep is None or keep.all():
                return self, PruneReport(0, 0, 0.0, 0.0)
            dropped_bound = float(np.abs(self.weights[~keep]).sum() * self.kernel.peak())
            out = RkhsSignal._unsafe(
                self.kernel, self.op, self.centers[keep], self.weights[keep]
            )
            return out, PruneReport(0, int((~keep).sum()), dropped_bound, 0.0)

        merged_weights = np.zeros(len(reps))
        np.add.at(merged_weights, inverse, self.weights)
        merged_centers = self.centers[reps]

        moved = roots != np.arange(n)
        n_merged = int(moved.sum())
        merge_bound = 0.0
        if n_merged:
            dists = np.linalg.norm(self.centers[moved] - self.centers[roots[moved]], axis=1)
            merge_bound = float(
                np.abs(self.weights[moved]) @ dists * self.kernel.shift_slope()
            )

        keep = np.abs(merged_weights) >= drop_tol if drop_tol > 0 else np.ones(len(reps), bool)
        n_dropped = int((~keep).sum())
        dropped_bound = float(np.abs(merged_weights[~keep]).sum() * self.kernel.peak())

        out = RkhsSignal._unsafe(self.kernel, self.op, merged_centers[keep], merged_weights[keep])
        return out, PruneReport(n_merged, n_dropped, dropped_bound, merge_bound)

    # ------------------------------------------------------------------ io

    def to_json(self) -> dict:
        return {
            "kernel": self.kernel.to_json(),
            "op": self.op.to_json(),
            "terms": [
                {"center": c.tolist(), "weight": float(w)}
                for c, w in zip(self.centers, self.weights)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "RkhsSignal":
        from .domain_ops import op_from_json
        from .kernels import kernel_from_json

        kernel = kernel_from_json(data["kernel"])
        op = op_from_json(data["op"])
        terms = data.get("terms", [])
        dim = kernel.center_type.dim
        centers = np.array([t["center"] for t in terms], dtype=float).reshape(-1, dim)
        weights = np.array([t["weight"] for t in terms], dtype=float)
        return cls(kernel, op, centers, weights)

    def __repr__(self):
        return (
            f"RkhsSignal({self.kernel!r}, {self.op!r}, n_terms={self.n_terms}, "
            f"norm~{self.norm():.4g})"
        )


# ---------------------------------------------------------------- grid fields


@dataclass(frozen=True)
class GridField:
    """Values of a signal on a uniform 1D or 2D lattice, row-major in x."""

    axes: Tuple[np.ndarray, ...]
    values: np.ndarray

    def __post_init__(self):
        axes = tuple(np.asarray(a, dtype=float) for a in self.axes)
        values = np.asarray(self.values, dtype=float)
        if len(axes) not in (1, 2):
            raise ValueError("grid must be 1D or 2D")
        for a in axes:
            if a.ndim != 1 or a.size < 1:
                raise ValueError("each axis must be a nonempty 1D array")
            if a.size > 1:
                steps = np.diff(a)
                if steps.min() <= 0 or np.ptp(steps) > 1e-9 * max(abs(steps[0]), 1.0):
                    raise ValueError("axes must be uniformly increasing")
        expected = tuple(a.size for a in axes)
        if values.shape != expected:
            raise ValueError(f"values shape {values.shape} != grid shape {expected}")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "values", values)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def spacing(self) -> Tuple[float, ...]:
        return tuple(float(a[1] - a[0]) if a.size > 1 else 1.0 for a in self.axes)

    def points(self) -> np.ndarray:
        """Lattice points as a packed (N, ndim) array, row-major."""
        if self.ndim == 1:
            return self.axes[0][:, None]
        xs, ys = self.axes
        xx, yy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def to_csv(self, path) -> None:
        header = ["x", "value"] if self.ndim == 1 else ["x", "y", "value"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            pts = self.points()
            for row, val in zip(pts, self.values.ravel()):
                writer.writerow([repr(float(c)) for c in row] + [repr(float(val))])

    @classmethod
    def from_csv(cls, path) -> "GridField":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ValueError(f"{path}: empty file")
            header = [h.strip().lower() for h in header]
            if header == ["x", "value"]:
                ndim = 1
            elif header == ["x", "y", "value"]:
                ndim = 2
            else:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [[float(c) for c in row] for row in reader if row]
        if not rows:
            raise ValueError(f"{path}: no data rows")
        data = np.array(rows)
        if ndim == 1:
            return cls((data[:, 0],), data[:, 1])
        xs = np.unique(data[:, 0])
        ys = np.unique(data[:, 1])
        if xs.size * ys.size != data.shape[0]:
            raise ValueError(f"{path}: rows do not form a full lattice")
        values = data[:, 2].reshape(xs.size, ys.size)
        return cls((xs, ys), values)


def grid_1d(start: float, stop: float, num: int) -> np.ndarray:
    return np.linspace(start, stop, num)


def evaluate_grid(f: RkhsSignal, axes: Sequence[np.ndarray]) -> GridField:
    """Rasterize a signal on a lattice; linear in the signal."""
    field = GridField(tuple(axes), np.zeros(tuple(len(a) for a in axes)))
    values = f.evaluate_packed(field.points()).reshape(field.values.shape)
    return GridField(field.axes, values)


def classic_convolve_grid(
    f: RkhsSignal,
    g: RkhsSignal,
    grid: np.ndarray,
    quad_halfwidth: float,
    quad_step: float,
) -> GridField:
    """Quadrature of the classical convolution (f * g)(x) = int f(t) g(x - t) dt.

    The integral is truncated to [x - quad_halfwidth, x + quad_halfwidth] and
    evaluated by the composite trapezoid rule.  This is the independent
    oracle for the sinc-kernel equivalence between the algebra product and
    the classical convolution; its accuracy is limited by the truncated
    tails, which decay like 1/quad_halfwidth for sinc expansions.
    """
    if f.kernel.center_type is not Scalar:
        raise DomainMismatchError("classical convolution oracle needs a 1D kernel")
    f._check_same_space(g, need_op=False)
    if quad_step <= 0:
        raise ValueError("quad_step must be positive")
    grid = np.asarray(grid, dtype=float)
    m = int(round(2.0 * quad_halfwidth / quad_step)) + 1
    offsets = -quad_halfwidth + quad_step * np.arange(m)
    gw = g.evaluate_packed(offsets[:, None])
    trap = np.full(m, quad_step)
    trap[0] *= 0.5
    trap[-1] *= 0.5
    gw = gw * trap

    uniform = grid.size > 1 and np.ptp(np.diff(grid)) < 1e-9 * quad_step
    if uniform and abs(grid[1] - grid[0] - quad_step) < 1e-9 * quad_step:
        tau = grid[0] - quad_halfwidth + quad_step * np.arange(grid.size + m - 1)
        fv = f.evaluate_packed(tau[:, None])
        full = fftconvolve(fv, gw, mode="full")
        values = full[m - 1 : m - 1 + grid.size]
    else:
        values = np.empty(grid.size)
        chunk = max(1, int(2e6) // m)
        for lo in range(0, grid.size, chunk):
            xs = grid[lo : lo + chunk]
            pts = (xs[:, None] - offsets[None, :]).reshape(-1, 1)
            fv = f.evaluate_packed(pts).reshape(len(xs), m)
            values[lo : lo + len(xs)] = fv @ gw
    return GridField((grid,), values)
