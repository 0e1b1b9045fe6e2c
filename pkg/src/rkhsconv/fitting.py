"""Kernel-ridge construction of an RKHS signal from scattered samples.

Given samples (v_i, f_i), the fitted signal keeps the sample points as
kernel centers and solves for the coefficient vector

    alpha = (K^T K + lambda K)^+  K f

with K the Gram matrix of the sample points and ^+ the Moore-Penrose
pseudo-inverse, computed through the eigendecomposition of the symmetric
matrix with a relative cutoff on small eigenvalues.  Note this formula
minimizes |K alpha - f|^2 + lambda alpha^T K alpha; it is implemented as
written even though it is usually quoted as the solution of the
lambda |alpha|^2 - regularized problem, which it matches only at lambda = 0.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .domain_ops import Center, DomainOp, Planar, Scalar, pack_centers
from .errors import DegenerateKernelError, SampleValidationError
from .kernels import Kernel
from .signal import RkhsSignal

PINV_CUTOFF = 1e-12
DUPLICATE_TOL = 1e-9


@dataclass(frozen=True)
class SampleSet:
    """Scattered measurement locations and values; units are metadata only."""

    points: Tuple[Center, ...]
    values: np.ndarray
    units: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        points = tuple(self.points)
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if len(points) != values.size:
            raise SampleValidationError(
                f"{len(points)} points but {values.size} values"
            )
        if len(points) == 0:
            raise SampleValidationError("no samples")
        if not np.all(np.isfinite(values)):
            bad = np.nonzero(~np.isfinite(values))[0].tolist()
            raise SampleValidationError(f"non-finite values at rows {bad}")
        packed = pack_centers(points)
        if len(points) > 1:
            from scipy.spatial import cKDTree

            pairs = cKDTree(packed).query_pairs(r=DUPLICATE_TOL)
            if pairs:
                listed = sorted(tuple(sorted(p)) for p in pairs)
                raise SampleValidationError(
                    f"duplicate sample points at index pairs {listed}"
                )
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.points)


def ridge_coefficients(gram: np.ndarray, values: np.ndarray, lam: float) -> np.ndarray:
    """alpha = (K^T K + lambda K)^+ K f with an eigendecomposition pseudo-inverse."""
    if lam < 0:
        raise ValueError(f"regularization must be nonnegative, got {lam}")
    k = np.asarray(gram, dtype=float)
    if np.max(np.abs(k)) == 0.0:
        raise DegenerateKernelError("Gram matrix is identically zero")
    a = k.T @ k + lam * k
    a = 0.5 * (a + a.T)
    eigvals, eigvecs = np.linalg.eigh(a)
    keep = eigvals > PINV_CUTOFF * eigvals.max()
    inv = np.zeros_like(eigvals)
    inv[keep] = 1.0 / eigvals[keep]
    return eigvecs @ (inv * (eigvecs.T @ (k @ values)))


def fit_ridge(samples: SampleSet, kernel: Kernel, op: DomainOp, lam: float) -> RkhsSignal:
    """Fit a signal whose centers are the sample points."""
    for p in samples.points:
        kernel.check_center(p)
    packed = pack_centers(samples.points)
    gram = kernel.gram(packed)
    alpha = ridge_coefficients(gram, samples.values, lam)
    return RkhsSignal(kernel, op, packed, alpha)


def load_samples_csv(path) -> SampleSet:
    """Read samples from a CSV with header ``x,value`` or ``x,y,value``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SampleValidationError(f"{path}: empty file")
        header = [h.strip().lower() for h in header]
        if header == ["x", "value"]:
            ndim = 1
        elif header == ["x", "y", "value"]:
            ndim = 2
        else:
            raise SampleValidationError(f"{path}: unexpected header {header}")
        points: List[Center] = []
        values: List[float] = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != ndim + 1:
                raise SampleValidationError(
                    f"{path}:{lineno}: expected {ndim + 1} columns, got {len(row)}"
                )
            try:
                nums = [float(c) for c in row]
            except ValueError as exc:
                raise SampleValidationError(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(nums)):
                raise SampleValidationError(f"{path}:{lineno}: non-finite entry")
            points.append(Scalar(nums[0]) if ndim == 1 else Planar(nums[0], nums[1]))
            values.append(nums[-1])
    if not points:
        raise SampleValidationError(f"{path}: no samples")
    return SampleSet(tuple(points), np.array(values))


def save_samples_csv(path, samples: SampleSet) -> None:
    ndim = samples.points[0].dim
    header = ["x", "value"] if ndim == 1 else ["x", "y", "value"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for p, v in zip(samples.points, samples.values):
            writer.writerow([repr(float(c)) for c in p.coords()] + [repr(float(v))])
