"""Two-layer convolutional network on RKHS signals.

The architecture follows a fixed two-layer shape: N1 first-layer filters,
an N2 x N1 grid of second-layer filters, with the pointwise nonlinearity
after each layer and feature sums in between:

    f_out = sum_i eta( sum_j w2[i][j] * eta( w1[j] * f ) )

Filters are signals in the same algebra as the data, so a forward pass is
nothing but convolutions, coefficient nonlinearities, and sums.  Nets are
immutable; parameter updates go through ``set_params``, which rebuilds the
net from a flat vector of term amplitudes and center coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .domain_ops import DomainOp, Planar, Scalar
from .errors import DomainMismatchError
from .kernels import Kernel
from .nonlinearity import apply_eta
from .signal import RkhsSignal


@dataclass(frozen=True)
class AlgNet:
    """Filter bank of the two-layer network; ``layer2[i][j]`` maps feature j to output i."""

    kernel: Kernel
    op: DomainOp
    layer1: Tuple[RkhsSignal, ...]
    layer2: Tuple[Tuple[RkhsSignal, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "layer1", tuple(self.layer1))
        object.__setattr__(self, "layer2", tuple(tuple(row) for row in self.layer2))
        if not self.layer1 or not self.layer2:
            raise ValueError("network needs at least one filter per layer")
        n1 = len(self.layer1)
        for row in self.layer2:
            if len(row) != n1:
                raise ValueError(
                    f"layer-2 rows must have {n1} filters, got {len(row)}"
                )
        for filt in self.layer1 + tuple(f for row in self.layer2 for f in row):
            if filt.kernel != self.kernel or filt.op != self.op:
                raise DomainMismatchError("all filters must share the net's kernel and op")

    @property
    def n1(self) -> int:
        return len(self.layer1)

    @property
    def n2(self) -> int:
        return len(self.layer2)

    def to_json(self) -> dict:
        def terms(sig):
            return [
                {"center": c.tolist(), "weight": float(w)}
                for c, w in zip(sig.centers, sig.weights)
            ]

        return {
            "kernel": self.kernel.to_json(),
            "op": self.op.to_json(),
            "N1": self.n1,
            "N2": self.n2,
            "layer1": [terms(f) for f in self.layer1],
            "layer2": [[terms(f) for f in row] for row in self.layer2],
        }

    @classmethod
    def from_json(cls, data: dict) -> "AlgNet":
        from .domain_ops import op_from_json
        from .kernels import kernel_from_json

        kernel = kernel_from_json(data["kernel"])
        op = op_from_json(data["op"])

        def sig(terms):
            dim = kernel.center_type.dim
            centers = np.array([t["center"] for t in terms], dtype=float).reshape(-1, dim)
            weights = np.array([t["weight"] for t in terms], dtype=float)
            return RkhsSignal(kernel, op, centers, weights)

        return cls(
            kernel,
            op,
            tuple(sig(t) for t in data["layer1"]),
            tuple(tuple(sig(t) for t in row) for row in data["layer2"]),
        )


@dataclass(frozen=True)
class ForwardTrace:
    """Intermediates of one forward pass, kept for derivative computations."""

    pre1: Tuple[RkhsSignal, ...]   # w1[j] * f
    h1: Tuple[RkhsSignal, ...]     # eta(pre1[j])
    g2: Tuple[RkhsSignal, ...]     # sum_j w2[i][j] * h1[j]
    eta2: Tuple[RkhsSignal, ...]   # eta(g2[i])
    out: RkhsSignal


def forward_layer(filt: RkhsSignal, signal: RkhsSignal) -> RkhsSignal:
    """One convolutional filtering step (convolution already prunes)."""
    return filt.convolve(signal)


def forward_trace(net: AlgNet, f: RkhsSignal) -> ForwardTrace:
    pre1 = tuple(forward_layer(w, f) for w in net.layer1)
    h1 = tuple(apply_eta(p) for p in pre1)
    g2 = tuple(
        RkhsSignal.sum_of([forward_layer(w, h) for w, h in zip(row, h1)])
        for row in net.layer2
    )
    eta2 = tuple(apply_eta(g) for g in g2)
    out = RkhsSignal.sum_of(eta2)
    return ForwardTrace(pre1, h1, g2, eta2, out)


def forward(net: AlgNet, f: RkhsSignal) -> RkhsSignal:
    return forward_trace(net, f).out


# ------------------------------------------------------------- flat parameters


def _filters_in_order(net: AlgNet):
    yield from net.layer1
    for row in net.layer2:
        yield from row


def collect_params(net: AlgNet) -> np.ndarray:
    """Flatten the filter bank: layer-1 filters then layer-2 rows, row-major;
    within a filter, each term contributes its weight followed by its center
    coordinates."""
    chunks = []
    for filt in _filters_in_order(net):
        block = np.column_stack([filt.weights[:, None], filt.centers])
        chunks.append(block.reshape(-1))
    return np.concatenate(chunks) if chunks else np.zeros(0)


def center_coordinate_mask(net: AlgNet) -> np.ndarray:
    """Boolean mask over the flat vector, True at center-coordinate entries."""
    dim = net.kernel.center_type.dim
    mask = []
    for filt in _filters_in_order(net):
        per_term = np.array([False] + [True] * dim)
        mask.append(np.tile(per_term, filt.n_terms))
    return np.concatenate(mask) if mask else np.zeros(0, bool)


def set_params(net: AlgNet, params: np.ndarray) -> AlgNet:
    """Rebuild the net from a flat vector; inverse of ``collect_params``."""
    params = np.asarray(params, dtype=float)
    dim = net.kernel.center_type.dim
    stride = 1 + dim
    expected = sum(f.n_terms for f in _filters_in_order(net)) * stride
    if params.size != expected:
        raise ValueError(f"expected {expected} parameters, got {params.size}")

    pos = 0

    def rebuild(filt):
        nonlocal pos
        block = params[pos : pos + filt.n_terms * stride].reshape(-1, stride)
        pos += filt.n_terms * stride
        return RkhsSignal(net.kernel, net.op, block[:, 1:], block[:, 0])

    layer1 = tuple(rebuild(f) for f in net.layer1)
    layer2 = tuple(tuple(rebuild(f) for f in row) for row in net.layer2)
    return AlgNet(net.kernel, net.op, layer1, layer2)


def init_net(
    kernel: Kernel,
    op: DomainOp,
    n1: int = 2,
    n2: int = 2,
    terms_per_filter: int = 3,
    amplitude: float = 1.0,
    jitter: float = 0.1,
    rng: np.random.Generator | None = None,
) -> AlgNet:
    """Fresh filter bank: every term has the given amplitude and sits at the
    domain identity, plus a small uniform center jitter to break the
    permutation symmetry of identically initialized filters.

    Jitter applies to scalar and planar domains; other domains start exactly
    at the identity.
    """
    rng = rng or np.random.default_rng()
    identity = op.identity().coords()

    def fresh():
        centers = np.tile(identity, (terms_per_filter, 1))
        if op.center_type in (Scalar, Planar) and jitter > 0:
            centers = centers + rng.uniform(-jitter, jitter, size=centers.shape)
        weights = np.full(terms_per_filter, float(amplitude))
        return RkhsSignal(kernel, op, centers, weights)

    layer1 = tuple(fresh() for _ in range(n1))
    layer2 = tuple(tuple(fresh() for _ in range(n1)) for _ in range(n2))
    return AlgNet(kernel, op, layer1, layer2)
