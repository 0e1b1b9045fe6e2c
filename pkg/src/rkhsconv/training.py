"""Loss, Frechet derivatives of the network map, and the two optimizers.

The quadratic loss of a net on a pair (f, r) is l = 0.5 |r - F(w)|_H^2.
Its derivative along a bank-shaped perturbation d_T is

    D_l(w){d_T} = -< D_F(w){d_T}, r - F(w) >_H

with D_F assembled from the layer blocks: for a first-layer filter the
derivative threads d * f through the nonlinearity derivative of its own
layer, the corresponding second-layer filters, and the nonlinearity
derivative at the second-layer sums; for a second-layer filter it is the
nonlinearity derivative applied to d convolved with the cached first-layer
feature.  All derivative evaluations reuse the intermediates of one forward
pass.

Two optimizers are provided.  The functional steepest-descent iteration
solves D_F(w){d} = r - F(w) with a conjugate-gradient loop in H and
backtracks the step length with an Armijo test.  Because each operator
application convolves the iterate with the filter bank, term counts grow
geometrically with CG iterations; the functional path is meant for small
instances (it raises the signal term cap error when exceeded), while the
parametric optimizer (Adam) is the workhorse.  Adam acts on the flat vector
of term amplitudes and center coordinates: amplitude gradients are exact
directional derivatives along one-hot directions, center gradients are
central finite differences of the total loss.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np

from .algnn import (
    AlgNet,
    ForwardTrace,
    collect_params,
    forward_trace,
    set_params,
)
from .nonlinearity import apply_eta, eta_frechet, eta_jvp
from .signal import RkhsSignal

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
CG_BREAKDOWN_FACTOR = 1e-14
MAX_BACKTRACKS = 60


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "adam"
    iterations: int = 2000
    learning_rate: float = 0.01
    cg_tol: float = 1e-6
    cg_max_iter: int = 200
    wolfe_alpha_bar: float = 1.0
    wolfe_rho: float = 0.5
    wolfe_c: float = 1e-4
    fd_step_centers: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("adam", "steepest_descent"):
            raise ValueError(f"unknown training mode {self.mode!r}")
        if not (0.0 < self.wolfe_rho < 1.0 and 0.0 < self.wolfe_c < 1.0):
            raise ValueError("wolfe_rho and wolfe_c must lie in (0, 1)")
        if self.wolfe_alpha_bar <= 0:
            raise ValueError("wolfe_alpha_bar must be positive")
        if self.iterations < 0 or self.cg_max_iter < 1:
            raise ValueError("iteration counts must be positive")

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "iterations": self.iterations,
            "learning_rate": self.learning_rate,
            "cg_tol": self.cg_tol,
            "cg_max_iter": self.cg_max_iter,
            "wolfe_alpha_bar": self.wolfe_alpha_bar,
            "wolfe_rho": self.wolfe_rho,
            "wolfe_c": self.wolfe_c,
            "fd_step_centers": self.fd_step_centers,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TrainConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass(frozen=True)
class Direction:
    """A filter-bank-shaped perturbation: one signal per filter."""

    layer1: Tuple[RkhsSignal, ...]
    layer2: Tuple[Tuple[RkhsSignal, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "layer1", tuple(self.layer1))
        object.__setattr__(self, "layer2", tuple(tuple(r) for r in self.layer2))

    @classmethod
    def zero_like(cls, net: AlgNet) -> "Direction":
        z = RkhsSignal.zero(net.kernel, net.op)
        return cls(
            tuple(z for _ in net.layer1),
            tuple(tuple(z for _ in row) for row in net.layer2),
        )

    @classmethod
    def broadcast(cls, signal: RkhsSignal, net: AlgNet) -> "Direction":
        """The same signal in every block."""
        return cls(
            tuple(signal for _ in net.layer1),
            tuple(tuple(signal for _ in row) for row in net.layer2),
        )

    @classmethod
    def one_hot(cls, net: AlgNet, block: tuple, signal: RkhsSignal) -> "Direction":
        """``signal`` in the named block, zero elsewhere; block is (1, j) or (2, i, j)."""
        d = cls.zero_like(net)
        if block[0] == 1:
            layer1 = list(d.layer1)
            layer1[block[1]] = signal
            return replace(d, layer1=tuple(layer1))
        layer2 = [list(row) for row in d.layer2]
        layer2[block[1]][block[2]] = signal
        return replace(d, layer2=tuple(tuple(r) for r in layer2))

    def blocks(self):
        for j, sig in enumerate(self.layer1):
            yield (1, j), sig
        for i, row in enumerate(self.layer2):
            for j, sig in enumerate(row):
                yield (2, i, j), sig

    def scale(self, c: float) -> "Direction":
        return Direction(
            tuple(s.scale(c) for s in self.layer1),
            tuple(tuple(s.scale(c) for s in row) for row in self.layer2),
        )

    def norm(self) -> float:
        """Aggregate norm across all blocks: sqrt of the summed squared H norms."""
        sq = sum(s.inner(s) for _, s in self.blocks())
        return float(np.sqrt(max(sq, 0.0)))


def matches_net(direction: Direction, net: AlgNet) -> bool:
    return len(direction.layer1) == net.n1 and all(
        len(row) == net.n1 for row in direction.layer2
    ) and len(direction.layer2) == net.n2


# ------------------------------------------------------------------ loss


def loss(net: AlgNet, f: RkhsSignal, r: RkhsSignal) -> float:
    """0.5 |r - F(w)|_H^2."""
    res = r - forward_trace(net, f).out
    return 0.5 * res.inner(res)


def total_loss(net: AlgNet, dataset: Sequence[Tuple[RkhsSignal, RkhsSignal]]) -> float:
    return sum(loss(net, f, r) for f, r in dataset)


# ---------------------------------------------------------- block derivatives


def conv_frechet(f: RkhsSignal, d: RkhsSignal) -> RkhsSignal:
    """Derivative of the linear map w -> w * f along d: exactly d * f."""
    return d.convolve(f)


def frechet_F1(
    net: AlgNet,
    f: RkhsSignal,
    j: int,
    d: RkhsSignal,
    trace: ForwardTrace | None = None,
) -> RkhsSignal:
    """Derivative of the full forward map with respect to first-layer filter j.

    The inner nonlinearity derivative is taken at w1[j] * f and the outer
    ones at the true second-layer sums g2[i]; both come from the forward
    trace.
    """
    trace = trace if trace is not None else forward_trace(net, f)
    inner = eta_frechet(trace.pre1[j], conv_frechet(f, d))
    out = RkhsSignal.zero(net.kernel, net.op)
    for i in range(net.n2):
        out = out.add(eta_frechet(trace.g2[i], net.layer2[i][j].convolve(inner)))
    return out


def frechet_F2(
    net: AlgNet,
    f: RkhsSignal,
    i: int,
    j: int,
    d: RkhsSignal,
    trace: ForwardTrace | None = None,
) -> RkhsSignal:
    """Derivative with respect to second-layer filter (i, j)."""
    trace = trace if trace is not None else forward_trace(net, f)
    return eta_frechet(trace.g2[i], conv_frechet(trace.h1[j], d))


def forward_jvp(
    net: AlgNet,
    f: RkhsSignal,
    d_T: Direction,
    trace: ForwardTrace | None = None,
    margin_sink: list | None = None,
) -> Tuple[RkhsSignal, RkhsSignal]:
    """Forward pass carrying the tangent along d_T through every layer.

    Every nonlinearity is evaluated on the union of its argument's and its
    tangent's center sets, which mirrors the representations the actual
    forward produces for any nonzero step along d_T.  Returns the pair
    (padded forward value, directional derivative); the value coincides with
    the plain forward whenever the direction introduces no new centers.
    """
    if not matches_net(d_T, net):
        raise ValueError("direction shape does not match the net")
    trace = trace if trace is not None else forward_trace(net, f)
    zero = RkhsSignal.zero(net.kernel, net.op)

    h_pairs = []
    for j in range(net.n1):
        tan = conv_frechet(f, d_T.layer1[j]) if d_T.layer1[j].n_terms else zero
        h_pairs.append(eta_jvp(trace.pre1[j], tan, margin_sink))

    out_val, out_tan = zero, zero
    for i in range(net.n2):
        g_val, g_tan = zero, zero
        for j in range(net.n1):
            h_val, h_tan = h_pairs[j]
            g_val = g_val.add(net.layer2[i][j].convolve(h_val))
            if h_tan.n_terms:
                g_tan = g_tan.add(net.layer2[i][j].convolve(h_tan))
            if d_T.layer2[i][j].n_terms:
                g_tan = g_tan.add(d_T.layer2[i][j].convolve(h_val))
        v, t = eta_jvp(g_val, g_tan, margin_sink)
        out_val = out_val.add(v)
        out_tan = out_tan.add(t)
    return out_val, out_tan


def relu_argument_margin(net: AlgNet, f: RkhsSignal, d_T: Direction) -> float:
    """Smallest |argument| any relu sees along the tangent pass for d_T.

    Finite-difference checks of the derivatives are only meaningful when
    this margin dominates the probe step, since crossing a kink breaks the
    first-order expansion.
    """
    sink: list = []
    forward_jvp(net, f, d_T, margin_sink=sink)
    return min(sink) if sink else float("inf")


def frechet_full(
    net: AlgNet,
    f: RkhsSignal,
    d_T: Direction,
    trace: ForwardTrace | None = None,
) -> RkhsSignal:
    """Derivative of the forward map along a full direction.

    For one-hot directions this reduces exactly to the corresponding
    ``frechet_F1`` / ``frechet_F2`` block; for multi-block directions the
    blocks are threaded through one forward tangent pass so that all
    nonlinearity paddings are shared, matching central finite differences of
    the actual forward.
    """
    return forward_jvp(net, f, d_T, trace)[1]


def loss_frechet(
    net: AlgNet,
    f: RkhsSignal,
    r: RkhsSignal,
    d_T: Direction,
    trace: ForwardTrace | None = None,
) -> float:
    """D_l(w){d_T} = -< D_F(w){d_T}, r - F(w) >.

    The residual uses the padded forward value from the tangent pass, which
    is what a vanishing step along d_T converges to.
    """
    out_val, out_tan = forward_jvp(net, f, d_T, trace)
    residual = r - out_val
    return -out_tan.inner(residual)


# ------------------------------------------------------------ direction solve


@dataclass(frozen=True)
class CGResult:
    direction: Direction
    residual_norm: float
    iterations: int
    breakdown: bool


def _cg_in_h(apply_a, b: RkhsSignal, cfg: TrainConfig):
    """Conjugate-gradient loop in H for apply_a(d) = b.

    The operator need not be symmetric positive definite; the loop stops
    early (breakdown) when the curvature <p, A p> collapses, returning the
    least-residual iterate found so far.
    """
    zero = RkhsSignal.zero(b.kernel, b.op)
    d = zero
    s = b
    s_norm2 = s.inner(s)
    if np.sqrt(max(s_norm2, 0.0)) < cfg.cg_tol:
        return d, 0, False
    p = s
    breakdown = False
    iterations = 0
    for k in range(cfg.cg_max_iter):
        ap = apply_a(p)
        pap = p.inner(ap)
        if pap <= CG_BREAKDOWN_FACTOR * p.inner(p):
            breakdown = True
            break
        gamma = s_norm2 / pap
        d = d.add(p.scale(gamma))
        s = s.add(ap.scale(-gamma))
        iterations = k + 1
        s_new_norm2 = s.inner(s)
        if np.sqrt(max(s_new_norm2, 0.0)) < cfg.cg_tol:
            break
        p = s.add(p.scale(s_new_norm2 / s_norm2))
        s_norm2 = s_new_norm2
    return d, iterations, breakdown


def cg_solve_direction(
    net: AlgNet,
    f: RkhsSignal,
    r: RkhsSignal,
    cfg: TrainConfig,
) -> CGResult:
    """Solve D_F(w){d} = r - F(w) for a direction.

    The iteration runs on single signals in H (every block of the direction
    carries the same signal, which is how the operator maps H into H); the
    returned residual is recomputed from the final iterate rather than taken
    from the recurrence.
    """
    trace = forward_trace(net, f)
    b = r - trace.out

    def apply_a(p: RkhsSignal) -> RkhsSignal:
        return frechet_full(net, f, Direction.broadcast(p, net), trace)

    d, iterations, breakdown = _cg_in_h(apply_a, b, cfg)
    true_res = b - apply_a(d) if d.n_terms else b
    return CGResult(Direction.broadcast(d, net), true_res.norm(), iterations, breakdown)


# -------------------------------------------------------------- line search


def apply_direction(net: AlgNet, d_T: Direction, alpha: float) -> AlgNet:
    """w + alpha * d_T: direction terms are appended to each filter and pruned."""
    if not matches_net(d_T, net):
        raise ValueError("direction shape does not match the net")
    layer1 = tuple(w.add(d.scale(alpha)) for w, d in zip(net.layer1, d_T.layer1))
    layer2 = tuple(
        tuple(w.add(d.scale(alpha)) for w, d in zip(wrow, drow))
        for wrow, drow in zip(net.layer2, d_T.layer2)
    )
    return AlgNet(net.kernel, net.op, layer1, layer2)


def wolfe_backtrack(
    net: AlgNet,
    f: RkhsSignal,
    r: RkhsSignal,
    d_T: Direction,
    cfg: TrainConfig,
) -> float:
    """Armijo backtracking: first alpha_bar * rho^m passing the decrease test.

    Accepts alpha when l(w + alpha d) <= l(w) - c alpha <D_F(w){d}, r - F(w)>;
    returns 0 after sixty shrinkages (stall).  ``d_T`` is expected to be
    normalized to unit aggregate norm.
    """
    trace = forward_trace(net, f)
    base = loss(net, f, r)
    out_val, out_tan = forward_jvp(net, f, d_T, trace)
    descent = out_tan.inner(r - out_val)
    alpha = cfg.wolfe_alpha_bar
    for _ in range(MAX_BACKTRACKS):
        cand = apply_direction(net, d_T, alpha)
        if loss(cand, f, r) <= base - cfg.wolfe_c * alpha * descent:
            return alpha
        alpha *= cfg.wolfe_rho
    return 0.0


# ---------------------------------------------------- functional optimization


def steepest_descent_train(
    net: AlgNet,
    dataset: Sequence[Tuple[RkhsSignal, RkhsSignal]],
    cfg: TrainConfig,
) -> Tuple[AlgNet, np.ndarray]:
    """Functional steepest descent with CG directions and Armijo steps.

    Multi-pair datasets use the averaged residual and averaged operator in
    the CG solve and the summed loss in the line search.  Training stops
    when the residual vanishes, CG returns a null direction, or the line
    search stalls; accepted steps strictly decrease the total loss.
    """
    if not dataset:
        raise ValueError("dataset must be nonempty")
    n = len(dataset)
    losses: List[float] = []
    for _ in range(cfg.iterations):
        traces = [forward_trace(net, f) for f, _ in dataset]
        residuals = [r - t.out for (_, r), t in zip(dataset, traces)]
        total = 0.5 * sum(res.inner(res) for res in residuals)
        losses.append(total)

        b = RkhsSignal.zero(net.kernel, net.op)
        for res in residuals:
            b = b.add(res.scale(1.0 / n))
        if b.norm() < cfg.cg_tol:
            break

        def apply_a(p: RkhsSignal) -> RkhsSignal:
            acc = RkhsSignal.zero(net.kernel, net.op)
            bd = Direction.broadcast(p, net)
            for (f, _), tr in zip(dataset, traces):
                acc = acc.add(frechet_full(net, f, bd, tr).scale(1.0 / n))
            return acc

        d_sig, _, _ = _cg_in_h(apply_a, b, cfg)
        d_T = Direction.broadcast(d_sig, net)
        nrm = d_T.norm()
        if nrm == 0.0:
            break
        d_T = d_T.scale(1.0 / nrm)

        descent = 0.0
        for (f, r), tr in zip(dataset, traces):
            out_val, out_tan = forward_jvp(net, f, d_T, tr)
            descent += out_tan.inner(r - out_val)
        if descent <= 0.0:
            break

        alpha = cfg.wolfe_alpha_bar
        accepted = None
        for _ in range(MAX_BACKTRACKS):
            cand = apply_direction(net, d_T, alpha)
            if total_loss(cand, dataset) <= total - cfg.wolfe_c * alpha * descent:
                accepted = cand
                break
            alpha *= cfg.wolfe_rho
        if accepted is None:
            break
        net = accepted
    return net, np.array(losses)


# ---------------------------------------------------- parametric optimization


def _perturbed_pair_loss(net, f, r, trace, conv2, block_id, w_new) -> float:
    """Loss of the net with one filter replaced, reusing unaffected layers.

    Computes the same quantity as a fresh forward pass: replacing a
    second-layer filter touches only its row, replacing a first-layer filter
    reuses the other features' cached convolutions.
    """
    if block_id[0] == 1:
        j0 = block_id[1]
        h_new = apply_eta(w_new.convolve(f))
        etas = []
        for i in range(net.n2):
            parts = [
                net.layer2[i][j0].convolve(h_new) if j == j0 else conv2[i][j]
                for j in range(net.n1)
            ]
            etas.append(apply_eta(RkhsSignal.sum_of(parts)))
    else:
        _, i0, j0 = block_id
        parts = [
            w_new.convolve(trace.h1[j0]) if j == j0 else conv2[i0][j]
            for j in range(net.n1)
        ]
        row_eta = apply_eta(RkhsSignal.sum_of(parts))
        etas = [row_eta if i == i0 else trace.eta2[i] for i in range(net.n2)]
    res = r - RkhsSignal.sum_of(etas)
    return 0.5 * res.inner(res)


def total_loss_and_gradient(
    net: AlgNet,
    dataset: Sequence[Tuple[RkhsSignal, RkhsSignal]],
    cfg: TrainConfig,
) -> Tuple[float, np.ndarray]:
    """Total loss plus its gradient in ``collect_params`` ordering.

    Amplitude entries get the exact directional derivative along the one-hot
    direction k_v of their term; center coordinates get a central finite
    difference of the total loss with step ``cfg.fd_step_centers``.
    """
    traces = [forward_trace(net, f) for f, _ in dataset]
    residuals = [r - t.out for (_, r), t in zip(dataset, traces)]
    total = 0.5 * sum(res.inner(res) for res in residuals)
    conv2s = [
        [[net.layer2[i][j].convolve(tr.h1[j]) for j in range(net.n1)] for i in range(net.n2)]
        for tr in traces
    ]

    params = collect_params(net)
    grad = np.zeros_like(params)
    dim = net.kernel.center_type.dim
    stride = 1 + dim
    h = cfg.fd_step_centers

    blocks = [((1, j), f) for j, f in enumerate(net.layer1)]
    blocks += [
        ((2, i, j), f)
        for i, row in enumerate(net.layer2)
        for j, f in enumerate(row)
    ]
    pos = 0
    for block_id, filt in blocks:
        for t in range(filt.n_terms):
            one_hot = RkhsSignal(net.kernel, net.op, filt.centers[t : t + 1], [1.0])
            deriv = 0.0
            for (f, _), tr, res in zip(dataset, traces, residuals):
                if block_id[0] == 1:
                    df = frechet_F1(net, f, block_id[1], one_hot, tr)
                else:
                    df = frechet_F2(net, f, block_id[1], block_id[2], one_hot, tr)
                deriv -= df.inner(res)
            grad[pos + t * stride] = deriv

            for k in range(dim):
                two_sided = []
                for sign in (h, -h):
                    centers = filt.centers.copy()
                    centers[t, k] += sign
                    w_new = RkhsSignal._unsafe(net.kernel, net.op, centers, filt.weights)
                    val = sum(
                        _perturbed_pair_loss(net, f, r, tr, c2, block_id, w_new)
                        for (f, r), tr, c2 in zip(dataset, traces, conv2s)
                    )
                    two_sided.append(val)
                grad[pos + t * stride + 1 + k] = (two_sided[0] - two_sided[1]) / (2.0 * h)
        pos += filt.n_terms * stride
    return total, grad


def parametric_gradient(
    net: AlgNet,
    dataset: Sequence[Tuple[RkhsSignal, RkhsSignal]],
    cfg: TrainConfig,
) -> np.ndarray:
    return total_loss_and_gradient(net, dataset, cfg)[1]


def adam_train(
    net: AlgNet,
    dataset: Sequence[Tuple[RkhsSignal, RkhsSignal]],
    cfg: TrainConfig,
) -> Tuple[AlgNet, np.ndarray]:
    """Adam on the flat parameter vector (amplitudes and centers, not widths)."""
    params = collect_params(net)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    losses = []
    for t in range(1, cfg.iterations + 1):
        current = set_params(net, params)
        loss_val, grad = total_loss_and_gradient(current, dataset, cfg)
        losses.append(loss_val)
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * grad
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * grad * grad
        m_hat = m / (1.0 - ADAM_BETA1**t)
        v_hat = v / (1.0 - ADAM_BETA2**t)
        params = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return set_params(net, params), np.array(losses)


def save_loss_trace(path, losses) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,loss\n")
        for i, val in enumerate(losses):
            fh.write(f"{i},{float(val)!r}\n")


def load_train_config(path) -> TrainConfig:
    with open(path) as fh:
        return TrainConfig.from_json(json.load(fh))
