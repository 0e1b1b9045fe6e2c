"""The pointwise nonlinearity on kernel expansions and its Frechet derivative.

The map acts on the coefficients of a signal g = sum_v alpha_v k_v through
the values g takes at its own centers:

    eta(g) = sum_v [ relu(g(v)) / sum_r K(r, v) ] k_v

where r ranges over the same center set.  The normalization by the column
sum of the Gram matrix makes symmetric nonnegative expansions fixed points
of the map and keeps it continuous as centers collide.  The derivative at w
along d lives on the union of both center sets:

    D_eta(w){d} = sum_u [ relu'(w(u)) d(u) / sum_r K(r, u) ] k_u

with relu'(0) taken as 0.
"""

from __future__ import annotations

import numpy as np

from .errors import DegenerateDenominatorError
from .signal import DEFAULT_MERGE_TOL, RkhsSignal, merge_packed


def _gram_and_denominators(kernel, centers: np.ndarray):
    gram = kernel.gram(centers)
    denom = gram.sum(axis=0)
    if np.any(denom <= 0.0):
        bad = int(np.argmin(denom))
        raise DegenerateDenominatorError(
            f"nonlinearity normalization is {denom[bad]:.3e} <= 0 at center "
            f"{centers[bad].tolist()}"
        )
    return gram, denom


def apply_eta(g: RkhsSignal) -> RkhsSignal:
    """Apply the pointwise nonlinearity; output keeps g's center set.

    Coincident centers are merged first so each center contributes one term
    to the normalizing sum.
    """
    g = g.prune()
    if g.n_terms == 0:
        return g
    gram, denom = _gram_and_denominators(g.kernel, g.centers)
    evals = gram @ g.weights
    weights = np.maximum(evals, 0.0) / denom
    return RkhsSignal._unsafe(g.kernel, g.op, g.centers, weights)


def eta_jvp(w: RkhsSignal, d: RkhsSignal, margin_sink: list | None = None):
    """Value and derivative of the nonlinearity at w along d, on one center set.

    Both signals are zero-padded onto the union of their center sets
    (deduplicated within the default merge tolerance), and the nonlinearity's
    normalizing sums run over that union.  The returned pair is
    (eta(w) on the union, D_eta(w){d} on the union); computing both on the
    same padding is what makes chained derivatives agree with central finite
    differences of the actual forward maps, whose perturbed intermediates
    carry exactly these union center sets.

    ``margin_sink``, when given, collects the smallest |w(u)| over the union,
    i.e. how far this evaluation stays from the relu kink.
    """
    w._check_same_space(d, need_op=True)
    if w.n_terms == 0 and d.n_terms == 0:
        z = RkhsSignal.zero(w.kernel, w.op)
        return z, z
    stacked = np.concatenate([w.centers, d.centers])
    reps, _, _ = merge_packed(stacked, DEFAULT_MERGE_TOL)
    union = stacked[reps]
    gram, denom = _gram_and_denominators(w.kernel, union)
    if len(reps) == w.n_terms and (reps < w.n_terms).all():
        # the union is exactly w's center list, so the Gram matrix already
        # holds w's evaluations
        w_vals = gram @ w.weights
    else:
        w_vals = w.evaluate_packed(union)
    d_vals = d.evaluate_packed(union)
    if margin_sink is not None:
        margin_sink.append(float(np.min(np.abs(w_vals))))
    value = RkhsSignal._unsafe(w.kernel, w.op, union, np.maximum(w_vals, 0.0) / denom)
    tangent = RkhsSignal._unsafe(
        w.kernel, w.op, union, np.where(w_vals > 0.0, d_vals, 0.0) / denom
    )
    return value, tangent


def eta_frechet(w: RkhsSignal, d: RkhsSignal) -> RkhsSignal:
    """Frechet derivative of the nonlinearity at w acting on direction d.

    Linear in d for directions sharing one center set; directions with new
    centers enlarge the normalizing sums through the union padding.
    """
    return eta_jvp(w, d)[1]
