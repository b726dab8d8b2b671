"""Softmax cross-entropy with a gradient decay factor beta.

The loss for one sample with logits z and true class c is

    J = -log( exp(z_c/tau) / (sum_{i != c} exp(z_i/tau) + beta * exp(z_c/tau)) )

beta multiplies the true-class exponential in the denominator; log(beta) acts
as a soft margin in decision space, and beta controls how fast the gradient
assigned to a sample decays as its true-class probability p_c rises.  beta=1
is the standard softmax cross-entropy.

Everything here is a pure function of its inputs (no shared state), in 64-bit
floating point.  The scalar curvature functions accept numpy arrays as well
and broadcast elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MaxShift",
    "FixedShift",
    "LossParams",
    "LabeledLogits",
    "LossEval",
    "BatchEval",
    "softmax_probs",
    "beta_ce_loss",
    "beta_ce_eval",
    "beta_ce_batch",
    "gradient_magnitude",
    "magnitude_derivatives",
    "logit_curvature",
    "inflection_point",
    "local_lipschitz_bound",
    "suggested_learning_rate",
]

# Clamp applied to p_c before it enters any denominator; keeps gradients
# finite when the softmax saturates in float64.
P_CLAMP = 1e-12

# exp() overflows float64 just above 709.78; the fixed-shift mode has to
# refuse logits that would cross it.
_EXP_ARG_MAX = 709.0


@dataclass(frozen=True)
class MaxShift:
    """Subtract max(z) from every logit before exponentiation.

    Correct for arbitrary logit scales; this is the default.
    """


@dataclass(frozen=True)
class FixedShift:
    """Subtract a fixed constant u from every logit before exponentiation.

    Only safe while all logits stay well below u + ~709; out-of-range logits
    raise OverflowError.
    """

    u: float = 70.0


Stability = MaxShift | FixedShift


@dataclass(frozen=True)
class LossParams:
    """Hyperparameters of the gradient-decay loss.

    beta > 0 is the gradient decay factor, tau > 0 the softmax temperature.
    Temperature is applied by pre-scaling logits with 1/tau, so gradients
    carry a 1/tau factor and logit curvature a 1/tau**2 factor relative to
    the tau=1 formulas.
    """

    beta: float
    tau: float = 1.0
    stability: Stability = MaxShift()

    def __post_init__(self) -> None:
        if not (isinstance(self.beta, (int, float)) and math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be a positive finite real, got {self.beta!r}")
        if not (isinstance(self.tau, (int, float)) and math.isfinite(self.tau) and self.tau > 0):
            raise ValueError(f"tau must be a positive finite real, got {self.tau!r}")
        if not isinstance(self.stability, (MaxShift, FixedShift)):
            raise TypeError("stability must be MaxShift() or FixedShift(u)")


@dataclass(frozen=True)
class LabeledLogits:
    """Class scores z for one sample plus the index c of its true class."""

    z: np.ndarray
    c: int

    def __post_init__(self) -> None:
        z = np.asarray(self.z, dtype=np.float64)
        object.__setattr__(self, "z", z)
        if z.ndim != 1 or z.size < 2:
            raise ValueError("z must be a 1-d array of at least 2 class scores")
        if not np.all(np.isfinite(z)):
            raise ValueError("all logits must be finite")
        if not 0 <= int(self.c) < z.size:
            raise ValueError(f"class index {self.c} outside [0, {z.size})")
        object.__setattr__(self, "c", int(self.c))


@dataclass(frozen=True)
class LossEval:
    """Loss value, per-logit gradient, probabilities and p_c for one sample.

    Guarantees (in float64, beta in a sane range): probs sums to 1 within
    1e-12, grad[c] <= 0 with grad[i] >= 0 elsewhere, the gradient sums to 0
    within 1e-12, and |grad[c]| equals the sum of the other entries.
    p_true has been clamped to [1e-12, 1 - 1e-12].
    """

    loss: float
    grad: np.ndarray
    probs: np.ndarray
    p_true: float


@dataclass(frozen=True)
class BatchEval:
    """Row-wise loss/gradient/probability evaluation of a logit matrix."""

    losses: np.ndarray  # (n,)
    grads: np.ndarray   # (n, m), per-sample gradients (no batch reduction)
    probs: np.ndarray   # (n, m)
    p_true: np.ndarray  # (n,), clamped


def softmax_probs(z, tau: float = 1.0) -> np.ndarray:
    """Probability vector exp(z_i/tau - s) / sum_j exp(z_j/tau - s), s = max."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size < 2:
        raise ValueError("z must be a 1-d array of at least 2 class scores")
    if not np.all(np.isfinite(z)):
        raise ValueError("all logits must be finite")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    y = z / tau
    e = np.exp(y - y.max())
    return e / e.sum()


def _shift(z: np.ndarray, stability: Stability) -> float:
    if isinstance(stability, MaxShift):
        return float(z.max())
    return float(stability.u)


def _shifted_exps(z: np.ndarray, p: LossParams) -> np.ndarray:
    """exp((z - u')/tau) under the configured stability shift."""
    w = (z - _shift(z, p.stability)) / p.tau
    wmax = w.max()
    if wmax > _EXP_ARG_MAX:
        i = int(np.argmax(w))
        raise OverflowError(
            f"logit z[{i}]={z[i]!r} overflows exp() under FixedShift(u={p.stability.u!r})"
        )
    return np.exp(w)


def beta_ce_loss(x: LabeledLogits, p: LossParams) -> float:
    """Loss J = log(sum_{i != c} e^{(z_i-u')/tau} + beta e^{(z_c-u')/tau}) - (z_c-u')/tau.

    Shift-invariant in MaxShift mode: adding a constant to every logit moves
    the result by less than 1e-10.  At beta=1 this is the standard softmax
    cross-entropy.
    """
    e = _shifted_exps(x.z, p)
    others = e.sum() - e[x.c]
    total = others + p.beta * e[x.c]
    if not np.isfinite(total) or total == 0.0:
        i = int(np.argmax(x.z))
        raise OverflowError(
            f"shifted exponentials out of float64 range (worst logit z[{i}]={x.z[i]!r}); "
            "use MaxShift or adjust FixedShift.u"
        )
    return float(np.log(total) - (x.z[x.c] - _shift(x.z, p.stability)) / p.tau)


def beta_ce_eval(x: LabeledLogits, p: LossParams) -> LossEval:
    """Loss together with its analytic gradient.

    grad[c] = -(1 - p_c) / (tau (1 + (beta-1) p_c)) and
    grad[i] =      p_i   / (tau (1 + (beta-1) p_c)) for i != c,
    with p = softmax_probs(z, tau).  p_c is clamped to [1e-12, 1 - 1e-12]
    before the division (denominator only; clamping the numerators would
    break the exact zero sum of the gradient at saturated probabilities).
    """
    probs = softmax_probs(x.z, p.tau)
    pc_raw = float(probs[x.c])
    pc = min(max(pc_raw, P_CLAMP), 1.0 - P_CLAMP)
    denom = p.tau * (1.0 + (p.beta - 1.0) * pc)
    grad = probs / denom
    grad[x.c] = -(1.0 - pc_raw) / denom
    return LossEval(loss=beta_ce_loss(x, p), grad=grad, probs=probs, p_true=pc)


def beta_ce_batch(Z, y, p: LossParams) -> BatchEval:
    """Vectorized beta_ce_eval over the rows of a logit matrix.

    Z is (n, m), y an integer label vector of length n.  Row k of the result
    matches beta_ce_eval(LabeledLogits(Z[k], y[k]), p); batch reduction (an
    unweighted mean) is left to the caller.
    """
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y)
    if Z.ndim != 2 or Z.shape[1] < 2:
        raise ValueError("Z must be (n, m) with m >= 2")
    if y.shape != (Z.shape[0],):
        raise ValueError("labels must be a vector matching the rows of Z")
    if not np.all(np.isfinite(Z)):
        raise ValueError("all logits must be finite")
    n = Z.shape[0]
    rows = np.arange(n)

    if isinstance(p.stability, MaxShift):
        u = Z.max(axis=1, keepdims=True)
    else:
        u = np.full((n, 1), p.stability.u)
    W = (Z - u) / p.tau
    if W.max() > _EXP_ARG_MAX:
        k, i = np.unravel_index(int(np.argmax(W)), W.shape)
        raise OverflowError(
            f"logit Z[{k},{i}]={Z[k, i]!r} overflows exp() under FixedShift(u={p.stability.u!r})"
        )
    E = np.exp(W)
    sums = E.sum(axis=1)
    ec = E[rows, y]
    total = sums - ec + p.beta * ec
    if not np.all(np.isfinite(total)) or np.any(total == 0.0):
        k = int(np.argmax(~np.isfinite(total) | (total == 0.0)))
        raise OverflowError(f"shifted exponentials out of float64 range in row {k}")
    losses = np.log(total) - W[rows, y]

    probs = E / sums[:, None]
    pc_raw = probs[rows, y]
    pc = np.clip(pc_raw, P_CLAMP, 1.0 - P_CLAMP)
    denom = p.tau * (1.0 + (p.beta - 1.0) * pc)
    grads = probs / denom[:, None]
    grads[rows, y] = -(1.0 - pc_raw) / denom
    return BatchEval(losses=losses, grads=grads, probs=probs, p_true=pc)


def _check_beta(beta) -> None:
    if not (np.isscalar(beta) and math.isfinite(beta) and beta > 0):
        raise ValueError(f"beta must be a positive finite real, got {beta!r}")


def _check_prob_open(p_c):
    p = np.asarray(p_c, dtype=np.float64)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise ValueError("p_c must lie strictly inside (0, 1)")
    return p


def gradient_magnitude(p_c, beta):
    """G = -dJ/dz_c = (1 - p_c) / (1 + (beta-1) p_c), at tau=1.

    Strictly decreasing in p_c with G in (0, 1); the total gradient mass a
    sample receives at confidence p_c.
    """
    _check_beta(beta)
    p = _check_prob_open(p_c)
    return (1.0 - p) / (1.0 + (beta - 1.0) * p)


def magnitude_derivatives(p_c, beta):
    """First and second derivatives of G with respect to p_c.

    dG = -beta / (1 + (beta-1) p_c)^2           (negative everywhere)
    d2G = 2 beta (beta-1) / (1 + (beta-1) p_c)^3 (sign of beta-1)
    """
    _check_beta(beta)
    p = _check_prob_open(p_c)
    d = 1.0 + (beta - 1.0) * p
    return -beta / d**2, 2.0 * beta * (beta - 1.0) / d**3


def logit_curvature(p_c, beta):
    """Second and third derivatives of J with respect to z_c, at tau=1.

    d2J = beta p (1-p) / (1 + (beta-1) p)^2       (positive on (0, 1))
    d3J = d2J / (1 + (beta-1) p) * (1 - (1+beta) p)
    d3J changes sign at p = 1/(1+beta), where d2J peaks at exactly 1/4.
    """
    _check_beta(beta)
    p = _check_prob_open(p_c)
    d = 1.0 + (beta - 1.0) * p
    d2j = beta * p * (1.0 - p) / d**2
    return d2j, d2j / d * (1.0 - (1.0 + beta) * p)


def inflection_point(beta) -> float:
    """p_c = 1/(1+beta): the confidence at which d2J attains its maximum 1/4."""
    _check_beta(beta)
    return 1.0 / (1.0 + beta)


def _curvature_closed(p: float, beta: float) -> float:
    # beta p (1-p) / (1 + (beta-1) p)^2, valid on the closed interval [0, 1]
    d = 1.0 + (beta - 1.0) * p
    return beta * p * (1.0 - p) / (d * d)


def local_lipschitz_bound(beta, p_lo: float, p_hi: float) -> float:
    """max of d2J over [p_lo, p_hi]; a local Lipschitz constant for dJ/dz_c.

    d2J is unimodal with peak 1/4 at p = 1/(1+beta), so the bound is 1/4 when
    that point lies in the interval and the larger endpoint value otherwise.
    On [0, 0.5] this reduces to beta/(beta+1)^2 for beta < 1 and 1/4 for
    beta >= 1.
    """
    _check_beta(beta)
    if not (0.0 <= p_lo < p_hi <= 1.0):
        raise ValueError(f"need 0 <= p_lo < p_hi <= 1, got [{p_lo!r}, {p_hi!r}]")
    if p_lo <= inflection_point(beta) <= p_hi:
        return 0.25
    return max(_curvature_closed(p_lo, beta), _curvature_closed(p_hi, beta))


def suggested_learning_rate(beta, p_lo: float, p_hi: float) -> float:
    """eta* = 1/L for the local bound above.

    Any step size below twice this value satisfies the descent condition
    L eta^2 / 2 - eta < 0 on the interval.
    """
    return 1.0 / local_lipschitz_bound(beta, p_lo, p_hi)
