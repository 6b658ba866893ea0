"""Dyad multinomial likelihood: normalizer, probabilities, and derivatives.

A dyad at one time step has four outcomes with unnormalized log-weights

    NN: 0,  SR: eta1,  RS: eta2,  BB: eta1 + eta2 + eta3,

so the log-normalizer is log[1 + e^eta1 + e^eta2 + e^(eta1+eta2+eta3)].
All exponentials are evaluated with max-subtraction so arbitrarily large
linear predictors stay finite.
"""

from __future__ import annotations

import numpy as np

from .design import CoefficientBlock, DyadDesign
from .errors import DataError


def _logits(eta: np.ndarray) -> np.ndarray:
    """(..., 3) linear predictors -> (..., 4) outcome log-weights."""
    eta = np.asarray(eta, dtype=np.float64)
    if eta.shape[-1] != 3:
        raise DataError(f"expected 3 linear predictors, got shape {eta.shape}")
    zero = np.zeros(eta.shape[:-1] + (1,))
    both = (eta[..., 0] + eta[..., 1] + eta[..., 2])[..., None]
    return np.concatenate([zero, eta[..., 0:1], eta[..., 1:2], both], axis=-1)


def log_normalizer(eta: np.ndarray) -> np.ndarray | float:
    """log of the 4-term outcome-weight sum, overflow-safe.

    `eta` has shape (..., 3); the result drops the last axis.
    """
    logits = _logits(eta)
    top = logits.max(axis=-1, keepdims=True)
    out = top[..., 0] + np.log(np.exp(logits - top).sum(axis=-1))
    return float(out) if out.ndim == 0 else out


def outcome_probs(eta: np.ndarray) -> np.ndarray:
    """Probabilities of the four outcomes (NN, SR, RS, BB) in that order."""
    logits = _logits(eta)
    top = logits.max(axis=-1, keepdims=True)
    w = np.exp(logits - top)
    return w / w.sum(axis=-1, keepdims=True)


def marginal_probs(eta: np.ndarray) -> np.ndarray:
    """Success probabilities of the three class indicators.

    Column 0 is P(y_ij=1) = p_SR + p_BB, column 1 is P(y_ji=1), column 2
    is P(both) = p_BB.
    """
    p = outcome_probs(eta)
    return np.stack([p[..., 1] + p[..., 3], p[..., 2] + p[..., 3], p[..., 3]], axis=-1)


def normalizer_and_marginals(eta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Both log-normalizer and class marginals in one pass (fitting hot path)."""
    logits = _logits(eta)
    top = logits.max(axis=-1, keepdims=True)
    w = np.exp(logits - top)
    tot = w.sum(axis=-1)
    log_c = top[..., 0] + np.log(tot)
    p = w / tot[..., None]
    mu = np.stack([p[..., 1] + p[..., 3], p[..., 2] + p[..., 3], p[..., 3]], axis=-1)
    return log_c, mu


def linear_predictors(design: DyadDesign, coef: CoefficientBlock) -> np.ndarray:
    """(T-1, 3) matrix of linear predictors alpha_r + x_t . w_r."""
    if coef.width != design.width:
        raise DataError(
            f"coefficient width {coef.width} does not match design width {design.width}"
        )
    return coef.intercepts + design.X.astype(np.float64) @ coef.weights.T


def pair_loglik(design: DyadDesign, coef: CoefficientBlock) -> float:
    """Unpenalized log-likelihood of one pair's outcome sequence.

    Equals -(T-1) * log 4 at zero coefficients.
    """
    eta = linear_predictors(design, coef)
    s = design.indicators()
    return float((s * eta).sum() - log_normalizer(eta).sum())


def gradient_and_curvature(
    design: DyadDesign, coef: CoefficientBlock, class_index: int, column: int
) -> tuple[float, float]:
    """Score and (negative) diagonal information for one weight.

    Returns (g, G) with g = sum_t x_tk (s_rt - mu_rt) and
    G = sum_t x_tk^2 mu_rt (1 - mu_rt); G >= 0 and is 0 for a zero column.
    """
    if not 0 <= class_index < 3:
        raise DataError(f"class index {class_index} outside 0..2")
    if not 0 <= column < design.width:
        raise DataError(f"column {column} outside 0..{design.width - 1}")
    eta = linear_predictors(design, coef)
    mu = marginal_probs(eta)[:, class_index]
    s = design.indicators()[:, class_index]
    x = design.X[:, column].astype(np.float64)
    g = float(np.dot(x, s - mu))
    curv = float(np.dot(x * x, mu * (1.0 - mu)))
    return g, curv


def intercept_gradient_and_curvature(
    design: DyadDesign, coef: CoefficientBlock, class_index: int
) -> tuple[float, float]:
    """Score and negative second derivative with respect to one intercept."""
    if not 0 <= class_index < 3:
        raise DataError(f"class index {class_index} outside 0..2")
    eta = linear_predictors(design, coef)
    mu = marginal_probs(eta)[:, class_index]
    s = design.indicators()[:, class_index]
    g = float((s - mu).sum())
    curv = float((mu * (1.0 - mu)).sum())
    return g, curv
