"""Exact principal inertia components of discrete joints.

The decomposition is the SVD of the normalized, centered contingency table

    Q = D_X^{-1/2} (P - p_X p_Y^T) D_Y^{-1/2}

whose singular vectors, rescaled by the inverse square-root marginals, are
the principal functions (equivalently the orthogonal factors of
correspondence analysis).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.linalg import null_space

from .core import (
    DiscreteJoint,
    EmptyInput,
    PicDecomposition,
    PicError,
    validate_joint,
)

MAX_EXACT_ALPHABET = 4096


class DimensionTooLarge(PicError, ValueError):
    pass


class TruncatedDecomposition(PicError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class CaFactors:
    """Correspondence-analysis view of a decomposition."""

    L: np.ndarray
    R: np.ndarray
    factor_scores: np.ndarray
    factor_score_ratios: np.ndarray
    Q: np.ndarray


def _sorted_labels(labels: Iterable[Hashable]) -> list:
    uniq = set(labels)
    try:
        return sorted(uniq)
    except TypeError:
        return sorted(uniq, key=lambda v: (type(v).__name__, str(v)))


def contingency_from_samples(pairs: Sequence[tuple]) -> DiscreteJoint:
    """Normalized co-occurrence table of categorical pairs.

    Row and column labels are the distinct categories in sorted order.
    """
    pairs = list(pairs)
    if not pairs:
        raise EmptyInput("no pairs given")
    rows = _sorted_labels(x for x, _ in pairs)
    cols = _sorted_labels(y for _, y in pairs)
    ri = {v: i for i, v in enumerate(rows)}
    ci = {v: j for j, v in enumerate(cols)}
    counts = np.zeros((len(rows), len(cols)))
    for (x, y), c in Counter(pairs).items():
        counts[ri[x], ci[y]] = c
    return validate_joint(counts / len(pairs), rows, cols)


def centered_table(joint: DiscreteJoint) -> np.ndarray:
    """The matrix Q for ``joint``."""
    P = joint.pmf
    sx = np.sqrt(joint.p_x)
    sy = np.sqrt(joint.p_y)
    return (P - np.outer(joint.p_x, joint.p_y)) / np.outer(sx, sy)


def _canonicalize_signs(F: np.ndarray, G: np.ndarray) -> None:
    for j in range(F.shape[1]):
        # ties (up to round-off) go to the lowest row index
        a = np.abs(F[:, j])
        k = int(np.argmax(a >= a.max() * (1 - 1e-9)))
        if F[k, j] < 0:
            F[:, j] *= -1
            G[:, j] *= -1


def decompose(joint, d: int | str = "max") -> tuple[PicDecomposition, CaFactors]:
    """Exact PIC decomposition of a discrete joint.

    Parameters
    ----------
    joint : DiscreteJoint or array_like
        The joint pmf; validated if given as an array.
    d : int or "max"
        Number of non-constant components to keep. ``"max"`` keeps
        ``min(|X|, |Y|) - 1``.

    Returns
    -------
    decomp : PicDecomposition
    factors : CaFactors
        ``L`` and ``R`` equal ``decomp.F`` and ``decomp.G``.

    Notes
    -----
    The constant component is removed by restricting Q to the orthogonal
    complements of ``sqrt(p_X)`` and ``sqrt(p_Y)`` before the SVD, so every
    returned singular vector (including those of zero singular value) is
    orthogonal to the constants.
    """
    joint = validate_joint(joint)
    nx, ny = joint.shape
    if max(nx, ny) > MAX_EXACT_ALPHABET:
        raise DimensionTooLarge(
            f"alphabet {joint.shape} exceeds the exact-engine bound {MAX_EXACT_ALPHABET}"
        )
    dmax = min(nx, ny) - 1
    if d == "max":
        d = dmax
    d = int(d)
    if d < 0 or d > dmax:
        raise DimensionTooLarge(f"d={d} exceeds min(|X|,|Y|)-1 = {dmax}")

    Q = centered_table(joint)
    sx = np.sqrt(joint.p_x)
    sy = np.sqrt(joint.p_y)
    Bx = null_space(sx[None, :])
    By = null_space(sy[None, :])
    if dmax > 0:
        U, s, Vt = np.linalg.svd(Bx.T @ Q @ By)
        U = Bx @ U[:, :d]
        V = By @ Vt[:d].T
        s = np.clip(s[:d], 0.0, 1.0)
    else:
        U = np.zeros((nx, 0))
        V = np.zeros((ny, 0))
        s = np.zeros(0)

    F = U / sx[:, None]
    G = V / sy[:, None]
    _canonicalize_signs(F, G)
    lambdas = s**2
    total = lambdas.sum()
    ratios = lambdas / total if total > 0 else np.zeros_like(lambdas)

    decomp = PicDecomposition(
        d=d,
        sigmas=s,
        lambdas=lambdas,
        F=F,
        G=G,
        p_x=np.array(joint.p_x),
        p_y=np.array(joint.p_y),
        row_labels=joint.row_labels,
        col_labels=joint.col_labels,
    )
    factors = CaFactors(L=F, R=G, factor_scores=lambdas, factor_score_ratios=ratios, Q=Q)
    return decomp, factors


def conditional_expectation(joint, f) -> np.ndarray:
    """``y -> E[f(X) | Y = y]`` for a function ``f`` tabulated over X."""
    joint = validate_joint(joint)
    f = np.asarray(f, dtype=np.float64)
    if f.shape[0] != joint.shape[0]:
        raise ValueError(f"f has {f.shape[0]} entries, X has {joint.shape[0]} categories")
    if not np.all(np.isfinite(f)):
        raise ValueError("f must be finite")
    return (joint.pmf.T @ f) / (joint.p_y if f.ndim == 1 else joint.p_y[:, None])


def reconstruct_joint(decomp: PicDecomposition) -> DiscreteJoint:
    """Rebuild the joint from a full-dimension decomposition.

    ``P(x, y) = p_x(x) p_y(y) (1 + sum_i sigma_i f_i(x) g_i(y))``.
    """
    if decomp.d < decomp.full_rank:
        raise TruncatedDecomposition(
            f"decomposition keeps {decomp.d} of {decomp.full_rank} components"
        )
    ratio = 1.0 + (decomp.F * decomp.sigmas) @ decomp.G.T
    P = np.outer(decomp.p_x, decomp.p_y) * ratio
    # round-off can leave tiny negatives where the true mass is zero
    P = np.where(np.abs(P) < 1e-15, 0.0, P)
    return validate_joint(
        P,
        decomp.row_labels or None,
        decomp.col_labels or None,
    )


def chi_squared(decomp: PicDecomposition) -> float:
    """Chi-squared divergence between the joint and the product of marginals."""
    return float(np.sum(decomp.lambdas))


def mmse_estimate(decomp: PicDecomposition, beta) -> np.ndarray:
    """Coefficients in the F basis of the best estimate of ``g = sum beta_i g_i``.

    ``beta[0]`` is the coefficient of the constant function; missing
    trailing coefficients are taken as zero. Returns a length ``d + 1``
    vector with ``alpha_0 = beta_0`` and ``alpha_i = sigma_i beta_i``.
    """
    beta = np.asarray(beta, dtype=np.float64).ravel()
    if beta.size > decomp.d + 1:
        raise ValueError(f"beta has {beta.size} coefficients, basis has {decomp.d + 1}")
    full = np.zeros(decomp.d + 1)
    full[: beta.size] = beta
    alpha = full.copy()
    alpha[1:] *= decomp.sigmas
    return alpha
