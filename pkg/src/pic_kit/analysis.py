"""Applications of a PIC decomposition.

* reconstruction accuracy of label functions and the worst-case accuracy
  ratio between two models;
* the size of a shared latent space, read off a drop in the spectrum;
* radius queries in the common embedding space.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core import NotNormalized, PicDecomposition, PicError

log = logging.getLogger(__name__)

SINGULAR_LAMBDA = 1e-12
DEFAULT_GAP_RATIO = 0.5
DEFAULT_FLOOR = 1e-6


class SingularLambda(PicError, ZeroDivisionError):
    def __init__(self, message: str, index: int):
        super().__init__(message)
        self.index = index


class NotSorted(PicError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ModelDecomposition:
    """Principal functions of a model over its ``m`` labels.

    ``G`` is ``m x d`` (one row per label), ``Lambda`` the PICs
    (squared correlations) and ``p_y`` the label marginal.
    """

    G: np.ndarray
    Lambda: np.ndarray
    p_y: np.ndarray

    @classmethod
    def from_exact(cls, decomp: PicDecomposition) -> "ModelDecomposition":
        return cls(np.array(decomp.G), np.array(decomp.lambdas), np.array(decomp.p_y))

    @classmethod
    def from_blackbox(cls, result) -> "ModelDecomposition":
        return cls(
            np.array(result.label_functions),
            np.array(result.sigma_hat) ** 2,
            np.array(result.p_y),
        )


def accuracy(h_coeffs, decomp: ModelDecomposition) -> float:
    """Accuracy of recovering ``h = sum_i alpha_i g_i`` from the input.

    ``h`` must have unit second moment (``sum alpha_i^2 = 1``). The value
    ``sum_i alpha_i^2 lambda_i`` is one minus the minimum mean-squared error
    of estimating ``h(Y)`` from ``X``.
    """
    a = np.asarray(h_coeffs, dtype=np.float64).ravel()
    if a.size != decomp.Lambda.size:
        raise ValueError(f"expected {decomp.Lambda.size} coefficients, got {a.size}")
    norm = float(a @ a)
    if abs(norm - 1.0) > 1e-9:
        raise NotNormalized(f"h has second moment {norm!r}, expected 1")
    return float(np.sum(a * a * decomp.Lambda))


def acc_ratio_matrix(decomp1: ModelDecomposition, decomp2: ModelDecomposition, p_y=None):
    """``Lambda1^{1/2} G1^T D_Y G2 Lambda2^{-1/2}``."""
    p = decomp1.p_y if p_y is None else np.asarray(p_y, dtype=np.float64)
    small = np.flatnonzero(decomp2.Lambda < SINGULAR_LAMBDA)
    if small.size:
        i = int(small[0])
        raise SingularLambda(
            f"second model has PIC {decomp2.Lambda[i]:.3e} at index {i}; ratio is unbounded", i
        )
    return (
        np.sqrt(decomp1.Lambda)[:, None]
        * (decomp1.G.T @ (p[:, None] * decomp2.G))
        / np.sqrt(decomp2.Lambda)[None, :]
    )


def acc_ratio(
    decomp1: ModelDecomposition,
    decomp2: ModelDecomposition,
    p_y=None,
    strict: bool = False,
) -> float:
    """``sup_h Acc(h | model 1) / Acc(h | model 2)``.

    Equals the squared top singular value of :func:`acc_ratio_matrix`.
    ``p_y`` defaults to the first model's label marginal. When the second
    model has a (near) zero PIC the supremum is infinite: ``inf`` is
    returned, or :class:`SingularLambda` raised if ``strict``.
    """
    try:
        M = acc_ratio_matrix(decomp1, decomp2, p_y)
    except SingularLambda as exc:
        if strict:
            raise
        log.warning("%s", exc)
        return float("inf")
    return float(np.linalg.norm(M, 2) ** 2)


def latent_dimension(
    sigmas,
    gap_ratio: float = DEFAULT_GAP_RATIO,
    floor: float = DEFAULT_FLOOR,
) -> int:
    """Number of components before the largest relative drop of the spectrum.

    Values below ``floor`` are discarded. The constant component (value 1)
    is placed in front of the spectrum, so a drop right after it gives 0.
    The drop after position ``k`` is ``(s_k - s_{k+1}) / max(s_k, floor)``;
    the first largest drop wins if it exceeds ``gap_ratio``, otherwise every
    retained component counts.
    """
    s = np.asarray(sigmas, dtype=np.float64).ravel()
    if s.size == 0:
        raise ValueError("empty spectrum")
    if np.any(np.diff(s) > 1e-9):
        raise NotSorted("spectrum must be non-increasing")
    s = s[s >= floor]
    if s.size == 0:
        return 0
    s = np.concatenate([[max(1.0, s[0])], s])
    gaps = (s[:-1] - s[1:]) / np.maximum(s[:-1], floor)
    if s.size < 2 or gaps.max() <= gap_ratio:
        return int(s.size - 1)
    return int(np.argmax(gaps))


def tag_query(anchor_embedding, candidate_embeddings, tau: float) -> set:
    """Ids whose embedding lies within Euclidean distance ``tau`` of the anchor."""
    if tau < 0:
        raise ValueError("tau must be non-negative")
    anchor = np.asarray(anchor_embedding, dtype=np.float64).ravel()
    hits = set()
    for ident, emb in candidate_embeddings:
        if np.linalg.norm(np.asarray(emb, dtype=np.float64).ravel() - anchor) <= tau:
            hits.add(ident)
    return hits
