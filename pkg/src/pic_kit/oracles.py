"""Closed-form and quadrature ground truths, plus synthetic data generators.

Two reference families have known principal inertia components:

* ``n`` independent uses of a binary symmetric channel, whose spectrum is
  made of binomially many powers of a single-bit correlation;
* a scalar Gaussian ``X`` observed through additive Gaussian noise, whose
  principal functions are Hermite polynomials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import reduce

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .core import DiscreteJoint, PicError, SamplePairs, validate_joint

MAX_BSC_BITS = 12
QUADRATURE_NODES = (16, 32, 64)
QUADRATURE_TOL = 1e-6


class AlphabetTooLarge(PicError, ValueError):
    pass


class QuadratureNotConverged(PicError, ArithmeticError):
    pass


@dataclass(frozen=True)
class BscSpec:
    n: int
    p: float
    delta: float

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if not 0 <= self.delta <= 0.5:
            raise ValueError(f"delta must lie in [0, 0.5], got {self.delta}")
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")


@dataclass(frozen=True)
class GaussianSpec:
    """``X ~ N(0, sigma1^2)`` and ``Y | X ~ N(X, sigma2^2)``."""

    sigma1: float
    sigma2: float
    dim: int = 1

    def __post_init__(self):
        if self.sigma1 <= 0 or self.sigma2 <= 0:
            raise ValueError("sigma1 and sigma2 must be positive")

    @property
    def rho(self) -> float:
        return self.sigma1 / math.hypot(self.sigma1, self.sigma2)


# -- binary symmetric channel ------------------------------------------------


def _bit_joint(p: float, delta: float) -> np.ndarray:
    px = np.array([1 - p, p])
    channel = np.array([[1 - delta, delta], [delta, 1 - delta]])
    return px[:, None] * channel


def bsc_joint(spec: BscSpec) -> DiscreteJoint:
    """Exact ``2^n x 2^n`` joint of an input word and its BSC output.

    Category ``k`` is the word whose bits are the binary digits of ``k``
    (most significant first); labels are the corresponding bit strings.
    """
    if spec.n > MAX_BSC_BITS:
        raise AlphabetTooLarge(f"n={spec.n} bits exceeds the bound {MAX_BSC_BITS}")
    bit = _bit_joint(spec.p, spec.delta)
    P = reduce(np.kron, [bit] * spec.n)
    labels = [format(k, f"0{spec.n}b") for k in range(2**spec.n)]
    return validate_joint(P, labels, labels)


def bsc_bit_correlation(delta: float, p: float = 0.5) -> float:
    """Maximal correlation between one input bit and its noisy copy."""
    q = p * (1 - delta) + (1 - p) * delta
    return (1 - 2 * delta) * math.sqrt(p * (1 - p) / (q * (1 - q)))


def bsc_pic_spectrum(n: int, delta: float, p: float = 0.5) -> np.ndarray:
    """Non-trivial singular-value spectrum of ``n`` uses of a BSC, descending.

    For each ``k = 1..n`` there are ``C(n, k)`` values ``s ** k`` where ``s``
    is the single-bit correlation. With uniform inputs (the default)
    ``s = 1 - 2 delta``; for a biased input bit ``s`` is smaller, since the
    input and output marginals then differ.
    """
    if not 0 <= delta <= 0.5:
        raise ValueError(f"delta must lie in [0, 0.5], got {delta}")
    s = bsc_bit_correlation(delta, p)
    values = [s**k for k in range(1, n + 1) for _ in range(math.comb(n, k))]
    return np.sort(np.asarray(values, dtype=np.float64))[::-1]


def bsc_samples(spec: BscSpec, n_samples: int, seed: int) -> SamplePairs:
    """Draw ``n_samples`` i.i.d. (input word, output word) pairs as 0/1 vectors."""
    rng = np.random.default_rng(seed)
    x = (rng.random((n_samples, spec.n)) < spec.p).astype(np.float64)
    z = (rng.random((n_samples, spec.n)) < spec.delta).astype(np.float64)
    return SamplePairs(x, np.abs(x - z))


# -- Gaussian / Hermite ------------------------------------------------------


def hermite(i: int, r: float, x):
    """Degree-``i`` Hermite function orthonormal under ``N(0, r)``.

    Evaluated with the three-term recurrence of the probabilists' Hermite
    polynomials in the standardized variable ``x / sqrt(r)``, normalized by
    ``sqrt(i!)``. At ``r = 1`` this equals
    ``(-1)^i / sqrt(i!) * exp(x^2/2) d^i/dx^i exp(-x^2/2)``; for other ``r``
    the Rodrigues form with ``exp(-x^2/(2r))`` differs from this by the
    factor ``r ** (-i/2)``.
    """
    if i < 0:
        raise ValueError("degree must be non-negative")
    if r <= 0:
        raise ValueError("r must be positive")
    u = np.asarray(x, dtype=np.float64) / math.sqrt(r)
    prev = np.ones_like(u)
    if i == 0:
        return prev if prev.ndim else float(prev)
    cur = u.copy()
    for k in range(1, i):
        prev, cur = cur, (u * cur - math.sqrt(k) * prev) / math.sqrt(k + 1)
    return cur if cur.ndim else float(cur)


@dataclass(frozen=True)
class GaussianPic:
    index: int
    quadrature: float
    closed_form: float
    nodes: int


def _gauss_inner(spec: GaussianSpec, i: int, nodes: int) -> float:
    t, w = hermegauss(nodes)
    w = w / math.sqrt(2 * math.pi)
    u = t[:, None]
    v = t[None, :]
    X = spec.sigma1 * u
    Y = X + spec.sigma2 * v
    f = hermite(i, spec.sigma1**2, X)
    g = hermite(i, spec.sigma1**2 + spec.sigma2**2, Y)
    return float(np.sum(np.outer(w, w) * f * g))


def gaussian_pic_oracle(spec: GaussianSpec, i: int) -> GaussianPic:
    """``E[f_i(X) g_i(Y)]`` for the Hermite principal functions of the pair.

    ``f_i`` is the Hermite function with variance parameter ``sigma1^2`` and
    ``g_i`` the one with ``sigma1^2 + sigma2^2``. The expectation is computed
    by tensor Gauss-Hermite quadrature at doubling node counts until two
    successive values agree; ``closed_form`` is ``rho ** i`` with
    ``rho = sigma1 / sqrt(sigma1^2 + sigma2^2)``.
    """
    if i < 1:
        raise ValueError("index must be >= 1")
    if spec.dim != 1:
        raise ValueError("the Gaussian oracle covers the scalar case only")
    prev = None
    for nodes in QUADRATURE_NODES:
        val = _gauss_inner(spec, i, nodes)
        if prev is not None and abs(val - prev) <= QUADRATURE_TOL:
            return GaussianPic(i, val, spec.rho**i, nodes)
        prev = val
    raise QuadratureNotConverged(
        f"quadrature for index {i} did not settle within {QUADRATURE_NODES[-1]} nodes"
    )


def gaussian_samples(spec: GaussianSpec, n_samples: int, seed: int) -> SamplePairs:
    rng = np.random.default_rng(seed)
    x = spec.sigma1 * rng.standard_normal((n_samples, spec.dim))
    y = x + spec.sigma2 * rng.standard_normal((n_samples, spec.dim))
    return SamplePairs(x, y)


# -- multi-view ----------------------------------------------------------------


def multiview_synthetic(
    M: int,
    n: int,
    noise: float,
    seed: int,
    separation: float = 1.0,
) -> SamplePairs:
    """Two conditionally independent noisy views of a uniform latent class.

    The latent ``W`` is uniform on ``{0, ..., M-1}``. Each view is
    ``separation * e_W + noise * Z`` in ``R^M`` with independent standard
    normal ``Z``, so ``X - W - Y`` holds by construction. The latent labels
    are returned in ``SamplePairs.latent``.
    """
    if M < 2:
        raise ValueError("need at least two latent classes")
    if n < M:
        raise ValueError("need at least one sample per class on average (n >= M)")
    if noise < 0:
        raise ValueError("noise must be non-negative")
    rng = np.random.default_rng(seed)
    w = rng.integers(0, M, size=n)
    means = separation * np.eye(M)
    x = means[w] + noise * rng.standard_normal((n, M))
    y = means[w] + noise * rng.standard_normal((n, M))
    return SamplePairs(x, y, latent=w)
