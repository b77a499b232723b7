"""Neural estimation of principal inertia components.

Two encoders map ``X`` and ``Y`` to ``R^d``. With ``C_f = E[f f^T]``,
``C_fg = E[f g^T]`` the training objective is

    loss = -2 * || (C_f + eps I)^{-1/2} C_fg ||_*  +  E ||g||^2

where ``||.||_*`` is the sum of singular values (the Ky-Fan ``d``-norm of a
``d x d`` matrix). At the optimum the loss equals minus the sum of the top
``d`` PICs, and a whitening step recovers principal functions and their
correlations from the encoder outputs.

Expectations can be plain sample means over paired rows, or weighted by a
*coupling* matrix ``W`` (``n x m``, non-negative, summing to one) that pairs
``n`` X-side rows with ``m`` Y-side rows. The coupling form covers both
exact tabular joints (``W = P``) and black-box classifiers
(``W = P_hat(y | x_k) / n``).
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import minimize

from . import nn
from .core import (
    DiscreteJoint,
    NumericalFailure,
    PicError,
    SamplePairs,
    ShapeMismatch,
    validate_joint,
)

log = logging.getLogger(__name__)

FULL_BATCH_LIMIT = 8192
DEGENERATE_GAP = 1e-10

CONFIG_KEYS = (
    "d",
    "epochs",
    "learning_rate",
    "batch_size",
    "epsilon",
    "clip_bound",
    "seed",
    "f_arch",
    "g_arch",
    "activation",
)


class DegenerateSpectrum(PicError, ArithmeticError):
    pass


class RankDeficient(PicError, np.linalg.LinAlgError):
    pass


class InvalidLikelihood(PicError, ValueError):
    pass


class InvalidConfig(PicError, ValueError):
    pass


# -- statistics and loss -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BatchStats:
    C_f: np.ndarray
    C_fg: np.ndarray
    g_second_moment: float


def _as_2d(a, name):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ShapeMismatch(f"{name} must be 2-D, got shape {a.shape}")
    return a


def empirical_stats(F_batch, G_batch) -> BatchStats:
    """Second moments of paired encoder outputs (rows are samples)."""
    F = _as_2d(F_batch, "F_batch")
    G = _as_2d(G_batch, "G_batch")
    if F.shape != G.shape or F.shape[0] < 1:
        raise ShapeMismatch(f"batches must share a non-empty shape, got {F.shape} and {G.shape}")
    n = F.shape[0]
    C_f = F.T @ F / n
    C_f = 0.5 * (C_f + C_f.T)
    return BatchStats(C_f, F.T @ G / n, float(np.sum(G * G) / n))


def coupled_stats(F, G, coupling) -> BatchStats:
    """Second moments when X-rows and Y-rows are paired through ``coupling``."""
    F = _as_2d(F, "F")
    G = _as_2d(G, "G")
    W = np.asarray(coupling, dtype=np.float64)
    if W.shape != (F.shape[0], G.shape[0]) or F.shape[1] != G.shape[1]:
        raise ShapeMismatch(f"coupling {W.shape} does not pair F {F.shape} with G {G.shape}")
    w = W.sum(axis=1)
    v = W.sum(axis=0)
    C_f = F.T @ (w[:, None] * F)
    C_f = 0.5 * (C_f + C_f.T)
    return BatchStats(C_f, F.T @ W @ G, float(v @ np.sum(G * G, axis=1)))


def _inv_sqrt(S: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(S)
    if vals[0] <= 0:
        raise NumericalFailure(f"matrix is not positive definite (min eigenvalue {vals[0]:.3e})")
    return (vecs / np.sqrt(vals)) @ vecs.T


def pic_loss(stats: BatchStats, epsilon: float = 1e-3) -> float:
    """``-2 sum_i sqrt(eig_i(C_fg^T (C_f + eps I)^{-1} C_fg)) + E||g||^2``."""
    d = stats.C_f.shape[0]
    try:
        S = stats.C_f + epsilon * np.eye(d)
        K = stats.C_fg.T @ np.linalg.solve(S, stats.C_fg)
        eig = np.linalg.eigvalsh(0.5 * (K + K.T))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigensolve failed: {exc}") from exc
    if not np.all(np.isfinite(eig)):
        raise NumericalFailure("non-finite eigenvalues in the loss")
    return float(-2.0 * np.sum(np.sqrt(np.clip(eig, 0.0, None))) + stats.g_second_moment)


def _kyfan_grads(stats: BatchStats, epsilon: float, strict: bool):
    """Loss gradients with respect to ``C_f`` and ``C_fg``.

    With ``B = S^{-1/2} C_fg = U diag(s) V^T`` the nuclear norm has
    (sub)gradient ``S^{-1/2} U V^T`` in ``C_fg`` and
    ``-1/2 S^{-1/2} U diag(s) U^T S^{-1/2}`` in ``S``. No inverse of ``s``
    appears, so the expressions stay finite on rank-deficient ``B``.
    """
    d = stats.C_f.shape[0]
    S_ih = _inv_sqrt(stats.C_f + epsilon * np.eye(d))
    try:
        U, s, Vt = np.linalg.svd(S_ih @ stats.C_fg)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD failed: {exc}") from exc
    if strict and d > 1 and np.min(-np.diff(s)) < DEGENERATE_GAP:
        raise DegenerateSpectrum(f"singular values {s} are not separated")
    dC_fg = -2.0 * S_ih @ U @ Vt
    dC_f = S_ih @ (U * s) @ U.T @ S_ih
    return dC_f, dC_fg


def loss_gradients(
    stats: BatchStats,
    F_batch,
    G_batch,
    epsilon: float = 1e-3,
    coupling=None,
    strict: bool = False,
):
    """Gradients of :func:`pic_loss` composed with the moment estimates.

    Returns ``(dF, dG)`` with the shapes of ``F_batch`` and ``G_batch``.
    ``stats`` must have been computed from the same batches (with
    :func:`empirical_stats`, or :func:`coupled_stats` when ``coupling`` is
    given). With ``strict=True`` a :class:`DegenerateSpectrum` is raised
    when two singular values coincide; otherwise the SVD subgradient is used.
    """
    F = _as_2d(F_batch, "F_batch")
    G = _as_2d(G_batch, "G_batch")
    dC_f, dC_fg = _kyfan_grads(stats, epsilon, strict)
    if coupling is None:
        n = F.shape[0]
        dF = (2.0 / n) * F @ dC_f + (1.0 / n) * G @ dC_fg.T
        dG = (1.0 / n) * F @ dC_fg + (2.0 / n) * G
    else:
        W = np.asarray(coupling, dtype=np.float64)
        w = W.sum(axis=1)
        v = W.sum(axis=0)
        dF = 2.0 * (w[:, None] * F) @ dC_f + W @ G @ dC_fg.T
        dG = W.T @ F @ dC_fg + 2.0 * v[:, None] * G
    return dF, dG


def centered_loss(F_out, G_out, epsilon: float = 1e-3, coupling=None):
    """Loss and output gradients after removing the (weighted) means.

    Centering keeps the encoders from spending a dimension on the constant
    function, which is trivially perfectly correlated.
    """
    F_out = _as_2d(F_out, "F_out")
    G_out = _as_2d(G_out, "G_out")
    if coupling is None:
        Fc = F_out - F_out.mean(axis=0)
        Gc = G_out - G_out.mean(axis=0)
        stats = empirical_stats(Fc, Gc)
        dF, dG = loss_gradients(stats, Fc, Gc, epsilon)
        dF -= dF.mean(axis=0)
        dG -= dG.mean(axis=0)
    else:
        W = np.asarray(coupling, dtype=np.float64)
        w = W.sum(axis=1)
        v = W.sum(axis=0)
        Fc = F_out - w @ F_out
        Gc = G_out - v @ G_out
        stats = coupled_stats(Fc, Gc, W)
        dF, dG = loss_gradients(stats, Fc, Gc, epsilon, coupling=W)
        dF -= np.outer(w, dF.sum(axis=0))
        dG -= np.outer(v, dG.sum(axis=0))
    return pic_loss(stats, epsilon), dF, dG


# -- whitening -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WhiteningResult:
    """Affine maps taking encoder outputs to principal-function values.

    Whitened rows are ``(F - mean_f) @ A.T`` and ``(G - mean_g) @ B.T``.
    ``sigma_hat`` holds the estimated correlations (square roots of the
    PICs), descending. ``F`` and ``G`` are the whitened fitting batches.
    """

    A: np.ndarray
    B: np.ndarray
    sigma_hat: np.ndarray
    mean_f: np.ndarray
    mean_g: np.ndarray
    F: np.ndarray = field(repr=False)
    G: np.ndarray = field(repr=False)

    @property
    def lambdas(self) -> np.ndarray:
        return self.sigma_hat**2

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "sigma_hat": self.sigma_hat.tolist(),
            "mean_f": self.mean_f.tolist(),
            "mean_g": self.mean_g.tolist(),
        }


def _psd_inv_sqrt(C: np.ndarray, name: str, rank_tol: float) -> np.ndarray:
    vals, vecs = np.linalg.eigh(0.5 * (C + C.T))
    if vals[0] <= rank_tol * max(vals[-1], np.finfo(float).tiny):
        raise RankDeficient(f"{name} is rank deficient (eigenvalues {vals})")
    return (vecs / np.sqrt(vals)) @ vecs.T


def whiten(F_batch, G_batch, coupling=None, rank_tol: float = 1e-12) -> WhiteningResult:
    """Recover principal functions from encoder outputs.

    Both batches are centered, multiplied by the inverse square roots of
    their second-moment matrices, and rotated by the singular vectors of the
    whitened cross-moment so the cross-moment becomes diagonal.
    """
    F = _as_2d(F_batch, "F_batch")
    G = _as_2d(G_batch, "G_batch")
    d = F.shape[1]
    if G.shape[1] != d:
        raise ShapeMismatch(f"F has {d} columns, G has {G.shape[1]}")
    if coupling is None:
        if F.shape[0] != G.shape[0]:
            raise ShapeMismatch("paired batches must have the same number of rows")
        if F.shape[0] <= d:
            raise RankDeficient(f"need more than d={d} rows, got {F.shape[0]}")
        mean_f = F.mean(axis=0)
        mean_g = G.mean(axis=0)
        Fc = F - mean_f
        Gc = G - mean_g
        n = F.shape[0]
        C_f = Fc.T @ Fc / n
        C_g = Gc.T @ Gc / n
        C_fg = Fc.T @ Gc / n
    else:
        W = np.asarray(coupling, dtype=np.float64)
        if W.shape != (F.shape[0], G.shape[0]):
            raise ShapeMismatch(f"coupling {W.shape} does not pair {F.shape} with {G.shape}")
        w = W.sum(axis=1)
        v = W.sum(axis=0)
        mean_f = w @ F
        mean_g = v @ G
        Fc = F - mean_f
        Gc = G - mean_g
        C_f = Fc.T @ (w[:, None] * Fc)
        C_g = Gc.T @ (v[:, None] * Gc)
        C_fg = Fc.T @ W @ Gc
    Cf_ih = _psd_inv_sqrt(C_f, "C_f", rank_tol)
    Cg_ih = _psd_inv_sqrt(C_g, "C_g", rank_tol)
    U, s, Vt = np.linalg.svd(Cf_ih @ C_fg @ Cg_ih)
    A = U.T @ Cf_ih
    B = Vt @ Cg_ih
    return WhiteningResult(A, B, s, mean_f, mean_g, Fc @ A.T, Gc @ B.T)


def apply_whitening(result: WhiteningResult, F_new=None, G_new=None):
    """Map new encoder outputs with whitening fitted elsewhere.

    Either argument may be ``None``, in which case ``None`` is returned in
    its place.
    """
    out = []
    for M, mean, T in ((F_new, result.mean_f, result.A), (G_new, result.mean_g, result.B)):
        if M is None:
            out.append(None)
            continue
        M = _as_2d(M, "batch")
        if M.shape[1] != T.shape[1]:
            raise ShapeMismatch(f"batch width {M.shape[1]} != {T.shape[1]}")
        out.append((M - mean) @ T.T)
    return tuple(out)


# -- training ------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingConfig:
    d: int
    epochs: int = 1000
    learning_rate: float = 0.01
    batch_size: int = 256
    epsilon: float = 1e-3
    clip_bound: float = nn.DEFAULT_CLIP
    seed: int = 0
    f_arch: tuple[int, ...] | None = None
    g_arch: tuple[int, ...] | None = None
    activation: str = "tanh"

    def __post_init__(self):
        if self.d < 1:
            raise InvalidConfig(f"d must be >= 1, got {self.d}")
        if self.epsilon <= 0:
            raise InvalidConfig(f"epsilon must be positive, got {self.epsilon}")
        if self.batch_size < 4 * self.d:
            raise InvalidConfig(
                f"batch_size {self.batch_size} is below 4*d = {4 * self.d}; "
                "moment estimates would be rank deficient"
            )
        if self.epochs < 0 or self.learning_rate < 0 or self.clip_bound <= 0:
            raise InvalidConfig("epochs, learning_rate must be >= 0 and clip_bound > 0")
        for name in ("f_arch", "g_arch"):
            arch = getattr(self, name)
            if arch is not None:
                arch = tuple(int(a) for a in arch)
                object.__setattr__(self, name, arch)
                if arch[-1] != self.d:
                    raise InvalidConfig(f"{name} must end in width d={self.d}, got {list(arch)}")

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainingConfig":
        unknown = set(doc) - set(CONFIG_KEYS)
        if unknown:
            raise InvalidConfig(f"unknown config keys: {sorted(unknown)}")
        if "d" not in doc:
            raise InvalidConfig("config must set 'd'")
        return cls(**doc)

    @classmethod
    def from_json(cls, path) -> "TrainingConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        doc = asdict(self)
        for k in ("f_arch", "g_arch"):
            if doc[k] is not None:
                doc[k] = list(doc[k])
        return doc


class TrainResult(NamedTuple):
    f_net: nn.FeedforwardNet
    g_net: nn.FeedforwardNet
    loss_history: list
    full_batch: bool


Batch = tuple  # (x rows, y rows, coupling or None)


def _descend(
    config: TrainingConfig,
    f_net: nn.FeedforwardNet,
    g_net: nn.FeedforwardNet,
    batches: Callable[[int], list],
    callback=None,
) -> tuple[nn.FeedforwardNet, nn.FeedforwardNet, list]:
    history = []
    lr = config.learning_rate
    for epoch in range(config.epochs):
        losses = []
        for xb, yb, W in batches(epoch):
            F_out, f_cache = nn.forward(f_net, xb, clip=config.clip_bound)
            G_out, g_cache = nn.forward(g_net, yb)
            try:
                loss, dF, dG = centered_loss(F_out, G_out, config.epsilon, W)
            except NumericalFailure as exc:
                raise NumericalFailure(f"epoch {epoch}: {exc}") from exc
            if not np.isfinite(loss):
                raise NumericalFailure(f"epoch {epoch}: loss is not finite")
            f_net = nn.sgd_step(f_net, nn.backward(f_net, f_cache, dF), lr)
            g_net = nn.sgd_step(g_net, nn.backward(g_net, g_cache, dG), lr)
            losses.append(loss)
        history.append(float(np.mean(losses)))
        if callback is not None:
            callback(epoch, history[-1])
    return f_net, g_net, history


def _init_nets(config, f_arch, g_arch, x_dim, y_dim):
    f_arch = tuple(f_arch or config.f_arch or (x_dim, config.d))
    g_arch = tuple(g_arch or config.g_arch or (y_dim, config.d))
    for name, arch, width in (("f_arch", f_arch, x_dim), ("g_arch", g_arch, y_dim)):
        if arch[0] != width or arch[-1] != config.d:
            raise InvalidConfig(
                f"{name} {list(arch)} must start at input width {width} and end at d={config.d}"
            )
    f_net = nn.init(f_arch, config.activation, config.seed)
    g_net = nn.init(g_arch, config.activation, config.seed + 1)
    return f_net, g_net


def _row_batches(n: int, config: TrainingConfig):
    """Index batches per epoch: the full range, or shuffled mini-batches."""
    if n <= FULL_BATCH_LIMIT:
        idx = np.arange(n)
        return True, lambda epoch: [idx]
    rng = np.random.default_rng(config.seed + 2)

    def batches(epoch):
        perm = rng.permutation(n)
        bs = config.batch_size
        return [perm[i : i + bs] for i in range(0, n - bs + 1, bs)]

    return False, batches


def train(
    config: TrainingConfig,
    data: SamplePairs,
    f_arch=None,
    g_arch=None,
    callback=None,
) -> TrainResult:
    """Fit F-Net and G-Net on paired samples by plain gradient descent.

    Moments use the whole data set when it has at most 8192 rows and
    shuffled mini-batches of ``config.batch_size`` otherwise.
    """
    f_net, g_net = _init_nets(config, f_arch, g_arch, data.xs.shape[1], data.ys.shape[1])
    full, index_batches = _row_batches(len(data), config)
    xs, ys = data.xs, data.ys

    def batches(epoch):
        return [(xs[i], ys[i], None) for i in index_batches(epoch)]

    f_net, g_net, history = _descend(config, f_net, g_net, batches, callback)
    return TrainResult(f_net, g_net, history, full)


def embed(result: TrainResult, data: SamplePairs, clip: float | None = nn.DEFAULT_CLIP):
    """Encoder outputs ``(F, G)`` for ``data``."""
    F, _ = nn.forward(result.f_net, data.xs, clip=clip)
    G, _ = nn.forward(result.g_net, data.ys)
    return F, G


# -- black-box models ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlackboxResult:
    f_net: nn.FeedforwardNet
    g_net: nn.FeedforwardNet
    whitening: WhiteningResult
    loss_history: list
    p_y: np.ndarray
    label_functions: np.ndarray  # m x d whitened g(y), one row per label

    @property
    def sigma_hat(self) -> np.ndarray:
        return self.whitening.sigma_hat


def check_likelihoods(P, tol: float = 1e-6) -> np.ndarray:
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 2:
        raise InvalidLikelihood(f"likelihoods must be an n x m matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise InvalidLikelihood("likelihoods must be finite and non-negative")
    bad = np.flatnonzero(np.abs(P.sum(axis=1) - 1.0) > tol)
    if bad.size:
        raise InvalidLikelihood(
            f"{bad.size} rows do not sum to 1 (first: row {bad[0]}, sum {P[bad[0]].sum()!r})"
        )
    return P


def decompose_blackbox(
    model,
    x_samples,
    config: TrainingConfig,
    f_arch=None,
    g_arch=None,
    callback=None,
) -> BlackboxResult:
    """Estimate the PICs of ``P_X * model`` without sampling labels.

    ``model`` maps an ``n x p`` input array to an ``n x m`` matrix of label
    probabilities (or is that matrix already). Every expectation over the
    label is the exact sum over the ``m`` labels weighted by the model's
    probabilities. The G-Net reads one-hot label codes; by default it is a
    single affine layer, i.e. a free table of label embeddings.
    """
    X = _as_2d(x_samples, "x_samples")
    P = check_likelihoods(model(X) if callable(model) else model)
    n, m = P.shape
    if n != X.shape[0]:
        raise ShapeMismatch(f"model returned {n} rows for {X.shape[0]} inputs")
    if config.d > m - 1:
        raise InvalidConfig(f"d={config.d} exceeds the {m - 1} non-constant label functions")
    labels = np.eye(m)
    f_net, g_net = _init_nets(config, f_arch, g_arch or config.g_arch or (m, config.d), X.shape[1], m)
    full, index_batches = _row_batches(n, config)

    def batches(epoch):
        out = []
        for idx in index_batches(epoch):
            out.append((X[idx], labels, P[idx] / len(idx)))
        return out

    f_net, g_net, history = _descend(config, f_net, g_net, batches, callback)
    F, _ = nn.forward(f_net, X, clip=config.clip_bound)
    G, _ = nn.forward(g_net, labels)
    W = P / n
    wres = whiten(F, G, coupling=W)
    return BlackboxResult(f_net, g_net, wres, history, W.sum(axis=0), wres.G)


# -- tabular encoders ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TabularFit:
    loss: float
    f_table: np.ndarray
    g_table: np.ndarray
    whitening: WhiteningResult


def fit_tabular(
    joint,
    d: int,
    epsilon: float = 1e-3,
    seed: int = 0,
    tol: float = 1e-12,
    max_iter: int = 5000,
    restarts: int = 3,
) -> TabularFit:
    """Minimize the loss over free per-category embeddings of a known joint.

    Each category of X and Y gets its own ``d``-vector; expectations are
    exact sums under the joint. Uses L-BFGS with the analytic gradients.

    The regularized loss approaches its infimum only as the scale of ``f``
    grows (the ``epsilon`` term then fades), which plain descent reaches
    slowly for weak components. After each L-BFGS run the ``f`` table is
    therefore whitened and scaled up, which can only lower the loss, and
    the search resumes; at most ``restarts`` times.
    """
    joint: DiscreteJoint = validate_joint(joint)
    nx, ny = joint.shape
    W = joint.pmf
    w = W.sum(axis=1)
    rng = np.random.default_rng(seed)
    theta = rng.standard_normal((nx + ny) * d)

    def unpack(theta):
        return theta[: nx * d].reshape(nx, d), theta[nx * d :].reshape(ny, d)

    def fun(theta):
        Ft, Gt = unpack(theta)
        loss, dF, dG = centered_loss(Ft, Gt, epsilon, W)
        return loss, np.concatenate([dF.ravel(), dG.ravel()])

    best = np.inf
    scale = 100.0 / np.sqrt(epsilon)
    for _ in range(restarts + 1):
        res = minimize(
            fun, theta, jac=True, method="L-BFGS-B",
            options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-10},
        )
        improved = best - res.fun
        best, theta = float(res.fun), res.x
        if improved <= tol:
            break
        Ft, Gt = unpack(theta)
        Fc = Ft - w @ Ft
        C_f = Fc.T @ (w[:, None] * Fc)
        try:
            Fw = scale * Fc @ _psd_inv_sqrt(C_f, "C_f", 1e-12)
        except RankDeficient:
            break
        theta = np.concatenate([Fw.ravel(), Gt.ravel()])
    Ft, Gt = unpack(theta)
    return TabularFit(best, Ft, Gt, whiten(Ft, Gt, coupling=W))
