"""Domain types shared across the package.

A :class:`DiscreteJoint` is a validated finite pmf over ``X x Y``. A
:class:`PicDecomposition` holds principal-function tables and the
associated singular values. :class:`SamplePairs` carries paired
observations for the neural estimator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

INPUT_SUM_TOL = 1e-9


class PicError(Exception):
    """Base class for errors raised by this package."""


class InvalidJoint(PicError, ValueError):
    """A probability matrix failed validation.

    ``problems`` lists the names of every failed check, so callers can
    see all defects of the input even though a single exception is raised.
    """

    def __init__(self, message: str, problems: Sequence[str] = ()):
        super().__init__(message)
        self.problems = tuple(problems) or (type(self).__name__,)


class NegativeEntry(InvalidJoint):
    pass


class NotNormalized(InvalidJoint):
    pass


class ZeroMarginal(InvalidJoint):
    pass


class EmptyInput(PicError, ValueError):
    pass


class ShapeMismatch(PicError, ValueError):
    pass


class NumericalFailure(PicError, ArithmeticError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    """Joint pmf with cached marginals. Build it with :func:`validate_joint`."""

    pmf: np.ndarray
    row_labels: tuple
    col_labels: tuple
    p_x: np.ndarray = field(repr=False)
    p_y: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.pmf.shape

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DiscreteJoint):
            return NotImplemented
        return (
            self.row_labels == other.row_labels
            and self.col_labels == other.col_labels
            and np.array_equal(self.pmf, other.pmf)
        )

    __hash__ = None  # type: ignore[assignment]


def validate_joint(
    pmf: Any,
    row_labels: Sequence | None = None,
    col_labels: Sequence | None = None,
) -> DiscreteJoint:
    """Validate a probability matrix and return a :class:`DiscreteJoint`.

    The matrix must be non-negative and sum to one within ``1e-9``; it is
    then renormalized exactly. Rows or columns with zero total mass are
    rejected rather than dropped. Passing an existing ``DiscreteJoint``
    returns it unchanged.
    """
    if isinstance(pmf, DiscreteJoint):
        return pmf
    P = np.asarray(pmf, dtype=np.float64)
    if P.ndim != 2 or P.size == 0:
        raise EmptyInput(f"expected a non-empty 2-D matrix, got shape {P.shape}")
    if not np.all(np.isfinite(P)):
        raise NotNormalized("matrix contains non-finite entries")

    failures: list[tuple[type, str]] = []
    if np.any(P < 0):
        i, j = np.argwhere(P < 0)[0]
        failures.append((NegativeEntry, f"negative entry {P[i, j]!r} at ({i}, {j})"))
    total = P.sum()
    if abs(total - 1.0) > INPUT_SUM_TOL:
        failures.append((NotNormalized, f"entries sum to {total!r}, not 1"))
    zero_rows = np.flatnonzero(P.sum(axis=1) <= 0)
    zero_cols = np.flatnonzero(P.sum(axis=0) <= 0)
    if zero_rows.size or zero_cols.size:
        failures.append(
            (ZeroMarginal, f"zero marginal rows {zero_rows.tolist()} cols {zero_cols.tolist()}")
        )
    if failures:
        cls, _ = failures[0]
        raise cls("; ".join(m for _, m in failures), [c.__name__ for c, _ in failures])

    P = P / total
    nx, ny = P.shape
    rows = tuple(row_labels) if row_labels is not None else tuple(str(i) for i in range(nx))
    cols = tuple(col_labels) if col_labels is not None else tuple(str(j) for j in range(ny))
    if len(rows) != nx or len(cols) != ny:
        raise ShapeMismatch(
            f"labels ({len(rows)}, {len(cols)}) do not match pmf shape {P.shape}"
        )
    return DiscreteJoint(
        pmf=_frozen(P),
        row_labels=rows,
        col_labels=cols,
        p_x=_frozen(P.sum(axis=1)),
        p_y=_frozen(P.sum(axis=0)),
    )


@dataclass(frozen=True, eq=False)
class PicDecomposition:
    """Principal functions and singular values of a discrete joint.

    ``F[:, j]`` holds the values of the j-th non-constant principal function
    of X on each row category and ``G[:, j]`` the same for Y. ``sigmas`` are
    the correlations ``E[f_j(X) g_j(Y)]``; ``lambdas = sigmas ** 2``.
    """

    d: int
    sigmas: np.ndarray
    lambdas: np.ndarray
    F: np.ndarray
    G: np.ndarray
    p_x: np.ndarray
    p_y: np.ndarray
    row_labels: tuple = ()
    col_labels: tuple = ()

    @property
    def full_rank(self) -> int:
        return min(self.F.shape[0], self.G.shape[0]) - 1


@dataclass(frozen=True, eq=False)
class SamplePairs:
    """``n`` paired records. ``xs`` and ``ys`` are ``(n, p)`` and ``(n, q)`` arrays."""

    xs: np.ndarray
    ys: np.ndarray
    latent: np.ndarray | None = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=np.float64)
        ys = np.asarray(self.ys, dtype=np.float64)
        if xs.ndim == 1:
            xs = xs[:, None]
        if ys.ndim == 1:
            ys = ys[:, None]
        if xs.shape[0] != ys.shape[0]:
            raise ShapeMismatch(f"xs has {xs.shape[0]} rows, ys has {ys.shape[0]}")
        if xs.shape[0] < 2:
            raise EmptyInput("need at least two sample pairs")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    def __len__(self) -> int:
        return self.xs.shape[0]

    def subset(self, idx) -> "SamplePairs":
        lat = None if self.latent is None else np.asarray(self.latent)[idx]
        return SamplePairs(self.xs[idx], self.ys[idx], lat)
