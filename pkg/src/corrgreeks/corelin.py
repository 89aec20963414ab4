"""Dense correlation-matrix linear algebra.

Provides the Cholesky factorization rho = C C^T of a correlation matrix
together with its directional (tangent) derivative and its reverse-mode
(adjoint) derivative. The adjoint consumes a lower-triangular seed matrix
Cbar of payout sensitivities to the factor entries and returns the
sensitivities to the pairwise correlations,

    rhobar[i, j] = sum_{l,m} dC[l, m]/drho[i, j] * Cbar[l, m],   i > j,

where rho[i, j] and rho[j, i] are treated as a single parameter. The
reverse sweep runs over the factorization loop backwards, consuming the
stored factor, so its operation count stays within a small multiple of the
factorization itself (see ``FlopCounter``).

Sensitivities are reported per strictly-lower pair (i, j), i > j, in
row-major order; ``pair_index`` defines the flat layout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    EntryOutOfRange,
    DiagonalNotOne,
    NotPositiveSemidefinite,
    NotSquare,
    SingularPivot,
)

# Pivots in [-PIVOT_TOL, 0] clamp to zero (semidefinite boundary); below
# -PIVOT_TOL the matrix is rejected. Derivatives additionally require
# every diagonal factor entry to exceed SINGULAR_TOL.
PIVOT_TOL = 1e-12
SINGULAR_TOL = 1e-14

DIAG_TOL = 1e-12


class FlopCounter:
    """Accumulates floating-point operation counts for instrumented routines."""

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int) -> None:
        self.count += int(n)


def pair_index(i: int, j: int) -> int:
    """Flat index of the strictly-lower pair (i, j), i > j, row-major."""
    if not i > j >= 0:
        raise ValueError(f"need i > j >= 0, got ({i}, {j})")
    return i * (i - 1) // 2 + j


def pair_list(n: int) -> list[tuple[int, int]]:
    """All strictly-lower pairs of an n x n matrix in flat order."""
    return [(i, j) for i in range(1, n) for j in range(i)]


def n_pairs(n: int) -> int:
    return n * (n - 1) // 2


@dataclass(frozen=True)
class CorrelationMatrix:
    """Validated symmetric PSD correlation matrix with unit diagonal."""

    n: int
    entries: np.ndarray

    def pair_values(self) -> np.ndarray:
        """Strictly-lower entries in flat pair order."""
        return self.entries[np.tril_indices(self.n, -1)].copy()


@dataclass(frozen=True)
class CholeskyFactor:
    """Lower-triangular factor C with C C^T equal to the source correlation."""

    n: int
    entries: np.ndarray

    def min_pivot(self) -> float:
        return float(np.min(np.diag(self.entries)))


@dataclass(frozen=True)
class LowerTriangularSeed:
    """Lower-triangular adjoint weights Cbar (or a tangent Cdot)."""

    n: int
    entries: np.ndarray


@dataclass(frozen=True)
class CorrelationGradient:
    """Per-pair correlation sensitivities, flat over strictly-lower pairs."""

    n: int
    values: np.ndarray

    def __getitem__(self, pair: tuple[int, int]) -> float:
        i, j = pair
        return float(self.values[pair_index(i, j)])

    def as_matrix(self) -> np.ndarray:
        """Symmetric matrix view with zero diagonal (for display/tests)."""
        out = np.zeros((self.n, self.n))
        out[np.tril_indices(self.n, -1)] = self.values
        return out + out.T


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr, dtype=np.float64)
    arr.setflags(write=False)
    return arr


def seed_from_matrix(m: np.ndarray) -> LowerTriangularSeed:
    """Build a seed from any square matrix by taking its lower triangle."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSquare(f"seed must be square, got shape {m.shape}")
    return LowerTriangularSeed(m.shape[0], _freeze(np.tril(m)))


def seed_dot(a: LowerTriangularSeed, b: LowerTriangularSeed) -> float:
    """Frobenius inner product of two lower-triangular seeds."""
    return float(np.sum(a.entries * b.entries))


def validate_correlation(m) -> CorrelationMatrix:
    """Validate a square matrix as a correlation matrix.

    Symmetry is enforced by reading the lower triangle and mirroring it.
    Positive semidefiniteness is checked operationally: the factorization
    must succeed with pivots above ``-PIVOT_TOL``.
    """
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise NotSquare(f"correlation matrix must be square, got shape {arr.shape}")
    n = arr.shape[0]
    d = np.diag(arr)
    bad = np.where(np.abs(d - 1.0) > DIAG_TOL)[0]
    if bad.size:
        raise DiagonalNotOne(f"diagonal entry {bad[0]} is {d[bad[0]]!r}, expected 1")
    lower = np.tril(arr, -1)
    if np.any(np.abs(lower) > 1.0):
        i, j = np.unravel_index(int(np.argmax(np.abs(lower))), lower.shape)
        raise EntryOutOfRange(f"correlation ({i},{j}) = {lower[i, j]!r} outside [-1, 1]")
    sym = lower + lower.T + np.eye(n)
    rho = CorrelationMatrix(n, _freeze(sym))
    cholesky_factorize(rho)  # raises NotPositiveSemidefinite on a bad pivot
    return rho


def uniform_correlation(n: int, off_diagonal: float) -> CorrelationMatrix:
    """Equicorrelation matrix with a single off-diagonal value."""
    m = np.full((n, n), float(off_diagonal))
    np.fill_diagonal(m, 1.0)
    return validate_correlation(m)


def cholesky_factorize(rho: CorrelationMatrix, counter: FlopCounter | None = None) -> CholeskyFactor:
    """Lower-triangular factor of ``rho`` via the unblocked outer-product loop.

    Pivots in [-PIVOT_TOL, 0] are clamped to zero, accepting the
    semidefinite boundary (e.g. perfectly correlated names); anything
    further negative raises ``NotPositiveSemidefinite``.
    """
    n = rho.n
    a = np.tril(rho.entries)
    for j in range(n):
        pivot = a[j, j]
        if pivot < -PIVOT_TOL:
            raise NotPositiveSemidefinite(
                f"pivot {j} is {pivot!r} < -{PIVOT_TOL}; matrix is not PSD"
            )
        d = math.sqrt(pivot) if pivot > 0.0 else 0.0
        a[j, j] = d
        col = a[j + 1 :, j]
        if d > 0.0:
            col /= d
        else:
            col[:] = 0.0
        a[j + 1 :, j + 1 :] -= np.outer(col, col)
        if counter is not None:
            m = n - 1 - j
            counter.add(2 * m * m + m + 1)
    return CholeskyFactor(n, _freeze(np.tril(a)))


def cholesky_tangent(
    rho: CorrelationMatrix,
    factor: CholeskyFactor,
    pair: tuple[int, int],
    counter: FlopCounter | None = None,
) -> LowerTriangularSeed:
    """Directional derivative Cdot = dC/drho[i, j] for one strictly-lower pair.

    The symmetric entry rho[j, i] moves in lockstep. Forward-differentiates
    the factorization loop; requires strictly positive pivots.
    """
    i, j = pair
    n = rho.n
    if not (0 <= j < i < n):
        raise ValueError(f"pair must satisfy 0 <= j < i < n, got {pair}")
    c = factor.entries
    _require_nonsingular(c)
    adot = np.zeros((n, n))
    adot[i, j] = 1.0
    cdot = np.zeros((n, n))
    for k in range(n):
        d = c[k, k]
        ddot = adot[k, k] / (2.0 * d)
        cdot[k, k] = ddot
        col = c[k + 1 :, k]
        coldot = (adot[k + 1 :, k] - col * ddot) / d
        cdot[k + 1 :, k] = coldot
        adot[k + 1 :, k + 1 :] -= np.outer(coldot, col) + np.outer(col, coldot)
        if counter is not None:
            m = n - 1 - k
            counter.add(4 * m * m + 3 * m + 2)
    return LowerTriangularSeed(n, _freeze(cdot))


def cholesky_adjoint(
    factor: CholeskyFactor,
    cbar: LowerTriangularSeed,
    counter: FlopCounter | None = None,
) -> CorrelationGradient:
    """Reverse-mode map Cbar -> rhobar through the factorization.

    Runs the factorization loop backwards with the stored factor standing in
    for the forward sweep. The in-place adjoint ``abar`` starts as the seed
    and, after the sweep, its strict lower triangle holds the per-pair
    correlation sensitivities (the loop never reads the upper triangle of
    its input, so each strictly-lower entry is one whole pair parameter).
    """
    n = factor.n
    c = factor.entries
    if cbar.n != n:
        raise ValueError(f"seed dimension {cbar.n} != factor dimension {n}")
    _require_nonsingular(c)
    abar = np.tril(cbar.entries).astype(np.float64)
    for j in range(n - 1, -1, -1):
        d = c[j, j]
        col = c[j + 1 :, j]
        block = abar[j + 1 :, j + 1 :]
        # (B + B^T) @ col with B lower: the diagonal is counted twice, as
        # required by the symmetric trailing update it reverses.
        t = block @ col + col @ block
        cb = abar[j + 1 :, j] - t
        abar[j + 1 :, j] = cb / d
        s = cb @ col
        abar[j, j] = (abar[j, j] - s / d) / (2.0 * d)
        if counter is not None:
            m = n - 1 - j
            counter.add(4 * m * m + 4 * m + 4)
    return CorrelationGradient(n, _freeze(abar[np.tril_indices(n, -1)]))


def bump_pair(rho: CorrelationMatrix, pair: tuple[int, int], h: float) -> CorrelationMatrix:
    """Shift one correlation pair (both symmetric entries) by ``h`` and revalidate."""
    i, j = pair
    if not (0 <= j < i < rho.n):
        raise ValueError(f"pair must satisfy 0 <= j < i < n, got {pair}")
    bumped = rho.entries.copy()
    bumped[i, j] += h
    bumped[j, i] += h
    return validate_correlation(bumped)


def _require_nonsingular(c: np.ndarray) -> None:
    d = np.diag(c)
    if np.any(d <= SINGULAR_TOL):
        k = int(np.argmax(d <= SINGULAR_TOL))
        raise SingularPivot(
            f"factor diagonal {k} is {d[k]!r} <= {SINGULAR_TOL}; derivative undefined"
        )
