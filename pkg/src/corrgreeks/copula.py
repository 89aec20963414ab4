"""Per-path Gaussian-copula sampling with a tape, plus its derivative sweeps.

The forward sweep draws independent normals, correlates them through the
Cholesky factor, maps them to uniforms and then to default times, recording
every intermediate vector on a :class:`PathTape`. The adjoint sweep walks
that tape backwards, turning payout sensitivities to the default times into
a lower-triangular seed of sensitivities to the factor entries:

    ubar_k = xbar_k / m_k(x_k)
    zbar_k = ubar_k * phi(z_k)
    cbar    = tril(zbar ztilde^T)

The tangent counterpart pushes a factor perturbation forward instead:
xdot_i = phi(z_i) * (cdot ztilde)_i / m_i(x_i). Both sweeps reuse only tape
contents; they never touch fresh randomness.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corelin import CholeskyFactor, LowerTriangularSeed, _freeze
from .errors import DomainError
from .stochastics import (
    ExponentialMarginal,
    RngStream,
    normal_cdf,
    normal_pdf,
    sample_standard_normals,
)

U_CLAMP_LO = 1e-16
U_CLAMP_HI = 1.0 - 1e-16


@dataclass(frozen=True)
class PathTape:
    """Intermediates of one simulated path, as needed by the backward sweep.

    ``n_clamped`` counts uniforms that hit the tail clamp; at double
    precision this is expected to stay at zero (probability < 1e-12 per
    draw).
    """

    z_tilde: np.ndarray
    z: np.ndarray
    u: np.ndarray
    x: np.ndarray
    n_clamped: int = 0


@dataclass(frozen=True)
class PathAdjoint:
    """Adjoints of one path: payout sensitivities to each intermediate."""

    x_bar: np.ndarray
    u_bar: np.ndarray
    z_bar: np.ndarray
    c_bar: LowerTriangularSeed


def _hazards(marginals: list[ExponentialMarginal]) -> np.ndarray:
    return np.array([m.hazard for m in marginals])


def simulate_path(
    factor: CholeskyFactor,
    marginals: list[ExponentialMarginal],
    stream: RngStream,
) -> PathTape:
    """Draw one path of correlated default times, recording the tape."""
    n = factor.n
    if len(marginals) != n:
        raise DomainError(f"need {n} marginals, got {len(marginals)}")
    z_tilde = sample_standard_normals(stream, n)
    z = factor.entries @ z_tilde
    u_raw = normal_cdf(z)
    u = np.clip(u_raw, U_CLAMP_LO, U_CLAMP_HI)
    n_clamped = int(np.count_nonzero(u != u_raw))
    lam = _hazards(marginals)
    x = -np.log1p(-u) / lam
    return PathTape(_freeze(z_tilde), _freeze(z), _freeze(u), _freeze(x), n_clamped)


def adjoint_sweep(
    tape: PathTape,
    factor: CholeskyFactor,
    marginals: list[ExponentialMarginal],
    x_bar: np.ndarray,
) -> PathAdjoint:
    """Propagate payout sensitivities backwards from default times to the factor."""
    n = factor.n
    x_bar = np.asarray(x_bar, dtype=np.float64)
    if x_bar.shape != (n,):
        raise DomainError(f"x_bar must have shape ({n},), got {x_bar.shape}")
    lam = _hazards(marginals)
    density = lam * np.exp(-lam * tape.x)
    u_bar = x_bar / density
    z_bar = u_bar * normal_pdf(tape.z)
    c_bar = np.tril(np.outer(z_bar, tape.z_tilde))
    return PathAdjoint(
        _freeze(x_bar.copy()),
        _freeze(u_bar),
        _freeze(z_bar),
        LowerTriangularSeed(n, _freeze(c_bar)),
    )


def forward_path_sensitivity(
    tape: PathTape,
    marginals: list[ExponentialMarginal],
    c_dot: LowerTriangularSeed,
) -> np.ndarray:
    """Default-time perturbations xdot produced by a factor perturbation cdot."""
    lam = _hazards(marginals)
    density = lam * np.exp(-lam * tape.x)
    z_dot = c_dot.entries @ tape.z_tilde
    return normal_pdf(tape.z) * z_dot / density
