"""Random number streams, normal distribution functions, default-time marginals.

Randomness is counter-based: one Philox stream is keyed by the master seed,
and path ``p`` owns the fixed counter block ``[p * S, (p + 1) * S)`` of
64-bit draws, where ``S`` is the per-path stride (the requested vector
length padded to the Philox tick of four words). Identical (seed, path)
therefore reproduces identical variates whether paths are generated one at
a time, in bulk, or split across any number of workers, and repeated runs
reuse the same draws (common random numbers).

Normals are produced by inverting the uniform draws with a rational
approximation of the inverse normal CDF (max |Phi(z) - u| well under 1e-9),
which keeps the per-path draw count fixed, unlike rejection samplers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox
from scipy import special

from ._kernels import ndtri_strided
from .errors import DomainError, NonPositiveHazard

_MAX_SEED = 2**64


def _stride_words(n: int) -> int:
    # Philox advances in ticks of four 64-bit words; pad each path's block.
    return 4 * ((n + 3) // 4)


def _check_seed(seed: int) -> int:
    if not (0 <= int(seed) < _MAX_SEED):
        raise DomainError(f"seed must be in [0, 2**64), got {seed}")
    return int(seed)


@dataclass(frozen=True)
class RngStream:
    """Addressable slice of the master random stream for one path."""

    seed: int
    stream_id: int

    def __post_init__(self) -> None:
        _check_seed(self.seed)
        if self.stream_id < 0:
            raise DomainError(f"stream_id must be >= 0, got {self.stream_id}")

    def uniforms(self, n: int) -> np.ndarray:
        """n uniform(0,1) draws from this path's counter block."""
        if n < 1:
            raise DomainError(f"need n >= 1, got {n}")
        bg = Philox(key=self.seed)
        bg.advance(self.stream_id * (_stride_words(n) // 4))
        return Generator(bg).random(n)

    def normals(self, n: int) -> np.ndarray:
        return sample_standard_normals(self, n)


def sample_standard_normals(stream: RngStream, n: int) -> np.ndarray:
    """n i.i.d. standard normal draws, deterministic per (seed, stream_id)."""
    u = stream.uniforms(n).reshape(1, n)
    out = np.empty((1, n))
    ndtri_strided(u, out)
    return out[0]


def uniform_block(seed: int, start_path: int, n_paths: int, n_dims: int) -> np.ndarray:
    """Uniform draws for paths [start_path, start_path + n_paths), shape (n_paths, stride).

    Row ``p`` reproduces ``RngStream(seed, start_path + p).uniforms(n_dims)``
    in its first ``n_dims`` columns.
    """
    s = _stride_words(n_dims)
    bg = Philox(key=_check_seed(seed))
    bg.advance(start_path * (s // 4))
    return Generator(bg).random((n_paths, s))


def normal_block(seed: int, start_path: int, n_paths: int, n_dims: int) -> np.ndarray:
    """Standard normal draws for a contiguous range of paths, shape (n_paths, n_dims)."""
    u = uniform_block(seed, start_path, n_paths, n_dims)
    out = np.empty((n_paths, n_dims))
    ndtri_strided(u, out)
    return out


def normal_cdf(x):
    """Standard normal CDF, accurate to ~1 ulp (erfc based)."""
    return special.ndtr(x)


def normal_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=np.float64)
    out = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def inverse_normal_cdf(u):
    """Inverse standard normal CDF on (0, 1).

    Uses Acklam's rational approximation; |Phi(result) - u| <= 1e-9.
    """
    arr = np.atleast_1d(np.asarray(u, dtype=np.float64))
    if np.any(arr <= 0.0) or np.any(arr >= 1.0):
        raise DomainError("inverse_normal_cdf requires 0 < u < 1")
    out = np.empty((1, arr.size))
    ndtri_strided(arr.reshape(1, -1), out)
    out = out.reshape(arr.shape)
    return float(out[0]) if np.isscalar(u) or np.asarray(u).ndim == 0 else out


@dataclass(frozen=True)
class ExponentialMarginal:
    """Default-time marginal M(t) = 1 - exp(-hazard * t), hazard per unit time."""

    hazard: float

    def __post_init__(self) -> None:
        if not self.hazard > 0.0:
            raise NonPositiveHazard(f"hazard must be > 0, got {self.hazard}")

    def cdf(self, t):
        t = np.asarray(t, dtype=np.float64)
        out = -np.expm1(-self.hazard * t)
        return float(out) if out.ndim == 0 else out

    def inverse(self, u):
        u_arr = np.asarray(u, dtype=np.float64)
        if np.any(u_arr <= 0.0) or np.any(u_arr >= 1.0):
            raise DomainError("marginal inverse requires 0 < u < 1")
        out = -np.log1p(-u_arr) / self.hazard
        return float(out) if out.ndim == 0 else out

    def pdf(self, t):
        t_arr = np.asarray(t, dtype=np.float64)
        if np.any(t_arr < 0.0):
            raise DomainError("default-time density requires t >= 0")
        out = self.hazard * np.exp(-self.hazard * t_arr)
        return float(out) if out.ndim == 0 else out


def marginal_inverse(marginal: ExponentialMarginal, u):
    """Default time with cumulative probability u: M^{-1}(u) = -ln(1-u)/hazard."""
    return marginal.inverse(u)


def marginal_pdf(marginal: ExponentialMarginal, t):
    """Density of the default time at t."""
    return marginal.pdf(t)
