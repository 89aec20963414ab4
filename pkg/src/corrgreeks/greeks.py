"""Monte Carlo price and pairwise correlation sensitivities.

Three estimators of dV/drho for every strictly-lower correlation pair:

``bump``
    One-sided finite differences with common random numbers: each pair is
    shifted by ``bump_size`` and the full simulation is repeated on the same
    counter-based draws; standard errors come from the per-path differences.

``forward``
    Tangent mode: the factor derivative Cdot is precomputed per pair and
    pushed through every path, accumulating the pathwise estimator per pair.
    Cost grows with the number of pairs.

``aad_per_path`` / ``aad_binned``
    Reverse mode: each path's payout adjoint is pulled back to a
    lower-triangular factor seed Cbar. Per-path seeds are either converted
    to correlation sensitivities individually (``aad_per_path``) or averaged
    over ``n_bins`` contiguous bins first (``aad_binned``), in which case
    only ``n_bins`` adjoint factorizations are needed and the per-bin
    estimates yield a confidence interval. Because the conversion is linear
    in the seed, the point estimate does not depend on the binning; only the
    standard error does.

Greeks always differentiate the smoothed payout; reported prices always
average the sharp payout.

All methods stream paths through fixed-size chunks in a fixed order, so
results are bitwise reproducible for a given seed regardless of the worker
thread count.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from . import _kernels
from .corelin import (
    CholeskyFactor,
    CorrelationGradient,
    CorrelationMatrix,
    LowerTriangularSeed,
    bump_pair,
    cholesky_adjoint,
    cholesky_factorize,
    n_pairs,
    pair_list,
)
from .errors import (
    BumpBreaksPSD,
    ConfigError,
    EntryOutOfRange,
    NotPositiveSemidefinite,
    UnequalBins,
)
from .payout import BasketDefaultSwap
from .stochastics import uniform_block

METHODS = ("bump", "forward", "aad_per_path", "aad_binned")

CHUNK_PATHS = 32768

# Shrink a PSD-breaking bump by 10x this many times before giving up.
BUMP_SHRINKS = 3


@dataclass(frozen=True)
class EngineConfig:
    """Full description of one pricing/Greeks run.

    ``n_paths`` is rounded down to a multiple of ``n_bins`` (with a warning)
    so bins always hold equal path counts.
    """

    n_names: int
    n_paths: int
    seed: int
    hazards: np.ndarray
    contract: BasketDefaultSwap
    correlation: CorrelationMatrix
    method: str = "aad_binned"
    n_bins: int = 20
    bump_size: float = 1e-4

    def __post_init__(self) -> None:
        lam = np.asarray(self.hazards, dtype=np.float64)
        if lam.shape != (self.n_names,):
            raise ConfigError(f"hazards must have shape ({self.n_names},), got {lam.shape}")
        if np.any(lam <= 0.0):
            raise ConfigError("hazards must be strictly positive")
        if self.correlation.n != self.n_names:
            raise ConfigError(
                f"correlation is {self.correlation.n}x{self.correlation.n}, expected {self.n_names}"
            )
        if self.contract.n_names != self.n_names:
            raise ConfigError(
                f"contract covers {self.contract.n_names} names, expected {self.n_names}"
            )
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 1 <= self.n_bins <= max(self.n_paths, 1):
            raise ConfigError(f"n_bins must be in [1, n_paths], got {self.n_bins}")
        if not self.bump_size > 0.0:
            raise ConfigError(f"bump_size must be > 0, got {self.bump_size}")
        if self.n_paths < 1:
            raise ConfigError(f"n_paths must be >= 1, got {self.n_paths}")
        n_eff = self.n_bins * (self.n_paths // self.n_bins)
        if n_eff != self.n_paths:
            warnings.warn(
                f"n_paths={self.n_paths} is not a multiple of n_bins={self.n_bins}; "
                f"truncating to {n_eff}",
                stacklevel=2,
            )
        lam = lam.copy()
        lam.setflags(write=False)
        object.__setattr__(self, "hazards", lam)
        object.__setattr__(self, "n_paths", n_eff)


@dataclass(frozen=True)
class MonteCarloValue:
    """Sample mean with its standard error."""

    value: float
    stderr: float
    n_paths: int
    n_clamped: int = 0


@dataclass
class BinAccumulator:
    """Running sum of per-path factor seeds for one bin."""

    sum_cbar: np.ndarray
    count: int = 0

    @classmethod
    def zero(cls, n: int) -> "BinAccumulator":
        return cls(np.zeros((n, n)))

    def add(self, cbar: LowerTriangularSeed) -> None:
        self.sum_cbar += cbar.entries
        self.count += 1

    def add_block(self, cbar_sum: np.ndarray, count: int) -> None:
        self.sum_cbar += cbar_sum
        self.count += int(count)

    def mean_seed(self) -> LowerTriangularSeed:
        if self.count == 0:
            raise UnequalBins("empty bin")
        return LowerTriangularSeed(
            self.sum_cbar.shape[0], np.tril(self.sum_cbar / self.count)
        )


@dataclass(frozen=True)
class GreeksEstimate:
    """Per-pair correlation sensitivities with standard errors and the price."""

    mean: CorrelationGradient
    stderr: CorrelationGradient | None
    n_bins: int
    n_paths: int
    price: MonteCarloValue | None = None
    n_clamped: int = 0
    method: str = ""


class _Moments:
    """Streaming mean/variance accumulator, shifted by the first block's mean."""

    def __init__(self) -> None:
        self.n = 0
        self.shift = None
        self.s1 = None
        self.s2 = None

    def add(self, block: np.ndarray) -> None:
        block = np.atleast_2d(block.T).T  # (B,) -> (B, 1) without copying 2-d input
        if self.shift is None:
            self.shift = block.mean(axis=0)
            self.s1 = np.zeros_like(self.shift)
            self.s2 = np.zeros_like(self.shift)
        centered = block - self.shift
        self.s1 += centered.sum(axis=0)
        self.s2 += np.einsum("bp,bp->p", centered, centered)
        self.n += block.shape[0]

    def mean(self) -> np.ndarray:
        return self.shift + self.s1 / self.n

    def stderr(self) -> np.ndarray:
        if self.n < 2:
            return np.zeros_like(self.shift)
        var = (self.s2 - self.s1 * self.s1 / self.n) / (self.n - 1)
        return np.sqrt(np.maximum(var, 0.0) / self.n)


@dataclass(frozen=True)
class _RunSetup:
    factor: CholeskyFactor
    lam: np.ndarray
    homogeneous: bool
    pay: np.ndarray
    coupon_disc: np.ndarray
    cum_prem: np.ndarray
    recov: np.ndarray


def _setup(config: EngineConfig, factor: CholeskyFactor | None = None) -> _RunSetup:
    factor = factor if factor is not None else cholesky_factorize(config.correlation)
    lam = np.asarray(config.hazards)
    c = config.contract
    return _RunSetup(
        factor=factor,
        lam=lam,
        homogeneous=bool(np.all(lam == lam[0])),
        pay=np.asarray(c.payment_times),
        coupon_disc=c.coupon_discounts(),
        cum_prem=c.cumulative_premium(),
        recov=np.asarray(c.recoveries),
    )


class _Chunk:
    __slots__ = ("start", "stop", "z_tilde", "sharp", "smooth", "xbar", "tau",
                 "kstar", "phistar", "mstar", "n_clamped")


def _run_chunk(config: EngineConfig, setup: _RunSetup, start: int, stop: int,
               want_smooth: bool, want_xbar: bool) -> _Chunk:
    n = config.n_names
    b = stop - start
    u = uniform_block(config.seed, start, b, n)
    z_tilde = np.empty((b, n))
    _kernels.ndtri_strided(u, z_tilde)
    z = z_tilde @ setup.factor.entries.T
    ch = _Chunk()
    ch.start, ch.stop = start, stop
    ch.z_tilde = z_tilde
    ch.sharp = np.empty(b)
    ch.smooth = np.empty(b)
    ch.xbar = np.empty(b)
    ch.tau = np.empty(b)
    ch.kstar = np.empty(b, np.int64)
    ch.phistar = np.empty(b)
    ch.mstar = np.empty(b)
    kern = _kernels.path_kernel_homog if setup.homogeneous else _kernels.path_kernel_general
    c = config.contract
    ch.n_clamped = int(
        kern(z, setup.lam, c.seniority, c.maturity, c.discount_rate,
             c.smoothing_width, setup.pay, setup.coupon_disc, setup.cum_prem,
             setup.recov, want_smooth, want_xbar,
             ch.sharp, ch.smooth, ch.xbar, ch.tau, ch.kstar, ch.phistar, ch.mstar)
    )
    return ch


def _chunk_ranges(n_paths: int, chunk: int = CHUNK_PATHS):
    for start in range(0, n_paths, chunk):
        yield start, min(start + chunk, n_paths)


def price(config: EngineConfig) -> MonteCarloValue:
    """Monte Carlo value of the sharp payout with its standard error."""
    setup = _setup(config)
    mom = _Moments()
    clamped = 0
    for start, stop in _chunk_ranges(config.n_paths):
        ch = _run_chunk(config, setup, start, stop, want_smooth=False, want_xbar=False)
        mom.add(ch.sharp)
        clamped += ch.n_clamped
    return MonteCarloValue(float(mom.mean()[0]),
                           float(mom.stderr()[0]) if config.n_paths > 1 else 0.0,
                           config.n_paths, clamped)


@njit(cache=True, parallel=True)
def _tangent_table_kernel(C, ii, jj, J):
    """Factor tangents for every pair: J[l, m, p] = dC[l, m]/drho_pair[p].

    Forward-differentiates the factorization loop once per pair; only the
    lower triangle of the perturbation workspace is ever read or written.
    """
    n = C.shape[0]
    npair = ii.shape[0]
    for p in prange(npair):
        adot = np.zeros((n, n))
        adot[ii[p], jj[p]] = 1.0
        cdot = np.empty(n)
        for k in range(n):
            d = C[k, k]
            ddot = adot[k, k] / (2.0 * d)
            J[k, k, p] = ddot
            for q in range(k + 1, n):
                cdot[q] = (adot[q, k] - C[q, k] * ddot) / d
                J[q, k, p] = cdot[q]
            for a in range(k + 1, n):
                ca = C[a, k]
                cda = cdot[a]
                for b2 in range(k + 1, a + 1):
                    adot[a, b2] -= cda * C[b2, k] + ca * cdot[b2]


def _tangent_table(factor: CholeskyFactor) -> np.ndarray:
    """Dense tangent table J with shape (n, n, n_pairs)."""
    n = factor.n
    pairs = pair_list(n)
    ii = np.array([i for i, _ in pairs], dtype=np.int64)
    jj = np.array([j for _, j in pairs], dtype=np.int64)
    J = np.zeros((n, n, len(pairs)))
    if pairs:
        _tangent_table_kernel(factor.entries, ii, jj, J)
    return J


def _adjoint_weights(ch: _Chunk) -> np.ndarray:
    # zbar at the realizing name: xbar * phi(z*) / m*(x*); other entries are 0.
    return ch.xbar * ch.phistar / ch.mstar


def correlation_greeks_aad(config: EngineConfig) -> GreeksEstimate:
    """Adjoint-mode Greeks, either per path or with binned seed averaging."""
    if config.method not in ("aad_per_path", "aad_binned"):
        raise ConfigError(f"method {config.method!r} is not an adjoint mode")
    if config.method == "aad_per_path":
        return _aad_per_path(config)
    return _aad_binned(config)


def _aad_binned(config: EngineConfig) -> GreeksEstimate:
    n = config.n_names
    setup = _setup(config)
    n_bins = config.n_bins
    bin_size = config.n_paths // n_bins
    bins = [BinAccumulator.zero(n) for _ in range(n_bins)]
    price_mom = _Moments()
    clamped = 0
    if bin_size <= CHUNK_PATHS:
        chunk = bin_size * max(1, CHUNK_PATHS // bin_size)
    else:
        chunk = CHUNK_PATHS  # a single bin spans several chunks
    for start, stop in _chunk_ranges(config.n_paths, chunk):
        ch = _run_chunk(config, setup, start, stop, want_smooth=True, want_xbar=True)
        price_mom.add(ch.sharp)
        clamped += ch.n_clamped
        w = _adjoint_weights(ch)
        # split the chunk on bin boundaries; chunk size is bin-aligned except
        # when a single bin spans several chunks, which also lands here.
        pos = start
        while pos < stop:
            b = pos // bin_size
            seg_end = min(stop, (b + 1) * bin_size)
            sl = slice(pos - start, seg_end - start)
            seg = seg_end - pos
            w_seg = w[sl]
            onehot = np.zeros((seg, n))
            onehot[np.arange(seg), ch.kstar[sl]] = w_seg
            bins[b].add_block(onehot.T @ ch.z_tilde[sl], seg)
            pos = seg_end
    est = combine_bins(bins, setup.factor)
    pv = MonteCarloValue(float(price_mom.mean()[0]), float(price_mom.stderr()[0]),
                         config.n_paths, clamped)
    return GreeksEstimate(est.mean, est.stderr, n_bins, config.n_paths, pv,
                          clamped, "aad_binned")


def _aad_per_path(config: EngineConfig) -> GreeksEstimate:
    """Per-path conversion of the factor seeds to correlation sensitivities.

    Exploits the linearity of the adjoint factorization map: each path's
    seed is a single weighted row of z-tilde, so its image under the map is
    read off a precomputed tangent table, batched per realizing name through
    BLAS. Equal, path by path, to running the reverse factorization sweep on
    each seed (see the estimator tests), at the same O(n_paths * N^3) cost.
    """
    n = config.n_names
    setup = _setup(config)
    J = _tangent_table(setup.factor)
    mk = [np.ascontiguousarray(J[k, : k + 1, :]) for k in range(n)]
    mom = _Moments()
    price_mom = _Moments()
    clamped = 0
    # cap the (chunk x n_pairs) sensitivity block at ~128 MB
    chunk = max(1024, min(CHUNK_PATHS, int(16e6 / max(1, n_pairs(n)))))
    for start, stop in _chunk_ranges(config.n_paths, chunk):
        ch = _run_chunk(config, setup, start, stop, want_smooth=True, want_xbar=True)
        price_mom.add(ch.sharp)
        clamped += ch.n_clamped
        w = _adjoint_weights(ch)
        rho_bar = np.empty((stop - start, n_pairs(n)))
        order = np.argsort(ch.kstar, kind="stable")
        bounds = np.searchsorted(ch.kstar[order], np.arange(n + 1))
        for k in range(n):
            idx = order[bounds[k]:bounds[k + 1]]
            if idx.size == 0:
                continue
            zg = np.take(ch.z_tilde, idx, axis=0)
            rho_bar[idx] = (zg[:, : k + 1] @ mk[k]) * w[idx, None]
        mom.add(rho_bar)
    pv = MonteCarloValue(float(price_mom.mean()[0]), float(price_mom.stderr()[0]),
                         config.n_paths, clamped)
    return GreeksEstimate(
        CorrelationGradient(n, mom.mean()),
        CorrelationGradient(n, mom.stderr()) if config.n_paths > 1 else None,
        config.n_paths, config.n_paths, pv, clamped, "aad_per_path",
    )


def correlation_greeks_forward(config: EngineConfig) -> GreeksEstimate:
    """Tangent-mode Greeks: one factor tangent per pair pushed through all paths."""
    n = config.n_names
    setup = _setup(config)
    J = _tangent_table(setup.factor)
    npair = n_pairs(n)
    mom = _Moments()
    price_mom = _Moments()
    clamped = 0
    chunk = max(1024, min(CHUNK_PATHS, int(16e6 / max(1, npair))))
    for start, stop in _chunk_ranges(config.n_paths, chunk):
        ch = _run_chunk(config, setup, start, stop, want_smooth=True, want_xbar=True)
        price_mom.add(ch.sharp)
        clamped += ch.n_clamped
        w = _adjoint_weights(ch)
        pdot = np.empty((stop - start, npair))
        for p in range(npair):
            cdot = np.ascontiguousarray(J[:, :, p])
            rows = cdot[ch.kstar]
            pdot[:, p] = w * np.einsum("bn,bn->b", rows, ch.z_tilde)
        mom.add(pdot)
    pv = MonteCarloValue(float(price_mom.mean()[0]), float(price_mom.stderr()[0]),
                         config.n_paths, clamped)
    return GreeksEstimate(
        CorrelationGradient(n, mom.mean()),
        CorrelationGradient(n, mom.stderr()) if config.n_paths > 1 else None,
        config.n_paths, config.n_paths, pv, clamped, "forward",
    )


def correlation_greeks_bump(config: EngineConfig) -> GreeksEstimate:
    """One-sided finite-difference Greeks with common random numbers.

    Each repricing regenerates the identical counter-based draws, so the
    per-path payout differences estimate the sensitivity with the Monte
    Carlo noise cancelled; their spread gives the standard error.
    """
    n = config.n_names
    setup = _setup(config)
    base_smooth = np.empty(config.n_paths)
    price_mom = _Moments()
    clamped = 0
    for start, stop in _chunk_ranges(config.n_paths):
        ch = _run_chunk(config, setup, start, stop, want_smooth=True, want_xbar=False)
        price_mom.add(ch.sharp)
        clamped += ch.n_clamped
        base_smooth[start:stop] = ch.smooth
    means = np.empty(n_pairs(n))
    errs = np.empty(n_pairs(n))
    for p, pair in enumerate(pair_list(n)):
        bumped, h = _bumped_correlation(config.correlation, pair, config.bump_size)
        bset = _setup(config, factor=cholesky_factorize(bumped))
        mom = _Moments()
        for start, stop in _chunk_ranges(config.n_paths):
            ch = _run_chunk(config, bset, start, stop, want_smooth=True, want_xbar=False)
            mom.add((ch.smooth - base_smooth[start:stop]) / h)
        means[p] = mom.mean()[0]
        errs[p] = mom.stderr()[0]
    pv = MonteCarloValue(float(price_mom.mean()[0]), float(price_mom.stderr()[0]),
                         config.n_paths, clamped)
    return GreeksEstimate(
        CorrelationGradient(n, means),
        CorrelationGradient(n, errs) if config.n_paths > 1 else None,
        config.n_paths, config.n_paths, pv, clamped, "bump",
    )


def _bumped_correlation(rho: CorrelationMatrix, pair: tuple[int, int], h: float):
    """Bump one pair, shrinking h by 10 up to BUMP_SHRINKS times if validation fails."""
    for _ in range(BUMP_SHRINKS + 1):
        try:
            return bump_pair(rho, pair, h), h
        except (NotPositiveSemidefinite, EntryOutOfRange):
            h /= 10.0
    raise BumpBreaksPSD(
        f"bumping pair {pair} breaks positive semidefiniteness even at h={h * 10}"
    )


def combine_bins(bins: list[BinAccumulator], factor: CholeskyFactor) -> GreeksEstimate:
    """Convert per-bin averaged seeds to correlation sensitivities and pool them."""
    if not bins:
        raise UnequalBins("need at least one bin")
    counts = {b.count for b in bins}
    if len(counts) != 1:
        raise UnequalBins(f"bins hold unequal path counts: {sorted(counts)}")
    per_bin = np.stack([
        cholesky_adjoint(factor, b.mean_seed()).values for b in bins
    ])
    mean = per_bin.mean(axis=0)
    n_bins = len(bins)
    stderr = None
    if n_bins >= 2:
        stderr = CorrelationGradient(
            factor.n, per_bin.std(axis=0, ddof=1) / np.sqrt(n_bins)
        )
    return GreeksEstimate(
        CorrelationGradient(factor.n, mean), stderr, n_bins,
        n_bins * bins[0].count, None, 0, "aad_binned",
    )


def compute_greeks(config: EngineConfig) -> GreeksEstimate:
    """Dispatch to the estimator selected by ``config.method``."""
    if config.method == "bump":
        return correlation_greeks_bump(config)
    if config.method == "forward":
        return correlation_greeks_forward(config)
    return correlation_greeks_aad(config)
