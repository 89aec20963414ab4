import numpy as np
import pytest

from corrgreeks import _kernels
from corrgreeks.corelin import CorrelationMatrix, validate_correlation, uniform_correlation
from corrgreeks.greeks import EngineConfig
from corrgreeks.payout import BasketDefaultSwap, regular_schedule


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # Load (or build) the compiled kernels once so timed tests stay honest.
    _kernels.warm_up()


def random_correlation(n: int, rng: np.random.Generator) -> CorrelationMatrix:
    """Well-conditioned random correlation: A A^T normalized to unit diagonal,
    A an n x 2n matrix of i.i.d. standard normals."""
    a = rng.standard_normal((n, 2 * n))
    s = a @ a.T
    d = np.sqrt(np.diag(s))
    return validate_correlation(s / np.outer(d, d))


def make_contract(n_names: int, seniority: int = 2, maturity: float = 5.0,
                  frequency: int = 4, spread: float = 0.0125, recovery: float = 0.4,
                  discount_rate: float = 0.03, smoothing_width: float | None = None,
                  recoveries=None) -> BasketDefaultSwap:
    pay = regular_schedule(maturity, frequency)
    return BasketDefaultSwap(
        seniority=seniority,
        maturity=maturity,
        payment_times=pay,
        spreads=np.full(pay.size, spread),
        recoveries=np.full(n_names, recovery) if recoveries is None else np.asarray(recoveries),
        discount_rate=discount_rate,
        smoothing_width=smoothing_width,
    )


def make_config(n_names: int = 5, n_paths: int = 10_000, seed: int = 42,
                method: str = "aad_binned", n_bins: int = 20, hazard: float = 0.02,
                off_diagonal: float = 0.3, bump_size: float = 1e-4,
                hazards=None, correlation=None, contract=None, **contract_kwargs) -> EngineConfig:
    """The homogeneous test portfolio: equal hazards, equicorrelation,
    5-year quarterly second-to-default unless overridden."""
    return EngineConfig(
        n_names=n_names,
        n_paths=n_paths,
        seed=seed,
        hazards=np.full(n_names, hazard) if hazards is None else np.asarray(hazards),
        contract=contract if contract is not None else make_contract(n_names, **contract_kwargs),
        correlation=correlation if correlation is not None else (
            uniform_correlation(n_names, off_diagonal) if n_names > 1
            else validate_correlation([[1.0]])
        ),
        method=method,
        n_bins=n_bins,
        bump_size=bump_size,
    )


def rel_gap(a, b) -> float:
    """Largest elementwise relative difference, with an absolute floor for zeros."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-14)
    return float(np.max(np.abs(a - b) / scale))
