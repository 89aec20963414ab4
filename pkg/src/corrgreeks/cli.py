"""Command-line interface: price, greeks and benchmark commands.

Configuration lives in a JSON file (schema below, unknown keys rejected);
CSV goes to --out or stdout. Exit codes: 0 success, 2 configuration error,
3 numerical failure or unstable benchmark timings.

Config schema (all times in years, rates per year continuously compounded,
spreads/recoveries per unit notional)::

    {
      "n_names": 5,
      "n_paths": 100000,
      "n_bins": 20,                      # optional, default 20
      "seed": 42,
      "method": "aad-binned",            # optional default; CLI flag overrides
      "bump_size": 1e-4,                 # optional, default 1e-4
      "hazards": 0.02,                   # scalar or per-name list
      "correlation": {"uniform_off_diagonal": 0.3},   # or full matrix rows
      "contract": {
        "seniority": 2,
        "maturity": 5.0,
        "payment_frequency": 4,          # or "payment_times": [0.25, ...]
        "spreads": 0.0125,
        "recoveries": 0.4,
        "discount_rate": 0.03,
        "smoothing_width": 0.0125        # optional, default 5% of spacing
      },
      "output": "greeks.csv"             # optional, --out overrides
    }
"""
from __future__ import annotations

import argparse
import json
import statistics
import sys
import time

import numpy as np

from . import _kernels
from .corelin import pair_list, uniform_correlation, validate_correlation
from .errors import ConfigError, EngineError, NumericalError
from .greeks import EngineConfig, METHODS, compute_greeks, price
from .payout import BasketDefaultSwap, regular_schedule

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

# Timing protocol: median of at least REPEATS warm repeats. A run whose
# first repeat exceeds the cutoff is self-averaging and runs once; runs much
# shorter than MIN_TOTAL_SECONDS keep sampling (up to MAX_REPEATS) so the
# median is not at the mercy of scheduler jitter. Because machine speed can
# drift over a long grid, each Greeks run is bracketed by value-only runs
# and the ratio uses the bracket mean as its denominator.
REPEATS = 3
MAX_REPEATS = 7
MIN_TOTAL_SECONDS = 1.0
SINGLE_REPEAT_CUTOFF = 10.0
CV_LIMIT = 0.2


def _fail_config(msg: str) -> "SystemExit":
    print(f"config error: {msg}", file=sys.stderr)
    return SystemExit(EXIT_CONFIG)


def _take(d: dict, context: str, required: tuple[str, ...], optional: tuple[str, ...] = ()):
    unknown = set(d) - set(required) - set(optional)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in {context}")
    for key in required:
        if key not in d:
            raise ConfigError(f"missing key {key!r} in {context}")


def _per_name(value, n: int, what: str) -> np.ndarray:
    if isinstance(value, (int, float)):
        return np.full(n, float(value))
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != (n,):
        raise ConfigError(f"{what} must be a scalar or a list of {n} numbers")
    return arr


def _parse_contract(raw: dict, n_names: int) -> BasketDefaultSwap:
    _take(raw, "contract",
          ("seniority", "maturity", "spreads", "recoveries", "discount_rate"),
          ("payment_frequency", "payment_times", "smoothing_width"))
    if ("payment_frequency" in raw) == ("payment_times" in raw):
        raise ConfigError("contract needs exactly one of payment_frequency/payment_times")
    if "payment_frequency" in raw:
        pay = regular_schedule(float(raw["maturity"]), int(raw["payment_frequency"]))
    else:
        pay = np.asarray(raw["payment_times"], dtype=np.float64)
    spreads = raw["spreads"]
    spreads = np.broadcast_to(np.asarray(spreads, dtype=np.float64), pay.shape).copy() \
        if not isinstance(spreads, (int, float)) else np.full(pay.shape, float(spreads))
    return BasketDefaultSwap(
        seniority=int(raw["seniority"]),
        maturity=float(raw["maturity"]),
        payment_times=pay,
        spreads=spreads,
        recoveries=_per_name(raw["recoveries"], n_names, "recoveries"),
        discount_rate=float(raw["discount_rate"]),
        smoothing_width=(float(raw["smoothing_width"])
                         if raw.get("smoothing_width") is not None else None),
    )


def _parse_correlation(raw, n_names: int):
    if isinstance(raw, dict):
        _take(raw, "correlation", ("uniform_off_diagonal",))
        return uniform_correlation(n_names, float(raw["uniform_off_diagonal"]))
    return validate_correlation(raw)


def load_config(path: str, method: str | None = None, seed: int | None = None) -> tuple[EngineConfig, str | None]:
    """Parse a run configuration file; returns the config and its output path."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _take(raw, "config",
          ("n_names", "n_paths", "seed", "hazards", "correlation", "contract"),
          ("n_bins", "method", "bump_size", "output"))
    n_names = int(raw["n_names"])
    if n_names < 1:
        raise ConfigError(f"n_names must be >= 1, got {n_names}")
    method_name = method if method is not None else raw.get("method", "aad-binned")
    method_name = str(method_name).replace("-", "_")
    if method_name not in METHODS:
        raise ConfigError(f"method must be one of {sorted(METHODS)}, got {method_name!r}")
    config = EngineConfig(
        n_names=n_names,
        n_paths=int(raw["n_paths"]),
        seed=int(seed if seed is not None else raw["seed"]),
        hazards=_per_name(raw["hazards"], n_names, "hazards"),
        contract=_parse_contract(dict(raw["contract"]), n_names),
        correlation=_parse_correlation(raw["correlation"], n_names),
        method=method_name,
        n_bins=int(raw.get("n_bins", 20)),
        bump_size=float(raw.get("bump_size", 1e-4)),
    )
    out = raw.get("output")
    return config, (str(out) if out is not None else None)


def _write_text(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", newline="") as fh:
            fh.write(text)


def greeks_csv(config: EngineConfig) -> str:
    """Deterministic per-pair CSV: i,j,rho,dV_drho,stderr with 1-based indices."""
    est = compute_greeks(config)
    rho = config.correlation.entries
    lines = ["i,j,rho,dV_drho,stderr"]
    for k, (i, j) in enumerate(pair_list(config.n_names)):
        se = float(est.stderr.values[k]) if est.stderr is not None else float("nan")
        lines.append(
            f"{i + 1},{j + 1},{float(rho[i, j])!r},{float(est.mean.values[k])!r},{se!r}"
        )
    return "\n".join(lines) + "\n"


def cmd_price(args) -> int:
    config, _ = load_config(args.config, seed=args.seed)
    result = price(config)
    print(f"value={result.value!r}, stderr={result.stderr!r}, n_paths={result.n_paths}")
    return EXIT_OK


def cmd_greeks(args) -> int:
    config, out = load_config(args.config, method=args.method, seed=args.seed)
    _write_text(greeks_csv(config), args.out if args.out is not None else out)
    return EXIT_OK


def _scaled_config(config: EngineConfig, n_names: int) -> EngineConfig:
    """Rebuild a homogeneous portfolio at a different basket size."""
    lam = config.hazards
    recov = config.contract.recoveries
    rho = config.correlation.entries
    off = rho[1, 0] if config.n_names > 1 else 0.0
    homogeneous = (
        np.all(lam == lam[0]) and np.all(recov == recov[0])
        and np.all(np.abs(rho - (np.full_like(rho, off) + (1 - off) * np.eye(len(rho)))) < 1e-15)
    )
    if not homogeneous:
        raise ConfigError(
            "benchmark scaling over a names grid needs scalar hazards/recoveries "
            "and uniform_off_diagonal correlation"
        )
    c = config.contract
    contract = BasketDefaultSwap(
        seniority=c.seniority, maturity=c.maturity, payment_times=c.payment_times,
        spreads=c.spreads, recoveries=np.full(n_names, recov[0]),
        discount_rate=c.discount_rate, smoothing_width=c.smoothing_width,
    )
    return EngineConfig(
        n_names=n_names, n_paths=config.n_paths, seed=config.seed,
        hazards=np.full(n_names, lam[0]), contract=contract,
        correlation=uniform_correlation(n_names, float(off)),
        method=config.method, n_bins=config.n_bins, bump_size=config.bump_size,
    )


def _timed(fn, repeats: int) -> tuple[float, float]:
    """Median wall time and coefficient of variation over warm repeats."""
    times = []
    t0 = time.perf_counter()
    fn()
    times.append(time.perf_counter() - t0)
    if times[0] <= SINGLE_REPEAT_CUTOFF:
        while len(times) < max(repeats, 1) or (
            sum(times) < MIN_TOTAL_SECONDS and len(times) < MAX_REPEATS
        ):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
    med = statistics.median(times)
    cv = (statistics.stdev(times) / med) if len(times) > 1 and med > 0 else 0.0
    return med, cv


def run_benchmark(config: EngineConfig, names_grid: list[int], methods: list[str],
                  repeats: int = REPEATS):
    """Cost ratios of full-Greeks runs relative to a value-only run.

    Returns (rows, unstable) where each row is a dict with keys
    n_names, method, ratio, seconds_value, seconds_total.
    """
    _kernels.warm_up()
    rows = []
    unstable = False
    for n in names_grid:
        cfg = _scaled_config(config, n)

        def _sized(method: str, n_paths: int) -> EngineConfig:
            return EngineConfig(
                n_names=n, n_paths=n_paths, seed=cfg.seed, hazards=cfg.hazards,
                contract=cfg.contract, correlation=cfg.correlation, method=method,
                n_bins=cfg.n_bins, bump_size=cfg.bump_size,
            )

        warm_paths = max(2_000, cfg.n_bins)
        warm_paths -= warm_paths % cfg.n_bins
        price(_sized(cfg.method, warm_paths))  # warm allocator/threads at this size
        sec_value, cv_v = _timed(lambda: price(cfg), repeats)
        unstable |= cv_v > CV_LIMIT
        for method in methods:
            if method != "bump":
                # bump shares the pricing path already warmed above; a warm
                # bump run would cost a full extra sweep over all pairs
                compute_greeks(_sized(method, warm_paths))
            mcfg = _sized(method, cfg.n_paths)
            sec_total, cv_t = _timed(lambda: compute_greeks(mcfg), repeats)
            unstable |= cv_t > CV_LIMIT
            sec_after, cv_a = _timed(lambda: price(cfg), repeats)
            unstable |= cv_a > CV_LIMIT
            sec_bracket = 0.5 * (sec_value + sec_after)
            rows.append({
                "n_names": n, "method": method.replace("_", "-"),
                "ratio": sec_total / sec_bracket,
                "seconds_value": sec_bracket, "seconds_total": sec_total,
            })
            sec_value = sec_after  # the trailing bracket opens the next method
    return rows, unstable


def benchmark_csv(rows) -> str:
    lines = ["n_names,method,ratio,seconds_value,seconds_total"]
    for r in rows:
        lines.append(
            f"{r['n_names']},{r['method']},{r['ratio']!r},"
            f"{r['seconds_value']!r},{r['seconds_total']!r}"
        )
    return "\n".join(lines) + "\n"


def cmd_benchmark(args) -> int:
    config, out = load_config(args.config, seed=args.seed)
    try:
        grid = [int(x) for x in args.names_grid.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --names-grid: {exc}") from exc
    methods = [m.strip().replace("-", "_") for m in args.methods.split(",") if m.strip()]
    if not grid:
        raise ConfigError("--names-grid is empty")
    if not methods:
        raise ConfigError("--methods is empty")
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise ConfigError(f"unknown method {bad[0]!r} in --methods")
    rows, unstable = run_benchmark(config, grid, methods, repeats=args.repeats)
    _write_text(benchmark_csv(rows), args.out if args.out is not None else out)
    if unstable:
        print(
            f"warning: timing coefficient of variation exceeded {CV_LIMIT:.0%}; "
            "medians reported", file=sys.stderr,
        )
        return EXIT_NUMERICAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrgreeks",
        description="Basket credit derivative pricing and correlation Greeks",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help="cap engine worker threads (results are identical for any cap)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", help="Monte Carlo value with standard error")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="override config seed")
    p.set_defaults(func=cmd_price)

    g = sub.add_parser("greeks", help="per-pair correlation sensitivities as CSV")
    g.add_argument("config")
    g.add_argument("--method", choices=[m.replace("_", "-") for m in METHODS], default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", default=None, help="CSV output path (default: stdout)")
    g.set_defaults(func=cmd_greeks)

    b = sub.add_parser("benchmark", help="cost ratios over a grid of basket sizes")
    b.add_argument("config")
    b.add_argument("--names-grid", default="8,16,24,32,40,48,64")
    b.add_argument("--methods", default="bump,aad-per-path,aad-binned")
    b.add_argument("--repeats", type=int, default=REPEATS)
    b.add_argument("--seed", type=int, default=None)
    b.add_argument("--out", default=None)
    b.set_defaults(func=cmd_benchmark)
    return parser


def main(argv=None) -> int:
    import warnings

    # numba's TBB-version notice is harmless and would pollute every run
    warnings.filterwarnings("ignore", message=".*TBB.*")
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        _kernels.set_threads(args.threads)
    if getattr(args, "method", None) is not None:
        args.method = args.method.replace("-", "_")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except EngineError as exc:  # pragma: no cover - safety net
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
