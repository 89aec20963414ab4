"""Compiled per-path kernels for the Monte Carlo engine.

Everything here is elementwise or path-local, so results are identical for
any worker-thread count. The inverse-CDF kernel is compiled without
fastmath so that the engine's bulk draws match the per-stream API bitwise.
"""
from __future__ import annotations

import math

import numba
import numpy as np
from numba import njit, prange

INV_SQRT2 = 0.7071067811865476
INV_SQRT_2PI = 0.3989422804014327

# Probabilities are clamped to this open interval before inverting the
# marginal, keeping default times finite at the far tails.
U_LO = 1e-16
U_HI = 1.0 - 1e-16

# Half-width (in units of eps) beyond which the smoothing sigmoid saturates
# to 0/1 within one double ulp of the payout terms.
SMOOTH_WINDOW = 9.0

# Acklam's rational approximation to the inverse normal CDF; max relative
# error 1.15e-9 over (0, 1), comfortably inside the 1e-9 contract on
# |Phi(result) - u|.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425
_P_HIGH = 1.0 - 0.02425


def set_threads(n: int) -> None:
    numba.set_num_threads(max(1, min(int(n), numba.config.NUMBA_NUM_THREADS)))


@njit(cache=True)
def _ndtri(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
               ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    elif p <= _P_HIGH:
        q = p - 0.5
        r = q * q
        return (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
               (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        return -(((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
                ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)


@njit(cache=True, parallel=True)
def ndtri_strided(u, out):
    """Inverse normal CDF of u[:, :out.shape[1]] into out (row strides may differ)."""
    rows, cols = out.shape
    for p in prange(rows):
        for j in range(cols):
            out[p, j] = _ndtri(u[p, j])


@njit(cache=True)
def _phi_cdf(x):
    return 0.5 * math.erfc(-x * INV_SQRT2)


@njit(cache=True)
def _phi_pdf(x):
    return math.exp(-0.5 * x * x) * INV_SQRT_2PI


@njit(cache=True)
def _bisect_left(a, x):
    lo, hi = 0, a.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] < x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _bisect_right(a, x):
    lo, hi = 0, a.shape[0]
    while lo < hi:
        mid = (lo + hi) >> 1
        if a[mid] <= x:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True)
def _nth_smallest(row, nth):
    """Value and index of the nth smallest entry, ties broken by lowest index.

    Implements the nth element of a stable sort via successive minima in the
    lexicographic (value, index) order; no scratch storage.
    """
    best_v = 0.0
    best_i = -1
    for _ in range(nth):
        cand_v = np.inf
        cand_i = -1
        for i in range(row.shape[0]):
            v = row[i]
            if best_i >= 0 and (v < best_v or (v == best_v and i <= best_i)):
                continue
            if v < cand_v:
                cand_v = v
                cand_i = i
        best_v = cand_v
        best_i = cand_i
    return best_v, best_i


@njit(cache=True)
def _leg_values(tau, ks, T, r, eps, pay, coupon_disc, cum_prem, recov,
                want_smooth, want_xbar):
    """Sharp and smoothed payout (and d smoothed/d tau) for one path.

    Far from every threshold the sigmoids saturate and the smoothed value
    equals the sharp one to the last ulp, so only near-threshold paths pay
    for the extra CDF evaluations.
    """
    lgd = 1.0 - recov[ks]
    ds = math.exp(-r * tau)
    kl = _bisect_left(pay, tau)
    sharp = -cum_prem[kl]
    if tau <= T:
        sharp += lgd * ds
    if not want_smooth:
        return sharp, 0.0, 0.0
    w = SMOOTH_WINDOW * eps
    lo = _bisect_left(pay, tau - w)
    hi = _bisect_right(pay, tau + w)
    near_t = abs(T - tau) <= w
    if lo == hi and not near_t:
        xb = 0.0
        if want_xbar and tau < T:
            xb = -r * lgd * ds
        return sharp, sharp, xb
    phc = _phi_cdf((T - tau) / eps)
    smooth = lgd * ds * phc - cum_prem[lo]
    xb = 0.0
    if want_xbar:
        xb = lgd * ds * (-r * phc - _phi_pdf((T - tau) / eps) / eps)
    for k in range(lo, hi):
        arg = (tau - pay[k]) / eps
        smooth -= coupon_disc[k] * _phi_cdf(arg)
        if want_xbar:
            xb -= coupon_disc[k] * _phi_pdf(arg) / eps
    return sharp, smooth, xb


@njit(cache=True, parallel=True)
def path_kernel_homog(Z, lam, nth, T, r, eps, pay, coupon_disc, cum_prem,
                      recov, want_smooth, want_xbar,
                      sharp, smooth, xbar, tau, kstar, phistar, mstar):
    """Selection + payout for equal hazards: the default-time order statistic
    coincides with the order statistic of the correlated normals, so only the
    selected component goes through the marginal map."""
    B = Z.shape[0]
    clamped = 0
    for p in prange(B):
        zs, ks = _nth_smallest(Z[p], nth)
        u = _phi_cdf(zs)
        if u < U_LO:
            u = U_LO
            clamped += 1
        elif u > U_HI:
            u = U_HI
            clamped += 1
        t = -math.log1p(-u) / lam[ks]
        tau[p] = t
        kstar[p] = ks
        if want_xbar:
            phistar[p] = _phi_pdf(zs)
            mstar[p] = lam[ks] * (1.0 - u)
        sh, sm, xb = _leg_values(t, ks, T, r, eps, pay, coupon_disc, cum_prem,
                                 recov, want_smooth, want_xbar)
        sharp[p] = sh
        smooth[p] = sm
        xbar[p] = xb
    return clamped


@njit(cache=True, parallel=True)
def path_kernel_general(Z, lam, nth, T, r, eps, pay, coupon_disc, cum_prem,
                        recov, want_smooth, want_xbar,
                        sharp, smooth, xbar, tau, kstar, phistar, mstar):
    """Selection + payout for per-name hazards: every component goes through
    the marginal map before the order statistic is taken."""
    B, N = Z.shape
    clamped = 0
    x = np.empty((B, N))
    for p in prange(B):
        for i in range(N):
            u = _phi_cdf(Z[p, i])
            if u < U_LO:
                u = U_LO
                clamped += 1
            elif u > U_HI:
                u = U_HI
                clamped += 1
            x[p, i] = -math.log1p(-u) / lam[i]
        t, ks = _nth_smallest(x[p], nth)
        tau[p] = t
        kstar[p] = ks
        if want_xbar:
            zs = Z[p, ks]
            us = _phi_cdf(zs)
            if us < U_LO:
                us = U_LO
            elif us > U_HI:
                us = U_HI
            phistar[p] = _phi_pdf(zs)
            mstar[p] = lam[ks] * (1.0 - us)
        sh, sm, xb = _leg_values(t, ks, T, r, eps, pay, coupon_disc, cum_prem,
                                 recov, want_smooth, want_xbar)
        sharp[p] = sh
        smooth[p] = sm
        xbar[p] = xb
    return clamped


def warm_up() -> None:
    """Trigger JIT compilation (or cache load) of every kernel."""
    u = np.array([[0.3, 0.7, 0.01, 0.999]])
    z = np.empty((1, 4))
    ndtri_strided(u, z)
    lam = np.full(4, 0.02)
    pay = np.array([1.0, 2.0])
    cd = np.array([0.01, 0.01])
    cp = np.array([0.0, 0.01, 0.02])
    rec = np.full(4, 0.4)
    out = [np.empty(1) for _ in range(6)]
    ks = np.empty(1, np.int64)
    for kern in (path_kernel_homog, path_kernel_general):
        kern(z, lam, 2, 5.0, 0.03, 0.0125, pay, cd, cp, rec, True, True,
             out[0], out[1], out[2], out[3], ks, out[4], out[5])
