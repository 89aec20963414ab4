import numpy as np
import pytest

from corrgreeks.errors import ConfigError
from corrgreeks.payout import (
    BasketDefaultSwap,
    evaluate_sharp,
    evaluate_smoothed,
    regular_schedule,
)

from conftest import make_contract, rel_gap


def annual_contract(n_names=2, seniority=2, recovery=0.4, rate=0.0, spread=0.01):
    return BasketDefaultSwap(
        seniority=seniority,
        maturity=5.0,
        payment_times=np.arange(1.0, 6.0),
        spreads=np.full(5, spread),
        recoveries=np.full(n_names, recovery),
        discount_rate=rate,
    )


class TestSharp:
    def test_second_default_before_first_coupon(self):
        assert evaluate_sharp(annual_contract(), [0.1, 0.2]) == pytest.approx(0.6, abs=1e-15)

    def test_no_protection_all_coupons_paid(self):
        assert evaluate_sharp(annual_contract(), [0.5, 10.0]) == pytest.approx(-0.05, abs=1e-15)

    def test_full_recovery_kills_protection_leg(self):
        c = annual_contract(recovery=1.0)
        value = evaluate_sharp(c, [0.1, 0.2])
        assert value == pytest.approx(0.0, abs=1e-15)

    def test_premium_stops_at_default(self):
        # default between coupons 2 and 3: exactly two coupons paid
        c = annual_contract(spread=0.01, recovery=0.4)
        assert evaluate_sharp(c, [0.2, 2.5]) == pytest.approx(0.6 - 0.02, abs=1e-15)

    def test_discounting(self):
        c = annual_contract(rate=0.05)
        tau = [0.3, 2.0]
        expected = 0.6 * np.exp(-0.05 * 2.0) - 0.01 * np.exp(-0.05 * 1.0)
        assert evaluate_sharp(c, tau) == pytest.approx(expected, rel=1e-14)


class TestSmoothed:
    def test_matches_sharp_far_from_thresholds(self):
        c = make_contract(3, smoothing_width=0.01)
        rng = np.random.default_rng(2)
        for _ in range(200):
            tau = rng.uniform(0.0, 8.0, 3)
            t = np.sort(tau)[c.seniority - 1]
            dist = min(abs(t - c.maturity), np.min(np.abs(t - c.payment_times)))
            if dist <= 6 * c.smoothing_width:
                continue
            assert abs(evaluate_smoothed(c, tau).value - evaluate_sharp(c, tau)) <= 1e-8

    def test_xbar_zero_except_realizing_name(self):
        c = make_contract(4)
        res = evaluate_smoothed(c, [3.0, 1.0, 2.0, 9.0])
        nonzero = np.flatnonzero(res.x_bar)
        assert list(nonzero) == [2]  # second-smallest default time sits at index 2

    def test_xbar_matches_finite_difference(self):
        c = make_contract(3, smoothing_width=0.05)
        rng = np.random.default_rng(8)
        h = 1e-7
        checked = 0
        for _ in range(100):
            tau = rng.uniform(0.05, 7.0, 3)
            order = np.argsort(tau, kind="stable")
            k = order[c.seniority - 1]
            if np.min(np.abs(np.delete(tau, k) - tau[k])) < 10 * h:
                continue  # keep the sort permutation fixed across the stencil
            up, dn = tau.copy(), tau.copy()
            up[k] += h
            dn[k] -= h
            fd = (evaluate_smoothed(c, up).value - evaluate_smoothed(c, dn).value) / (2 * h)
            xb = evaluate_smoothed(c, tau).x_bar[k]
            # the FD stencil itself carries ~1e-11 absolute cancellation noise
            if abs(fd) > 1e-5 or abs(xb) > 1e-5:
                assert rel_gap(fd, xb) <= 1e-6
                checked += 1
        assert checked >= 50

    def test_ties_resolved_to_lowest_index(self):
        c = make_contract(3, seniority=2, recoveries=[0.1, 0.5, 0.9])
        res = evaluate_smoothed(c, [2.0, 2.0, 2.0])
        assert np.flatnonzero(res.x_bar).tolist() == [1]
        sharp = evaluate_sharp(c, [2.0, 2.0, 2.0])
        # recovery of name 1 (the tie winner at seniority 2) drives the payout;
        # 7 coupons fall strictly before tau = 2.0
        assert sharp == pytest.approx(
            0.5 * np.exp(-c.discount_rate * 2.0) - c.cumulative_premium()[7], rel=1e-14
        )

    def test_smoothed_is_continuous_across_window_edges(self):
        c = make_contract(2, smoothing_width=0.0125)
        # straddle a coupon date with a fine grid: no jumps beyond curvature
        taus = np.linspace(2.0 - 0.3, 2.0 + 0.3, 4001)
        vals = [evaluate_smoothed(c, [t, 9.0]).value for t in taus]
        steps = np.abs(np.diff(vals))
        assert np.max(steps) < 5e-4


class TestContractValidation:
    def test_regular_schedule(self):
        pay = regular_schedule(5.0, 4)
        assert pay.size == 20
        assert pay[0] == 0.25 and pay[-1] == 5.0

    def test_rejects_bad_schedules(self):
        with pytest.raises(ConfigError):
            regular_schedule(5.1, 4)
        with pytest.raises(ConfigError):
            BasketDefaultSwap(1, 5.0, np.array([1.0, 1.0]), 0.01, np.array([0.4]), 0.0)
        with pytest.raises(ConfigError):
            BasketDefaultSwap(1, 5.0, np.array([1.0, 6.0]), 0.01, np.array([0.4]), 0.0)

    def test_rejects_bad_seniority_and_recovery(self):
        with pytest.raises(ConfigError):
            BasketDefaultSwap(3, 5.0, np.array([1.0]), 0.01, np.array([0.4, 0.4]), 0.0)
        with pytest.raises(ConfigError):
            BasketDefaultSwap(1, 5.0, np.array([1.0]), 0.01, np.array([1.4]), 0.0)

    def test_default_smoothing_width_tracks_spacing(self):
        c = make_contract(2)
        assert c.smoothing_width == pytest.approx(0.05 * 0.25)

    def test_rejects_negative_default_times(self):
        with pytest.raises(ConfigError):
            evaluate_sharp(make_contract(2), [-0.1, 2.0])
