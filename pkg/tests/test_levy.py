import math

import numpy as np
import pytest

from levypricer.blackscholes import bs_call
from levypricer.errors import DomainError
from levypricer.levy import (
    CgmyParams,
    FftConfig,
    GhParams,
    Interpolation,
    NigParams,
    fft_call_prices,
    levy_call,
    martingale_drift,
    mc_call,
    model_from_json_dict,
    model_to_json_dict,
    quadrature_call,
    raw_char_fn,
    risk_neutral_char_fn,
)

# sensitivity-study base parameter sets
GH_SET = GhParams(alpha=3.8288, beta=-3.8286, delta=0.2375, nu=-1.7555)
NIG_SET = NigParams(alpha=6.1882, beta=-3.8941, delta=0.1622, mu=0.0)
CGMY_SET = CgmyParams(c=0.0244, g=0.0765, m=7.5515, y=1.2945)
ALL_SETS = (GH_SET, NIG_SET, CGMY_SET)

BASE = dict(spot=10.0, r=0.05, q=0.0, t=2.0)


class TestConstruction:
    def test_gh_domain(self):
        with pytest.raises(DomainError):
            GhParams(alpha=-1.0, beta=0.0, delta=1.0, nu=1.0)
        with pytest.raises(DomainError):
            GhParams(alpha=2.0, beta=2.5, delta=1.0, nu=1.0)
        with pytest.raises(DomainError):
            GhParams(alpha=2.0, beta=0.0, delta=-1.0, nu=1.0)
        # E[e^X] finite requires beta + 1 < alpha
        with pytest.raises(DomainError, match="beta \\+ 1"):
            GhParams(alpha=2.0, beta=1.5, delta=1.0, nu=1.0)

    def test_gh_relaxed_mode_flips_negative_alpha(self):
        m = GhParams(alpha=-17.3388, beta=15.6454, delta=0.3554, nu=-17.6347, relaxed=True)
        assert m.alpha == 17.3388
        assert m.relaxed
        with pytest.raises(DomainError):
            GhParams(alpha=-17.3388, beta=15.6454, delta=0.3554, nu=-17.6347)

    def test_relaxed_use_is_flagged(self):
        m = GhParams(alpha=-5.0, beta=0.5, delta=0.4, nu=-1.0, relaxed=True)
        flags = []
        fft_call_prices(m, 10.0, 0.05, 0.0, 1.0, flags=flags)
        assert "relaxed_gh_params" in flags

    def test_nig_pricing_moment(self):
        with pytest.raises(DomainError, match="pricing"):
            NigParams(alpha=1.5, beta=0.9, delta=0.3, mu=0.0)

    def test_cgmy_domain(self):
        with pytest.raises(DomainError):
            CgmyParams(c=-0.1, g=0.5, m=5.0, y=0.5)
        with pytest.raises(DomainError, match="M > 1"):
            CgmyParams(c=0.1, g=0.5, m=0.9, y=0.5)
        with pytest.raises(DomainError):
            CgmyParams(c=0.1, g=0.5, m=5.0, y=2.3)
        with pytest.raises(DomainError, match="pole"):
            CgmyParams(c=0.1, g=0.5, m=5.0, y=1.0)

    def test_damping_admissibility(self):
        tight = NigParams(alpha=3.0, beta=0.5, delta=0.3, mu=0.0)  # alpha-beta-1 = 1.5
        with pytest.raises(DomainError, match="inadmissible"):
            FftConfig(damping_alpha=1.6).check_admissible(tight)
        FftConfig(damping_alpha=1.4).check_admissible(tight)
        with pytest.raises(DomainError, match="inadmissible"):
            FftConfig(damping_alpha=6.6).check_admissible(CGMY_SET)

    def test_grid_size_power_of_two(self):
        with pytest.raises(DomainError):
            FftConfig(grid_size=1000)


class TestCharFn:
    def test_normalization_at_zero(self):
        for m in ALL_SETS:
            for t in (0.5, 1.0, 2.0):
                assert raw_char_fn(m, 0.0, t) == pytest.approx(1.0, abs=1e-14)

    def test_nig_equals_gh_at_half_integer_index(self):
        u = np.linspace(0.0, 30.0, 64)
        gh = GhParams(alpha=6.1882, beta=-3.8941, delta=0.1622, nu=-0.5)
        a = raw_char_fn(gh, u, 1.0)
        b = raw_char_fn(NIG_SET, u, 1.0)
        assert np.max(np.abs(a - b)) < 1e-10

    def test_conjugate_symmetry_real_axis(self, rng):
        u = rng.uniform(0.1, 40.0, size=32)
        for m in ALL_SETS:
            for t in (0.7, 2.0):
                a = raw_char_fn(m, -u, t)
                b = np.conj(raw_char_fn(m, u, t))
                assert np.max(np.abs(a - b)) < 1e-12

    def test_gh_time_power_continuous_branch(self):
        # exp(t*log phi) must glue smoothly along the grid even where the
        # principal-branch phase of phi crosses +-pi
        u = np.linspace(0.0, 120.0, 2000)
        vals = raw_char_fn(GH_SET, u, 2.0)
        steps = np.abs(np.diff(vals))
        assert steps.max() < 0.05  # no jump anywhere near the |phi| scale

    def test_strip_enforcement(self):
        with pytest.raises(DomainError):
            raw_char_fn(NIG_SET, -11.0j, 1.0)  # |beta + 11| > alpha
        with pytest.raises(DomainError):
            raw_char_fn(CGMY_SET, -9.0j, 1.0)  # 9 > M

    def test_martingale_identity(self):
        for m in ALL_SETS:
            for t in (0.1, 0.5, 1.0, 2.0):
                val = risk_neutral_char_fn(m, -1j, t, 0.05, 0.0)
                assert abs(val - math.exp(0.05 * t)) < 1e-12

    def test_martingale_identity_random_t_and_rates(self, rng):
        for m in ALL_SETS:
            for _ in range(20):
                t = rng.uniform(0.05, 3.0)
                r = rng.uniform(-0.01, 0.08)
                q = rng.uniform(0.0, 0.05)
                val = risk_neutral_char_fn(m, -1j, t, r, q)
                assert abs(val - math.exp((r - q) * t)) < 1e-12

    def test_martingale_identity_insensitive_to_nig_location(self):
        shifted = NigParams(alpha=6.1882, beta=-3.8941, delta=0.1622, mu=-0.4)
        assert abs(risk_neutral_char_fn(shifted, -1j, 1.3, 0.03, 0.01) - math.exp(0.02 * 1.3)) < 1e-12


class TestFftPricer:
    def test_matches_quadrature_across_models_and_strikes(self):
        for m in ALL_SETS:
            grid = fft_call_prices(m, **BASE)
            for K in (8.0, 9.0, 10.0, 11.0, 12.0, 14.0):
                assert grid.price_at(K) == pytest.approx(
                    quadrature_call(m, 10.0, K, 0.05, 0.0, 2.0), abs=1e-4 * 10.0
                )

    def test_near_gaussian_limit_matches_black_scholes(self):
        sigma = 0.2
        nig = NigParams(alpha=500.0, beta=0.0, delta=sigma * sigma * 500.0, mu=0.0)
        got = levy_call(nig, 100.0, 100.0, 0.02, 0.0, 1.0)
        want = bs_call(100.0, 100.0, 1.0, 0.02, 0.0, sigma)
        assert abs(got - want) < 0.005 * want

    def test_grid_doubling_self_consistency(self):
        for m in ALL_SETS:
            a = fft_call_prices(m, 10.0, 0.05, 0.0, 2.0, FftConfig(grid_size=4096)).price_at(10.5)
            b = fft_call_prices(m, 10.0, 0.05, 0.0, 2.0, FftConfig(grid_size=8192)).price_at(10.5)
            assert abs(a - b) < 1e-6 * 10.0

    def test_price_curve_monotone_and_convex_in_strike(self):
        # convexity holds in the strike itself, so resample the log-strike
        # FFT grid onto a uniform strike ladder through the interpolator
        strikes = np.linspace(6.0, 18.0, 241)
        for m in ALL_SETS:
            grid = fft_call_prices(m, **BASE)
            prices = np.array([grid.price_at(k) for k in strikes])
            assert (np.diff(prices) <= 1e-10).all()
            second = np.diff(prices, 2)
            assert (second >= -1e-8 * 10.0).all()

    def test_deep_otm_tail_sane(self):
        for m in ALL_SETS:
            p = quadrature_call(m, 10.0, 30.0, 0.05, 0.0, 2.0)
            assert 0.0 <= p <= 1e-3 * 10.0

    def test_strike_outside_grid_rejected(self):
        grid = fft_call_prices(NIG_SET, **BASE)
        with pytest.raises(DomainError, match="outside"):
            grid.price_at(1e12)

    def test_linear_interpolation_mode(self):
        cfg = FftConfig(interpolation=Interpolation.LINEAR)
        a = fft_call_prices(NIG_SET, 10.0, 0.05, 0.0, 2.0, cfg).price_at(10.3)
        b = levy_call(NIG_SET, 10.0, 10.3, 0.05, 0.0, 2.0)
        assert a == pytest.approx(b, abs=1e-4)

    def test_figure_direction_spot_up(self):
        lo = levy_call(GH_SET, 10.0, 12.0, 0.05, 0.0, 2.0)
        hi = levy_call(GH_SET, 10.5, 12.0, 0.05, 0.0, 2.0)
        assert hi > lo

    def test_negative_far_tail_values_flagged_not_erased(self):
        flags = []
        grid = fft_call_prices(NIG_SET, 10.0, 0.05, 0.0, 2.0, flags=flags)
        neg = grid.prices < 0.0
        if neg.any():
            assert any(f.startswith("negative_fft_prices") for f in flags)
            # confined to the far tails, outside any sane strike range
            assert (np.abs(grid.log_strikes[neg] - math.log(10.0)) > 5.0).all()


class TestMonteCarlo:
    def test_nig_within_three_standard_errors(self):
        price, se = mc_call(NIG_SET, 10.0, 12.0, 0.05, 0.0, 2.0, paths=100_000, seed=42)
        fft = levy_call(NIG_SET, 10.0, 12.0, 0.05, 0.0, 2.0)
        assert abs(price - fft) < 3.0 * se

    def test_nig_with_location_drift_consistent(self):
        m = NigParams(alpha=6.1882, beta=-3.8941, delta=0.1622, mu=0.15)
        price, se = mc_call(m, 10.0, 11.0, 0.03, 0.01, 1.0, paths=100_000, seed=7)
        fft = levy_call(m, 10.0, 11.0, 0.03, 0.01, 1.0)
        assert abs(price - fft) < 3.0 * se

    def test_cgmy_small_y_within_three_standard_errors(self):
        m = CgmyParams(c=0.5, g=3.0, m=4.0, y=0.5)
        price, se = mc_call(m, 10.0, 10.5, 0.02, 0.0, 1.0, paths=60_000, seed=11)
        fft = levy_call(m, 10.0, 10.5, 0.02, 0.0, 1.0)
        assert abs(price - fft) < 3.0 * se

    def test_degenerate_tiny_delta_hits_intrinsic(self):
        m = NigParams(alpha=10.0, beta=0.0, delta=1e-8, mu=0.0)
        price, _ = mc_call(m, 10.0, 8.0, 0.05, 0.0, 1.0, paths=10_000, seed=1)
        intrinsic = 10.0 - 8.0 * math.exp(-0.05)
        assert price == pytest.approx(intrinsic, abs=1e-4)

    def test_seed_reproducibility(self):
        a = mc_call(NIG_SET, 10.0, 12.0, 0.05, 0.0, 2.0, paths=20_000, seed=5)
        b = mc_call(NIG_SET, 10.0, 12.0, 0.05, 0.0, 2.0, paths=20_000, seed=5)
        assert a == b

    def test_gh_unsupported(self):
        with pytest.raises(DomainError, match="unsupported"):
            mc_call(GH_SET, 10.0, 12.0, 0.05, 0.0, 2.0)

    def test_cgmy_large_y_unsupported(self):
        with pytest.raises(DomainError, match="Y < 1"):
            mc_call(CGMY_SET, 10.0, 12.0, 0.05, 0.0, 2.0)

    def test_path_floor(self):
        with pytest.raises(DomainError, match="paths"):
            mc_call(NIG_SET, 10.0, 12.0, 0.05, 0.0, 2.0, paths=100)


class TestJson:
    @pytest.mark.parametrize("model", ALL_SETS)
    def test_round_trip(self, model):
        doc = model_to_json_dict(model)
        assert doc["model"] in ("gh", "nig", "cgmy")
        again = model_from_json_dict(doc)
        assert again == model

    def test_relaxed_flag_passthrough(self):
        doc = {"model": "gh", "params": {"alpha": -17.3388, "beta": 15.6454, "delta": 0.3554, "nu": -17.6347}}
        m = model_from_json_dict(doc, relaxed=True)
        assert m.alpha == 17.3388 and m.relaxed

    def test_unknown_tag_rejected(self):
        with pytest.raises(DomainError, match="unknown"):
            model_from_json_dict({"model": "vg", "params": {}})


class TestDriftCorrection:
    def test_omega_closed_form_nig(self):
        # omega = r - q - mu - delta*(sqrt(alpha^2-beta^2) - sqrt(alpha^2-(beta+1)^2))
        m = NigParams(alpha=6.1882, beta=-3.8941, delta=0.1622, mu=0.1)
        w0 = math.sqrt(m.alpha**2 - m.beta**2)
        w1 = math.sqrt(m.alpha**2 - (m.beta + 1.0) ** 2)
        want = 0.05 - 0.01 - (m.mu + m.delta * (w0 - w1))
        assert martingale_drift(m, 0.05, 0.01) == pytest.approx(want, rel=1e-12)
