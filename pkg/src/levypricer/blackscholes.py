"""Black-Scholes call pricing, Vega, and implied-volatility inversion.

The call formula with continuous dividend yield q:

    C = S*exp(-q*tau)*N(d1) - K*exp(-r*tau)*N(d2)
    d1 = [ln(S/K) + (r - q + vol^2/2)*tau] / (vol*sqrt(tau))
    d2 = d1 - vol*sqrt(tau)

Vega (sensitivity to vol) is S*exp(-q*tau)*n(d1)*sqrt(tau) and supplies
the weight of the calibration objective. The inverter is a safeguarded
Newton iteration that falls back to bisection whenever the Newton step
leaves the current bracket; Vega vanishes deep in/out of the money and
pure Newton diverges there.
"""

import math

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, njit
from .errors import ConvergenceError, DomainError
from .specfun import norm_cdf, norm_pdf

VOL_BRACKET = (1e-6, 10.0)
MAX_ITER = 200
PRICE_TOL = 1e-10

__all__ = ["bs_call", "bs_vega", "implied_vol", "bs_call_batch", "bs_vega_batch"]


def _validate(spot: float, strike: float, maturity: float, vol: float) -> None:
    if spot <= 0.0 or strike <= 0.0 or maturity <= 0.0:
        raise DomainError(
            f"bs inputs require spot, strike, maturity > 0, got {spot}, {strike}, {maturity}"
        )
    if vol < 0.0:
        raise DomainError(f"bs inputs require vol >= 0, got {vol}")


def bs_call(
    spot: float,
    strike: float,
    maturity: float,
    rate: float,
    dividend_yield: float,
    vol: float,
) -> float:
    """European call price; vol=0 degenerates to discounted intrinsic."""
    _validate(spot, strike, maturity, vol)
    fwd_leg = spot * math.exp(-dividend_yield * maturity)
    strike_leg = strike * math.exp(-rate * maturity)
    if vol == 0.0:
        return max(fwd_leg - strike_leg, 0.0)
    sq = vol * math.sqrt(maturity)
    d1 = (math.log(spot / strike) + (rate - dividend_yield + 0.5 * vol * vol) * maturity) / sq
    d2 = d1 - sq
    return fwd_leg * norm_cdf(d1) - strike_leg * norm_cdf(d2)


def bs_vega(
    spot: float,
    strike: float,
    maturity: float,
    rate: float,
    dividend_yield: float,
    vol: float,
) -> float:
    """d(price)/d(vol) = S*exp(-q*tau)*n(d1)*sqrt(tau); requires vol > 0."""
    _validate(spot, strike, maturity, vol)
    if vol == 0.0:
        raise DomainError("bs_vega: degenerate at vol=0")
    sq = vol * math.sqrt(maturity)
    d1 = (math.log(spot / strike) + (rate - dividend_yield + 0.5 * vol * vol) * maturity) / sq
    return spot * math.exp(-dividend_yield * maturity) * norm_pdf(d1) * math.sqrt(maturity)


def implied_vol(
    target_price: float,
    spot: float,
    strike: float,
    maturity: float,
    rate: float,
    dividend_yield: float,
) -> float:
    """Invert bs_call in vol for a target price.

    The target must lie strictly inside the attainable band
    (discounted intrinsic, discounted spot). Newton steps use Vega;
    any step that exits the bracket is replaced by bisection.
    """
    _validate(spot, strike, maturity, 1.0)
    lo_vol, hi_vol = VOL_BRACKET
    lower_bound = bs_call(spot, strike, maturity, rate, dividend_yield, 0.0)
    upper_bound = spot * math.exp(-dividend_yield * maturity)
    if target_price <= lower_bound:
        raise DomainError(
            f"implied_vol: target {target_price} at/below intrinsic bound {lower_bound}"
        )
    if target_price >= upper_bound:
        raise DomainError(
            f"implied_vol: target {target_price} at/above discounted-spot bound {upper_bound}"
        )

    f_lo = bs_call(spot, strike, maturity, rate, dividend_yield, lo_vol) - target_price
    if f_lo >= 0.0:
        # already within tolerance of the bracket floor
        if abs(f_lo) <= PRICE_TOL:
            return lo_vol
        raise DomainError(
            f"implied_vol: target {target_price} below price at minimum vol {lo_vol}"
        )

    vol = 0.5
    lo, hi = lo_vol, hi_vol
    last_move = math.inf
    for _ in range(MAX_ITER):
        price = bs_call(spot, strike, maturity, rate, dividend_yield, vol)
        diff = price - target_price
        # price tolerance alone under-determines vol where Vega is tiny
        # (deep ITM/OTM), so require the iterate to have settled as well
        if abs(diff) <= PRICE_TOL and (last_move <= 1e-9 or hi - lo <= 1e-12):
            return vol
        if diff > 0.0:
            hi = vol
        else:
            lo = vol
        vega = bs_vega(spot, strike, maturity, rate, dividend_yield, vol)
        if vega > 1e-14:
            step = vol - diff / vega
        else:
            step = math.nan
        if not (lo < step < hi):
            step = 0.5 * (lo + hi)
        last_move = abs(step - vol)
        vol = step
    residual = bs_call(spot, strike, maturity, rate, dividend_yield, vol) - target_price
    raise ConvergenceError(
        f"implied_vol: no convergence in {MAX_ITER} iterations, residual {residual:.3e}"
    )


# ---------------------------------------------------------------------------
# batch kernels (hot path inside the calibration objective)


def _bs_batch_numpy(spot, strike, maturity, rate, dividend_yield, vol):
    fwd_leg = spot * np.exp(-dividend_yield * maturity)
    strike_leg = strike * np.exp(-rate * maturity)
    sq = vol * np.sqrt(maturity)
    sq = np.where(sq > 0.0, sq, 1.0)  # placeholder, masked below
    d1 = (np.log(spot / strike) + (rate - dividend_yield + 0.5 * vol * vol) * maturity) / sq
    d2 = d1 - sq
    from scipy.special import ndtr

    price = fwd_leg * ndtr(d1) - strike_leg * ndtr(d2)
    intrinsic = np.maximum(fwd_leg - strike_leg, 0.0)
    degenerate = vol * np.sqrt(maturity) == 0.0
    price = np.where(degenerate, intrinsic, price)
    vega = fwd_leg * np.exp(-0.5 * d1 * d1) / _SQRT2PI * np.sqrt(maturity)
    vega = np.where(degenerate, 0.0, vega)
    return price, vega


_SQRT2PI = math.sqrt(2.0 * math.pi)


if HAVE_NUMBA:

    @njit(cache=True)
    def _bs_batch_jit(spot, strike, maturity, rate, dividend_yield, vol):  # pragma: no cover
        n = spot.shape[0]
        price = np.empty(n)
        vega = np.empty(n)
        inv_sqrt2 = 1.0 / math.sqrt(2.0)
        inv_sqrt2pi = 1.0 / math.sqrt(2.0 * math.pi)
        for i in range(n):
            fwd_leg = spot[i] * math.exp(-dividend_yield[i] * maturity[i])
            strike_leg = strike[i] * math.exp(-rate[i] * maturity[i])
            sq = vol[i] * math.sqrt(maturity[i])
            if sq == 0.0:
                price[i] = max(fwd_leg - strike_leg, 0.0)
                vega[i] = 0.0
                continue
            d1 = (
                math.log(spot[i] / strike[i])
                + (rate[i] - dividend_yield[i] + 0.5 * vol[i] * vol[i]) * maturity[i]
            ) / sq
            d2 = d1 - sq
            nd1 = 0.5 * math.erfc(-d1 * inv_sqrt2)
            nd2 = 0.5 * math.erfc(-d2 * inv_sqrt2)
            price[i] = fwd_leg * nd1 - strike_leg * nd2
            vega[i] = fwd_leg * math.exp(-0.5 * d1 * d1) * inv_sqrt2pi * math.sqrt(maturity[i])
        return price, vega


if USE_NUMBA:
    _bs_batch = _bs_batch_jit
else:
    _bs_batch = _bs_batch_numpy


def _as_arrays(*xs):
    return [np.ascontiguousarray(np.asarray(x, dtype=np.float64)) for x in xs]


def bs_call_batch(spot, strike, maturity, rate, dividend_yield, vol) -> np.ndarray:
    """Vectorized call prices over aligned quote arrays."""
    arrs = _as_arrays(spot, strike, maturity, rate, dividend_yield, vol)
    return _bs_batch(*arrs)[0]


def bs_vega_batch(spot, strike, maturity, rate, dividend_yield, vol) -> np.ndarray:
    """Vectorized Vegas over aligned quote arrays (0 where vol*sqrt(tau)=0)."""
    arrs = _as_arrays(spot, strike, maturity, rate, dividend_yield, vol)
    return _bs_batch(*arrs)[1]
