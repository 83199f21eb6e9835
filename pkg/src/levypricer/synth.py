"""Synthetic quote generation for round-trip and ordering experiments.

Prices a strike/maturity grid under any bound model, wraps each price in
a configurable bid-ask spread, optionally perturbs the mid with seeded
multiplicative noise, and back-solves the implied vol column so the
files look like filtered market data.
"""

import datetime as dt
import math

import numpy as np

from .blackscholes import implied_vol
from .calibration import PricerBinding, QuoteData, default_param_space, model_prices
from .errors import ConvergenceError, DomainError, NumericalError
from .quotes import OptionQuote

__all__ = ["generate_quotes"]


def generate_quotes(
    binding: PricerBinding,
    params: dict,
    spot: float,
    strikes,
    maturities_days,
    rate: float = 0.0,
    dividend_yield: float = 0.0,
    spread: float = 0.5,
    noise: float = 0.0,
    seed: int = 0,
    trade_date: dt.date = dt.date(2020, 1, 2),
) -> list[OptionQuote]:
    """Model-priced quote grid; deterministic for a fixed seed."""
    names = default_param_space(binding).names
    missing = [n for n in names if n not in params]
    if missing:
        raise DomainError(f"missing model parameters {missing}")
    vector = np.array([float(params[n]) for n in names])
    strikes = np.asarray(strikes, dtype=np.float64)
    days = [int(d) for d in maturities_days]
    base = [
        OptionQuote(
            trade_date=trade_date,
            spot=spot,
            strike=float(k),
            maturity_days=d,
            bid=0.0,
            ask=0.0,
            rate=rate,
            dividend_yield=dividend_yield,
        )
        for d in days
        for k in strikes
    ]
    qd = prepare_quotes_silent(base)
    prices = model_prices(binding, vector, qd, names)
    rng = np.random.default_rng(seed)
    noise_draw = rng.standard_normal(len(base)) if noise > 0.0 else np.zeros(len(base))
    out = []
    for quote, price, z in zip(base, prices, noise_draw):
        mid = price * (1.0 + noise * z) if noise > 0.0 else price
        mid = max(mid, 0.0)
        half = 0.5 * spread
        bid = max(mid - half, 0.0)
        ask = mid + half if bid > 0.0 else 2.0 * mid + 1e-12
        mid_eff = 0.5 * (bid + ask)
        try:
            iv = implied_vol(mid_eff, spot, quote.strike, quote.maturity_years,
                             rate, dividend_yield)
        except (DomainError, NumericalError, ConvergenceError):
            iv = None
        out.append(
            OptionQuote(
                trade_date=trade_date,
                spot=spot,
                strike=quote.strike,
                maturity_days=quote.maturity_days,
                bid=bid,
                ask=ask,
                rate=rate,
                dividend_yield=dividend_yield,
                implied_vol=iv,
            )
        )
    return out


def prepare_quotes_silent(quotes):
    """QuoteData for pricing only: skips the implied-vol solve (mids are
    not meaningful yet) and carries unit Vega weights."""
    n = len(quotes)
    return QuoteData(
        spot=np.array([q.spot for q in quotes]),
        strike=np.array([q.strike for q in quotes]),
        tau=np.array([q.maturity_years for q in quotes]),
        rate=np.array([q.rate for q in quotes]),
        dividend_yield=np.array([q.dividend_yield for q in quotes]),
        mid=np.zeros(n),
        implied_vol=np.full(n, math.nan),
        vega=np.ones(n),
        trade_dates=[q.trade_date for q in quotes],
    )
