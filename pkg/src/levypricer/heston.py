"""Heston stochastic-volatility (SV) and SV-with-jumps (SVJ) call pricing.

The call price is the two-probability closed form

    C = S*exp(-q*tau)*Pi_1 - K*exp(-r*tau)*Pi_2
    Pi_j = 1/2 + (1/pi) * integral_0^inf Re[exp(-i*phi*ln K) * f_j / (i*phi)] d phi

with characteristic functions (j = 1 share measure, j = 2 money-market
measure), written in the branch-stable ratio form:

    xi   = sqrt(b_j^2 - i*phi*(i*phi +/- 1)*sigma_v^2),   b_1 = kappa - (1+i*phi)*rho*sigma_v,
                                                          b_2 = kappa - i*phi*rho*sigma_v
    a_j  = xi - b_j
    W_j  = 1 - a_j*(1 - e^{-xi*tau}) / (2*xi)
    ln f_j = i*phi*(r-q)*tau + i*phi*ln S
             - (kappa*theta/sigma_v^2) * (2*Ln W_j + a_j*tau)
             + i*phi*(i*phi +/- 1)*(1 - e^{-xi*tau})*v0 / (2*xi - a_j*(1 - e^{-xi*tau}))
             + jump terms

    jump_1 = lambda*(1+mu_j)*tau*[(1+mu_j)^{i*phi} * e^{(i*phi/2)(1+i*phi)*sigma_j^2} - 1]
             - lambda*i*phi*mu_j*tau
    jump_2 = lambda*tau*[(1+mu_j)^{i*phi} * e^{(i*phi/2)(i*phi-1)*sigma_j^2} - 1]
             - lambda*i*phi*mu_j*tau

A continuous dividend yield enters the drift as r - q; discounting of the
strike leg stays at r and the spot leg carries e^{-q*tau}.

When sigma_v is (numerically) zero the variance path is deterministic,
v_t = theta + (v0-theta)*e^{-kappa*t}, and f_j degenerate to Gaussian
characteristic functions at the time-averaged variance -- this is also
the reduction to Black-Scholes when kappa = lambda = 0.

The complex logarithm of W_j uses the principal branch; the phase of W_j
is tracked along the integration grid and the grid is refined whenever a
jump larger than pi shows up between adjacent nodes (the known long-
maturity branch-cut hazard). The grid integration is the hot loop of
calibration and ships as a numba kernel with a vectorized numpy twin.
"""

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, njit
from .errors import DomainError, NumericalError
from .quotes import OptionQuote

__all__ = [
    "HestonParams",
    "IntegrationConfig",
    "IntegrationScheme",
    "VolSource",
    "char_fn",
    "probability_pi",
    "heston_call",
    "heston_call_batch",
]

_SIGMA_V_DEGENERATE = 1e-7
_MAX_REFINEMENTS = 3
_EXP_GUARD = 700.0

_STATUS_OK = 0
_STATUS_BRANCH = 1
_STATUS_OVERFLOW = 2
_STATUS_NAN = 4


@dataclass(frozen=True)
class HestonParams:
    kappa: float
    theta: float
    sigma_v: float
    rho: float
    v0: float
    lam: float = 0.0
    mu_j: float = 0.0
    sigma_j: float = 0.0

    def __post_init__(self):
        if min(self.kappa, self.theta, self.sigma_v, self.v0, self.lam, self.sigma_j) < 0.0:
            raise DomainError(
                "heston params require kappa, theta, sigma_v, v0, lambda, sigma_j >= 0"
            )
        if abs(self.rho) > 1.0:
            raise DomainError(f"heston params require |rho| <= 1, got {self.rho}")
        if self.mu_j <= -1.0:
            raise DomainError(f"heston params require mu_j > -1, got {self.mu_j}")


class IntegrationScheme(Enum):
    GAUSS_LEGENDRE = "gauss-legendre"
    ADAPTIVE_SIMPSON = "adaptive-simpson"


class VolSource(Enum):
    IMPLIED_PER_QUOTE = "implied"
    CALIBRATED_CONSTANT = "constant"


@dataclass(frozen=True)
class IntegrationConfig:
    # 500 keeps short-dated out-of-the-money truncation error below the
    # negative-price floor; Gauss-Legendre cost depends on nodes only, so
    # the wider truncation is free relative to the 100 alternative
    upper_bound: float = 500.0
    nodes: int = 256
    scheme: IntegrationScheme = IntegrationScheme.GAUSS_LEGENDRE

    def __post_init__(self):
        if self.upper_bound <= 0.0:
            raise DomainError(f"upper_bound must be > 0, got {self.upper_bound}")
        if self.nodes < 32:
            raise DomainError(f"nodes must be >= 32, got {self.nodes}")


def _avg_deterministic_variance(params: HestonParams, tau: float) -> float:
    # time average of v_t = theta + (v0-theta)*e^{-kappa t} over [0, tau]
    x = params.kappa * tau
    g = 1.0 if x < 1e-12 else -math.expm1(-x) / x
    return params.theta + (params.v0 - params.theta) * g


def _log1p_complex(x: complex) -> complex:
    # stable ln(1+x) for complex x with possibly tiny |x|
    return complex(
        0.5 * math.log1p(2.0 * x.real + x.real * x.real + x.imag * x.imag),
        math.atan2(x.imag, 1.0 + x.real),
    )


def _log_f_scalar(j: int, params: HestonParams, s: float, r: float, q: float,
                  tau: float, phi: complex, v0: float) -> complex:
    """ln f_j at a single (possibly complex) phi. Reference path."""
    kappa, theta, sigma, rho = params.kappa, params.theta, params.sigma_v, params.rho
    lam, mu_j, sigma_j = params.lam, params.mu_j, params.sigma_j
    u = 1j * phi
    sign = 1.0 if j == 1 else -1.0
    drift = u * (r - q) * tau + u * math.log(s)
    # jump component
    if lam > 0.0:
        lnm = math.log1p(mu_j)
        if j == 1:
            jump = lam * (1.0 + mu_j) * tau * (
                cmath.exp(u * lnm + 0.5 * u * (1.0 + u) * sigma_j * sigma_j) - 1.0
            ) - lam * u * mu_j * tau
        else:
            jump = lam * tau * (
                cmath.exp(u * lnm + 0.5 * u * (u - 1.0) * sigma_j * sigma_j) - 1.0
            ) - lam * u * mu_j * tau
    else:
        jump = 0.0 + 0.0j
    if sigma < _SIGMA_V_DEGENERATE:
        vbar = _avg_deterministic_variance(params, tau)
        return drift + 0.5 * u * (u + sign) * vbar * tau + jump
    uu = u * (u + sign)
    if j == 1:
        b = kappa - (1.0 + u) * rho * sigma
    else:
        b = kappa - u * rho * sigma
    xi = cmath.sqrt(b * b - uu * sigma * sigma)
    # xi - b via xi^2 - b^2: exact in sigma^2, immune to the cancellation
    # that a direct subtraction suffers for small sigma
    a = -uu * sigma * sigma / (xi + b)
    em = cmath.exp(-xi * tau)
    one_em = 1.0 - em
    x = -a * one_em / (2.0 * xi)  # W = 1 + x
    dterm = uu * one_em * v0 / (2.0 * xi - a * one_em)
    coeff = kappa * theta / (sigma * sigma)
    return drift - coeff * (2.0 * _log1p_complex(x) + a * tau) + dterm + jump


def char_fn(j: int, params: HestonParams, spot: float, rate: float,
            dividend_yield: float, tau: float, phi) -> complex | np.ndarray:
    """Characteristic function f_j; phi may be scalar or an array.

    Raises NumericalError if the real part of the exponent exceeds the
    overflow guard before exponentiation.
    """
    if j not in (1, 2):
        raise ValueError(f"j must be 1 or 2, got {j}")
    if tau <= 0.0:
        raise DomainError(f"char_fn requires tau > 0, got {tau}")
    phis = np.atleast_1d(np.asarray(phi, dtype=np.complex128))
    out = np.empty(phis.shape, dtype=np.complex128)
    for idx, p in np.ndenumerate(phis):
        lf = _log_f_scalar(j, params, spot, rate, dividend_yield, tau, complex(p), params.v0)
        if lf.real > _EXP_GUARD:
            raise NumericalError(f"char_fn: exponent {lf.real:.1f} exceeds overflow guard at phi={p}")
        out[idx] = cmath.exp(lf)
    if np.isscalar(phi) or np.asarray(phi).ndim == 0:
        return complex(out.flat[0])
    return out


# ---------------------------------------------------------------------------
# grid kernels: both probabilities for a batch of quotes


def _pi_kernel_numpy(phis, wts, s, k, tau, r, q, v0,
                     kappa, theta, sigma, rho, lam, mu_j, sigma_j):
    """Vectorized over (quotes, nodes). Returns (pi1, pi2, status)."""
    n = s.shape[0]
    phi = phis[None, :]
    u = 1j * phi
    tau_c = tau[:, None]
    lnsk = (np.log(s) + (r - q) * tau)[:, None] - np.log(k)[:, None]
    v0_c = v0[:, None]
    if lam > 0.0:
        lnm = math.log1p(mu_j)
        jump1 = lam * (1.0 + mu_j) * tau_c * (
            np.exp(u * lnm + 0.5 * u * (1.0 + u) * sigma_j * sigma_j) - 1.0
        ) - lam * u * mu_j * tau_c
        jump2 = lam * tau_c * (
            np.exp(u * lnm + 0.5 * u * (u - 1.0) * sigma_j * sigma_j) - 1.0
        ) - lam * u * mu_j * tau_c
    else:
        jump1 = jump2 = 0.0
    status = np.zeros(n, dtype=np.int64)
    if sigma < _SIGMA_V_DEGENERATE:
        x = kappa * tau
        g = np.where(x < 1e-12, 1.0, -np.expm1(-x) / np.maximum(x, 1e-300))
        vbar = (theta + (v0 - theta) * g)[:, None]
        lf1 = u * lnsk + 0.5 * u * (u + 1.0) * vbar * tau_c + jump1
        lf2 = u * lnsk + 0.5 * u * (u - 1.0) * vbar * tau_c + jump2
    else:
        coeff = kappa * theta / (sigma * sigma)
        lfs = []
        for sign, jump in ((1.0, jump1), (-1.0, jump2)):
            uu = u * (u + sign)
            b = kappa - ((1.0 + u) if sign > 0 else u) * rho * sigma
            xi = np.sqrt(b * b - uu * sigma * sigma)
            a = -uu * sigma * sigma / (xi + b)  # xi - b, cancellation-free
            em = np.exp(-xi * tau_c)
            one = 1.0 - em
            x = -a * one / (2.0 * xi)  # W = 1 + x
            lnw = 0.5 * np.log1p(2.0 * x.real + x.real**2 + x.imag**2) + 1j * np.arctan2(
                x.imag, 1.0 + x.real
            )
            lfs.append(
                u * lnsk
                - coeff * (2.0 * lnw + a * tau_c)
                + uu * one * v0_c / (2.0 * xi - a * one)
                + jump
            )
            # branch-cut tracking: phase of W along the grid
            dphase = np.abs(np.diff(np.arctan2(x.imag, 1.0 + x.real), axis=1))
            status |= np.where((dphase > np.pi).any(axis=1), _STATUS_BRANCH, 0)
        lf1, lf2 = lfs
    for lf in (lf1, lf2):
        status |= np.where((lf.real > _EXP_GUARD).any(axis=1), _STATUS_OVERFLOW, 0)
    lf1 = np.where(lf1.real > _EXP_GUARD, -np.inf, lf1)
    lf2 = np.where(lf2.real > _EXP_GUARD, -np.inf, lf2)
    integ1 = np.real(np.exp(lf1) / u)
    integ2 = np.real(np.exp(lf2) / u)
    status |= np.where(
        (~np.isfinite(integ1)).any(axis=1) | (~np.isfinite(integ2)).any(axis=1), _STATUS_NAN, 0
    )
    pi1 = 0.5 + (integ1 @ wts) / np.pi
    pi2 = 0.5 + (integ2 @ wts) / np.pi
    return pi1, pi2, status


if HAVE_NUMBA:

    @njit(cache=True)
    def _pi_kernel_jit(phis, wts, s, k, tau, r, q, v0,
                       kappa, theta, sigma, rho, lam, mu_j, sigma_j):  # pragma: no cover
        n = s.shape[0]
        m = phis.shape[0]
        pi1 = np.empty(n)
        pi2 = np.empty(n)
        status = np.zeros(n, dtype=np.int64)
        degenerate = sigma < _SIGMA_V_DEGENERATE
        coeff = 0.0 if degenerate else kappa * theta / (sigma * sigma)
        has_jumps = lam > 0.0
        lnm = math.log1p(mu_j) if has_jumps else 0.0
        sj2 = sigma_j * sigma_j
        for i in range(n):
            tau_i = tau[i]
            lnsk = math.log(s[i]) + (r[i] - q[i]) * tau_i - math.log(k[i])
            v0_i = v0[i]
            if degenerate:
                x = kappa * tau_i
                g = 1.0 if x < 1e-12 else -math.expm1(-x) / x
                vbar = theta + (v0_i - theta) * g
            else:
                vbar = 0.0
            acc1 = 0.0
            acc2 = 0.0
            prev_ang1 = 0.0
            prev_ang2 = 0.0
            st = 0
            for jn in range(m):
                phi = phis[jn]
                u = 1j * phi
                if has_jumps:
                    jump1 = lam * (1.0 + mu_j) * tau_i * (
                        np.exp(u * lnm + 0.5 * u * (1.0 + u) * sj2) - 1.0
                    ) - lam * u * mu_j * tau_i
                    jump2 = lam * tau_i * (
                        np.exp(u * lnm + 0.5 * u * (u - 1.0) * sj2) - 1.0
                    ) - lam * u * mu_j * tau_i
                else:
                    jump1 = 0.0 + 0.0j
                    jump2 = 0.0 + 0.0j
                if degenerate:
                    lf1 = u * lnsk + 0.5 * u * (u + 1.0) * vbar * tau_i + jump1
                    lf2 = u * lnsk + 0.5 * u * (u - 1.0) * vbar * tau_i + jump2
                else:
                    uu1 = u * (u + 1.0)
                    b1 = kappa - (1.0 + u) * rho * sigma
                    xi1 = np.sqrt(b1 * b1 - uu1 * sigma * sigma)
                    a1 = -uu1 * sigma * sigma / (xi1 + b1)
                    em1 = np.exp(-xi1 * tau_i)
                    one1 = 1.0 - em1
                    x1 = -a1 * one1 / (2.0 * xi1)
                    lnw1 = complex(
                        0.5 * math.log1p(2.0 * x1.real + x1.real * x1.real + x1.imag * x1.imag),
                        math.atan2(x1.imag, 1.0 + x1.real),
                    )
                    lf1 = (
                        u * lnsk
                        - coeff * (2.0 * lnw1 + a1 * tau_i)
                        + uu1 * one1 * v0_i / (2.0 * xi1 - a1 * one1)
                        + jump1
                    )
                    uu2 = u * (u - 1.0)
                    b2 = kappa - u * rho * sigma
                    xi2 = np.sqrt(b2 * b2 - uu2 * sigma * sigma)
                    a2 = -uu2 * sigma * sigma / (xi2 + b2)
                    em2 = np.exp(-xi2 * tau_i)
                    one2 = 1.0 - em2
                    x2 = -a2 * one2 / (2.0 * xi2)
                    lnw2 = complex(
                        0.5 * math.log1p(2.0 * x2.real + x2.real * x2.real + x2.imag * x2.imag),
                        math.atan2(x2.imag, 1.0 + x2.real),
                    )
                    lf2 = (
                        u * lnsk
                        - coeff * (2.0 * lnw2 + a2 * tau_i)
                        + uu2 * one2 * v0_i / (2.0 * xi2 - a2 * one2)
                        + jump2
                    )
                    ang1 = math.atan2(x1.imag, 1.0 + x1.real)
                    ang2 = math.atan2(x2.imag, 1.0 + x2.real)
                    if jn > 0 and (abs(ang1 - prev_ang1) > math.pi or abs(ang2 - prev_ang2) > math.pi):
                        st |= _STATUS_BRANCH
                    prev_ang1 = ang1
                    prev_ang2 = ang2
                if lf1.real > _EXP_GUARD or lf2.real > _EXP_GUARD:
                    st |= _STATUS_OVERFLOW
                    continue
                t1 = (np.exp(lf1) / u).real
                t2 = (np.exp(lf2) / u).real
                if not (math.isfinite(t1) and math.isfinite(t2)):
                    st |= _STATUS_NAN
                    continue
                acc1 += wts[jn] * t1
                acc2 += wts[jn] * t2
            pi1[i] = 0.5 + acc1 / math.pi
            pi2[i] = 0.5 + acc2 / math.pi
            status[i] = st
        return pi1, pi2, status


if USE_NUMBA:
    _pi_kernel = _pi_kernel_jit
else:
    _pi_kernel = _pi_kernel_numpy


@lru_cache(maxsize=64)
def _gl_grid(upper: float, nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * upper * (x + 1.0), 0.5 * upper * w


def _pi_pair_batch(params: HestonParams, s, k, tau, r, q, v0, cfg: IntegrationConfig,
                   flags: list | None = None):
    """Both probabilities for aligned quote arrays, with grid refinement on
    branch-cut detection."""
    arrays = [np.ascontiguousarray(np.asarray(a, dtype=np.float64)) for a in (s, k, tau, r, q, v0)]
    nodes = cfg.nodes
    for attempt in range(_MAX_REFINEMENTS + 1):
        phis, wts = _gl_grid(cfg.upper_bound, nodes)
        pi1, pi2, status = _pi_kernel(
            phis, wts, *arrays,
            params.kappa, params.theta, params.sigma_v, params.rho,
            params.lam, params.mu_j, params.sigma_j,
        )
        if (status & _STATUS_OVERFLOW).any():
            raise NumericalError("heston: characteristic-function exponent exceeded overflow guard")
        if (status & _STATUS_NAN).any():
            bad = int(np.argmax(status & _STATUS_NAN))
            raise NumericalError(f"heston: non-finite integrand for quote index {bad}")
        if not (status & _STATUS_BRANCH).any():
            return pi1, pi2
        nodes *= 2
        if flags is not None:
            flags.append(f"branch_cut_refine:nodes={nodes}")
    raise NumericalError(
        f"heston: branch-cut phase jump persisted after {_MAX_REFINEMENTS} grid refinements"
    )


def _adaptive_simpson(f, a: float, b: float, tol: float, depth: int = 28) -> float:
    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        if depth <= 0 or abs(left + right - whole) < 15.0 * tol:
            return left + right + (left + right - whole) / 15.0
        return rec(a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(
            m, b, fm, frm, fb, right, 0.5 * tol, depth - 1
        )

    return rec(a, b, fa, fm, fb, whole, tol, depth)


def probability_pi(j: int, params: HestonParams, spot: float, strike: float,
                   rate: float, dividend_yield: float, tau: float,
                   cfg: IntegrationConfig = IntegrationConfig(),
                   v0: float | None = None,
                   flags: list | None = None) -> float:
    """Exercise probability Pi_j under measure j for one contract."""
    if j not in (1, 2):
        raise ValueError(f"j must be 1 or 2, got {j}")
    v = params.v0 if v0 is None else v0
    if cfg.scheme is IntegrationScheme.ADAPTIVE_SIMPSON:
        lnk = math.log(strike)

        def integrand(phi: float) -> float:
            if phi == 0.0:
                phi = 1e-10
            lf = _log_f_scalar(j, params, spot, rate, dividend_yield, tau, phi, v)
            if lf.real > _EXP_GUARD:
                raise NumericalError(f"heston: overflow guard tripped at phi={phi}")
            val = (cmath.exp(lf - 1j * phi * lnk) / (1j * phi)).real
            if not math.isfinite(val):
                raise NumericalError(f"heston: non-finite integrand at phi={phi}")
            return val

        integral = _adaptive_simpson(integrand, 1e-10, cfg.upper_bound, 1e-11)
        pi = 0.5 + integral / math.pi
    else:
        pi1, pi2 = _pi_pair_batch(
            params, [spot], [strike], [tau], [rate], [dividend_yield], [v], cfg, flags
        )
        pi = float(pi1[0] if j == 1 else pi2[0])
    if pi < -0.01 or pi > 1.01:
        if flags is not None:
            flags.append(f"pi_clamped:j={j}:value={pi:.6f}")
        pi = min(max(pi, 0.0), 1.0)
    return pi


def _quote_v0(params: HestonParams, quote: OptionQuote, vol_source: VolSource) -> float:
    if vol_source is VolSource.IMPLIED_PER_QUOTE:
        if quote.implied_vol is None:
            raise DomainError("vol source 'implied' requires the quote to carry implied_vol")
        return quote.implied_vol * quote.implied_vol
    return params.v0


def heston_call(params: HestonParams, quote: OptionQuote,
                vol_source: VolSource = VolSource.CALIBRATED_CONSTANT,
                cfg: IntegrationConfig = IntegrationConfig(),
                flags: list | None = None) -> float:
    """Call price for one quote; spot variance per vol_source."""
    v0 = _quote_v0(params, quote, vol_source)
    prices = heston_call_batch(
        params,
        np.array([quote.spot]), np.array([quote.strike]), np.array([quote.maturity_years]),
        np.array([quote.rate]), np.array([quote.dividend_yield]), np.array([v0]),
        cfg, flags,
    )
    return float(prices[0])


def heston_call_batch(params: HestonParams, spot, strike, tau, rate, dividend_yield, v0,
                      cfg: IntegrationConfig = IntegrationConfig(),
                      flags: list | None = None) -> np.ndarray:
    """Call prices over aligned quote arrays (the calibration hot path).

    Raw prices below -1e-6 signal integration misconfiguration and raise;
    roundoff-level negatives are floored to zero and flagged.
    """
    pi1, pi2 = _pi_pair_batch(params, spot, strike, tau, rate, dividend_yield, v0, cfg, flags)
    spot = np.asarray(spot, dtype=np.float64)
    strike = np.asarray(strike, dtype=np.float64)
    tau = np.asarray(tau, dtype=np.float64)
    rate = np.asarray(rate, dtype=np.float64)
    dividend_yield = np.asarray(dividend_yield, dtype=np.float64)
    price = spot * np.exp(-dividend_yield * tau) * pi1 - strike * np.exp(-rate * tau) * pi2
    worst = float(price.min()) if price.size else 0.0
    if worst < -1e-6:
        raise NumericalError(f"heston: negative price {worst:.3e} beyond roundoff floor")
    neg = price < 0.0
    if neg.any():
        if flags is not None:
            flags.append(f"negative_price_floored:count={int(neg.sum())}")
        price = np.where(neg, 0.0, price)
    return price
