"""Jump-diffusion call pricing without the i.i.d. jump-size assumption.

The price is a Poisson-weighted series of Black-Scholes-type terms with
n-dependent effective parameters:

    P = (e^{-lambda*T} / K1) * sum_n [(lambda'_n*T)^n / n!]
        * (S*e^{-q*T}*N(d_{1,n}) - K*e^{-r_n*T}*N(d_{2,n}))

    d_{1,n} = [ln(S/K) + (r_n - q + sigma_n^2/2)*T] / (sigma_n*sqrt(T))
    d_{2,n} = d_{1,n} - sigma_n*sqrt(T)
    K1      = e^{-lambda*T} * sum_n (lambda'_n*T)^n / n!

Three jump-size structures share this form through a mean-like sequence
m_n and a variance-like sequence v_n:

    time-varying means      m_n = mean(alpha_1..alpha_n), v_n = gamma^2
    time-varying variances  m_n = alpha, v_n = mean(gamma_1^2..gamma_n^2)
    autocorrelated          m_n = alpha, v_n = gamma^2*(1 + (n-1)*rho_bar_n)

with running averages starting at zero (m_0 = 0 resp. v_0 = 0,
rho_bar_0 = rho_bar_1 = 0) and

    lambda'_n = lambda * e^{m_n + v_n/2}
    sigma_n^2 = sigma^2 + (n/T)*v_n
    r_n       = r - ln(K1)/T + (n/T)*(m_n + v_n/2)

Schedules shorter than the series cap are zero-extended. Weights are
computed in log space; the series truncates when a term's Poisson weight
drops below tail_tol times the running weight sum. With lambda = 0 only
the n = 0 term survives and the price is exactly Black-Scholes.
"""

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from ._accel import HAVE_NUMBA, USE_NUMBA, njit
from .errors import ConvergenceError, DomainError, NumericalError
from .specfun import norm_cdf

__all__ = [
    "NonIidVariant",
    "NonIidSpec",
    "SeriesConfig",
    "EffectiveTermParams",
    "effective_params",
    "noniid_call",
    "noniid_call_batch",
    "spec_to_json_dict",
    "spec_from_json_dict",
]

_EXP_GUARD = 700.0


class NonIidVariant(Enum):
    TIME_VARYING_MEANS = "time_varying_means"
    TIME_VARYING_VARIANCES = "time_varying_variances"
    AUTOCORRELATED = "autocorrelated"


@dataclass(frozen=True)
class NonIidSpec:
    variant: NonIidVariant
    base_vol: float
    lam: float
    means: tuple | float = 0.0
    variances: tuple | float = 0.0
    autocorr: float = 0.0

    def __post_init__(self):
        if self.base_vol < 0.0 or self.lam < 0.0:
            raise DomainError("noniid spec requires base_vol >= 0 and lambda >= 0")
        if not -1.0 < self.autocorr < 1.0:
            raise DomainError(f"autocorr must be in (-1, 1), got {self.autocorr}")
        if isinstance(self.means, list):
            object.__setattr__(self, "means", tuple(float(x) for x in self.means))
        if isinstance(self.variances, list):
            object.__setattr__(self, "variances", tuple(float(x) for x in self.variances))
        if isinstance(self.variances, tuple) and any(v < 0.0 for v in self.variances):
            raise DomainError("variance schedule entries must be >= 0")
        if isinstance(self.variances, float) and self.variances < 0.0:
            raise DomainError("variance must be >= 0")


@dataclass(frozen=True)
class SeriesConfig:
    n_max: int = 50
    tail_tol: float = 1e-12

    def __post_init__(self):
        if self.n_max < 1:
            raise DomainError(f"n_max must be >= 1, got {self.n_max}")
        if self.tail_tol <= 0.0:
            raise DomainError(f"tail_tol must be > 0, got {self.tail_tol}")


@dataclass(frozen=True)
class EffectiveTermParams:
    lambda_prime_n: float
    sigma_n: float
    r_n: float
    k1: float


def _running_mean(sched_or_scalar, n: int) -> float:
    # running average of the first n schedule entries (0 at n = 0, short
    # lists zero-extend); a scalar is a constant held at every n
    if isinstance(sched_or_scalar, tuple):
        if n == 0:
            return 0.0
        total = sum(sched_or_scalar[i] for i in range(min(n, len(sched_or_scalar))))
        return total / n
    return float(sched_or_scalar)


def _scalar(value, what: str) -> float:
    if isinstance(value, tuple):
        if len(value) == 1:
            return float(value[0])
        raise DomainError(f"this variant uses a scalar {what}, got a schedule of length {len(value)}")
    return float(value)


def _mv_sequences(spec: NonIidSpec, n_max: int):
    """Mean-like m_n and variance-like v_n for n = 0..n_max.

    Tuple-valued fields contribute their running average (zero at n = 0);
    scalar fields stay constant for every n including 0. A spec with both
    schedules varying composes the two corollary mechanisms (the n = 0
    entries only affect the reported lambda'_0, never the price, since
    the n = 0 Poisson weight is 1 regardless).
    """
    m = np.zeros(n_max + 1)
    v = np.zeros(n_max + 1)
    if spec.variant is NonIidVariant.AUTOCORRELATED:
        alpha = _scalar(spec.means, "mean")
        gamma2 = _scalar(spec.variances, "variance")
        rho = spec.autocorr
        for n in range(n_max + 1):
            rho_bar = 0.0 if n < 2 else rho  # constant off-diagonal correlation
            m[n] = alpha
            v[n] = gamma2 * (1.0 + (n - 1) * rho_bar)
        if (v < 0.0).any():
            raise DomainError(
                "autocorrelated variance 1+(n-1)*rho went negative inside the series range"
            )
        return m, v
    for n in range(n_max + 1):
        m[n] = _running_mean(spec.means, n)
        v[n] = _running_mean(spec.variances, n)
    return m, v


@lru_cache(maxsize=256)
def _weights_and_k1(spec: NonIidSpec, maturity: float, n_max: int, tail_tol: float):
    """Log-space Poisson-type weights, truncation index, and K1."""
    m, v = _mv_sequences(spec, n_max)
    lam = spec.lam
    weights = np.zeros(n_max + 1)
    total = 0.0
    stop = n_max
    for n in range(n_max + 1):
        e_n = m[n] + 0.5 * v[n]
        if e_n > _EXP_GUARD:
            raise NumericalError(f"noniid: exp argument {e_n:.1f} exceeds overflow guard at n={n}")
        lam_n_t = lam * math.exp(e_n) * maturity
        if lam_n_t == 0.0:
            w = 1.0 if n == 0 else 0.0
        else:
            logw = n * math.log(lam_n_t) - math.lgamma(n + 1.0)
            if logw > _EXP_GUARD:
                raise NumericalError(f"noniid: weight overflow at n={n}")
            w = math.exp(logw)
        weights[n] = w
        total += w
        if n > 0 and w < tail_tol * total:
            stop = n
            break
    else:
        if n_max > 0 and weights[n_max] >= tail_tol * total:
            raise ConvergenceError(
                f"noniid: series weight {weights[n_max]:.3e} still above tolerance at n_max={n_max}"
            )
    k1 = math.exp(-lam * maturity) * total
    return weights[: stop + 1], m[: stop + 1], v[: stop + 1], k1


def effective_params(spec: NonIidSpec, n: int, maturity: float, rate: float,
                     cfg: SeriesConfig = SeriesConfig()) -> EffectiveTermParams:
    """Effective (lambda'_n, sigma_n, r_n) of the n-th series term plus K1."""
    if n > cfg.n_max:
        raise DomainError(f"n={n} exceeds series cap n_max={cfg.n_max}")
    if maturity <= 0.0:
        raise DomainError(f"maturity must be > 0, got {maturity}")
    _, _, _, k1 = _weights_and_k1(spec, maturity, cfg.n_max, cfg.tail_tol)
    m, v = _mv_sequences(spec, cfg.n_max)
    e_n = m[n] + 0.5 * v[n]
    lam_prime = spec.lam * math.exp(e_n)
    var_n = spec.base_vol ** 2 + (n / maturity) * v[n]
    if var_n < 0.0:
        raise DomainError(f"noniid: negative effective variance at n={n}")
    r_n = rate - math.log(k1) / maturity + (n / maturity) * e_n
    return EffectiveTermParams(lambda_prime_n=lam_prime, sigma_n=math.sqrt(var_n), r_n=r_n, k1=k1)


def _bs_term(s: float, k: float, t: float, r_n: float, q: float, sigma_n: float) -> float:
    fwd_leg = s * math.exp(-q * t)
    strike_leg = k * math.exp(-r_n * t)
    sq = sigma_n * math.sqrt(t)
    if sq == 0.0:
        return max(fwd_leg - strike_leg, 0.0)
    d1 = (math.log(s / k) + (r_n - q + 0.5 * sigma_n * sigma_n) * t) / sq
    return fwd_leg * norm_cdf(d1) - strike_leg * norm_cdf(d1 - sq)


def noniid_call(spec: NonIidSpec, spot: float, strike: float, maturity: float,
                rate: float, dividend_yield: float,
                cfg: SeriesConfig = SeriesConfig()) -> float:
    """Series price for one contract."""
    if maturity <= 0.0:
        raise DomainError(f"maturity must be > 0, got {maturity}")
    weights, m, v, k1 = _weights_and_k1(spec, maturity, cfg.n_max, cfg.tail_tol)
    lnk1_t = math.log(k1) / maturity
    sigma2 = spec.base_vol ** 2
    acc = 0.0
    for n in range(weights.shape[0]):
        if weights[n] == 0.0:
            continue
        e_n = m[n] + 0.5 * v[n]
        var_n = sigma2 + (n / maturity) * v[n]
        if var_n < 0.0:
            raise DomainError(f"noniid: negative effective variance at n={n}")
        r_n = rate - lnk1_t + (n / maturity) * e_n
        acc += weights[n] * _bs_term(spot, strike, maturity, r_n, dividend_yield, math.sqrt(var_n))
    price = math.exp(-spec.lam * maturity) / k1 * acc
    return max(price, 0.0)


# ---------------------------------------------------------------------------
# batch kernel over quote arrays (hot inside calibration)


def _series_batch_numpy(s, k, t, r, q, sigma2, lam, m, v, tail_tol):
    n_quotes = s.shape[0]
    price = np.empty(n_quotes)
    status = np.zeros(n_quotes, dtype=np.int64)
    for i in range(n_quotes):
        p, st = _series_single(s[i], k[i], t[i], r[i], q[i], sigma2, lam, m, v, tail_tol)
        price[i] = p
        status[i] = st
    return price, status


def _series_single(s, k, t, r, q, sigma2, lam, m, v, tail_tol):
    n_terms = m.shape[0]
    weights = np.zeros(n_terms)
    total = 0.0
    stop = n_terms - 1
    for n in range(n_terms):
        e_n = m[n] + 0.5 * v[n]
        if e_n > _EXP_GUARD:
            return 0.0, 2
        lam_n_t = lam * math.exp(e_n) * t
        if lam_n_t == 0.0:
            w = 1.0 if n == 0 else 0.0
        else:
            logw = n * math.log(lam_n_t) - math.lgamma(n + 1.0)
            if logw > _EXP_GUARD:
                return 0.0, 2
            w = math.exp(logw)
        weights[n] = w
        total += w
        if n > 0 and w < tail_tol * total:
            stop = n
            break
    else:
        if n_terms > 1 and weights[n_terms - 1] >= tail_tol * total:
            return 0.0, 1
    k1 = math.exp(-lam * t) * total
    lnk1_t = math.log(k1) / t
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    acc = 0.0
    for n in range(stop + 1):
        if weights[n] == 0.0:
            continue
        e_n = m[n] + 0.5 * v[n]
        var_n = sigma2 + (n / t) * v[n]
        if var_n < 0.0:
            return 0.0, 3
        r_n = r - lnk1_t + (n / t) * e_n
        fwd_leg = s * math.exp(-q * t)
        strike_leg = k * math.exp(-r_n * t)
        sq = math.sqrt(var_n * t)
        if sq == 0.0:
            term = max(fwd_leg - strike_leg, 0.0)
        else:
            d1 = (math.log(s / k) + (r_n - q + 0.5 * var_n) * t) / sq
            d2 = d1 - sq
            term = fwd_leg * 0.5 * math.erfc(-d1 * inv_sqrt2) - strike_leg * 0.5 * math.erfc(
                -d2 * inv_sqrt2
            )
        acc += weights[n] * term
    price = math.exp(-lam * t) / k1 * acc
    return max(price, 0.0), 0


if HAVE_NUMBA:
    _series_single_jit = njit(cache=True)(_series_single)

    @njit(cache=True)
    def _series_batch_jit(s, k, t, r, q, sigma2, lam, m, v, tail_tol):  # pragma: no cover
        n_quotes = s.shape[0]
        price = np.empty(n_quotes)
        status = np.zeros(n_quotes, dtype=np.int64)
        for i in range(n_quotes):
            p, st = _series_single_jit(s[i], k[i], t[i], r[i], q[i], sigma2, lam, m, v, tail_tol)
            price[i] = p
            status[i] = st
        return price, status


if USE_NUMBA:
    _series_batch = _series_batch_jit
else:
    _series_batch = _series_batch_numpy


def noniid_call_batch(spec: NonIidSpec, spot, strike, maturity, rate, dividend_yield,
                      cfg: SeriesConfig = SeriesConfig()) -> np.ndarray:
    """Series prices over aligned quote arrays."""
    m, v = _mv_sequences(spec, cfg.n_max)
    arrs = [np.ascontiguousarray(np.asarray(a, dtype=np.float64))
            for a in (spot, strike, maturity, rate, dividend_yield)]
    price, status = _series_batch(*arrs, spec.base_vol ** 2, spec.lam, m, v, cfg.tail_tol)
    if (status == 1).any():
        raise ConvergenceError("noniid: series weight still above tolerance at n_max")
    if (status == 2).any():
        raise NumericalError("noniid: exp argument exceeds overflow guard")
    if (status == 3).any():
        raise DomainError("noniid: negative effective variance inside the series")
    return price


def spec_to_json_dict(spec: NonIidSpec) -> dict:
    def plain(x):
        return list(x) if isinstance(x, tuple) else x

    return {
        "variant": spec.variant.value,
        "base_vol": spec.base_vol,
        "lambda": spec.lam,
        "means": plain(spec.means),
        "variances": plain(spec.variances),
        "autocorr": spec.autocorr,
    }


def spec_from_json_dict(doc: dict) -> NonIidSpec:
    def sched(x):
        return tuple(float(v) for v in x) if isinstance(x, (list, tuple)) else float(x)

    return NonIidSpec(
        variant=NonIidVariant(doc["variant"]),
        base_vol=float(doc["base_vol"]),
        lam=float(doc.get("lambda", doc.get("lam", 0.0))),
        means=sched(doc.get("means", 0.0)),
        variances=sched(doc.get("variances", 0.0)),
        autocorr=float(doc.get("autocorr", 0.0)),
    )
