"""Vega-weighted least-squares calibration of the pricing models.

The objective over a quote set is

    SSE = sum_n ((mid_n - model_price_n) / BSVega_n)^2

where BSVega_n = S*e^{-q*tau_n}*n(d_n)*sqrt(tau_n) is computed once per
quote from its market implied volatility (solved from the mid when the
input file does not carry one; out-of-band mids fall back to a floor
vol of 1e-2 and are flagged). The weights depend only on market data,
never on model parameters, so they are computed once and reused.

Optimization is derivative-free: Nelder-Mead on a smooth periodic sine
reparameterization of the box, x = lo + (hi-lo)*(1+sin z)/2, which keeps
every trial inside the bounds without the flat asymptotes of a logistic
map (those saturate near the bounds and strand the simplex at box
corners). Seeded random restarts and incumbent polish runs follow until
the evaluation budget is spent. Parameter vectors the pricer rejects
score a flat 1e12 penalty instead of aborting the search.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .blackscholes import bs_call_batch, bs_vega_batch, implied_vol
from .errors import DomainError, NumericalError
from .heston import HestonParams, IntegrationConfig, VolSource, heston_call_batch
from .jumps_noniid import NonIidSpec, NonIidVariant, SeriesConfig, noniid_call_batch
from .levy import CgmyParams, FftConfig, GhParams, NigParams, fft_call_prices

PENALTY = 1e12
_VOL_FLOOR = 1e-2

__all__ = [
    "ModelKind",
    "PricerBinding",
    "ParamSpace",
    "ErrorMetrics",
    "CalibrationResult",
    "QuoteData",
    "default_param_space",
    "prepare_quotes",
    "model_prices",
    "sse_objective",
    "optimize",
    "evaluate_metrics",
]


class ModelKind(Enum):
    BS = "bs"
    SV = "sv"
    SVJ = "svj"
    NONIID = "noniid"
    GH = "gh"
    NIG = "nig"
    CGMY = "cgmy"


@dataclass(frozen=True)
class PricerBinding:
    model_kind: ModelKind
    vol_source: VolSource | None = None
    noniid_template: NonIidSpec | None = None
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    fft: FftConfig = field(default_factory=FftConfig)
    series: SeriesConfig = field(default_factory=SeriesConfig)
    relaxed: bool = False

    def __post_init__(self):
        if self.model_kind in (ModelKind.SV, ModelKind.SVJ):
            if self.vol_source is None:
                object.__setattr__(self, "vol_source", VolSource.CALIBRATED_CONSTANT)
        elif self.vol_source is not None:
            raise DomainError("vol_source is only meaningful for SV/SVJ bindings")
        if self.model_kind is ModelKind.NONIID and self.noniid_template is None:
            object.__setattr__(
                self,
                "noniid_template",
                NonIidSpec(NonIidVariant.TIME_VARYING_MEANS, base_vol=0.2, lam=0.0),
            )


@dataclass(frozen=True)
class ParamSpace:
    names: tuple
    initial: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        for attr in ("initial", "lower", "upper"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr), dtype=np.float64))
        if not (
            len(self.names) == self.initial.size == self.lower.size == self.upper.size
        ):
            raise DomainError("param space arrays must align with names")
        if not np.isfinite(self.lower).all() or not np.isfinite(self.upper).all():
            raise DomainError("param space requires finite bounds")
        if not ((self.lower <= self.initial) & (self.initial <= self.upper)).all():
            raise DomainError("param space requires lower <= initial <= upper")


@dataclass(frozen=True)
class ErrorMetrics:
    sse: float
    ae: float
    are: float
    n_quotes: int

    @property
    def sse_per_quote(self) -> float:
        return self.sse / self.n_quotes if self.n_quotes else 0.0


@dataclass
class CalibrationResult:
    best_params: np.ndarray
    best_sse: float
    trace: list
    evaluations: int
    converged: bool
    flags: list

    def __post_init__(self):
        best = math.inf
        for _, value in self.trace:
            if value > best + 1e-15:
                raise NumericalError("calibration trace is not monotone nonincreasing")
            best = min(best, value)


# §-free catalog of starting points and boxes used throughout: the Heston
# block starts at (2, 0.05, 1.3, 0.8) with v0 at 0.5 in [0,1], jumps at
# (0.05, -0.1, 0.1); the Levy families start near published S&P 500
# calibrations with a global [-20, 20] search box.
_HESTON_LADDER = {
    "kappa": (2.0, 0.0, 20.0),
    "theta": (0.05, 0.0, 2.0),
    "sigma_v": (1.3, 0.0, 2.0),
    "rho": (0.8, -1.0, 1.0),
    "lambda": (0.05, 0.0, 2.0),
    "mu_j": (-0.1, -1.0, 1.0),
    "sigma_j": (0.1, 0.0, 2.0),
    "v0": (0.5, 0.0, 1.0),
}

_LEVY_INITIALS = {
    ModelKind.GH: (("alpha", 3.8), ("beta", -3.0), ("delta", 1.0), ("nu", 2.0)),
    ModelKind.NIG: (("alpha", 6.0), ("beta", -3.0), ("delta", 1.0), ("mu", 0.01)),
    ModelKind.CGMY: (("c", 0.02), ("g", 0.08), ("m", 7.55), ("y", 1.3)),
}


def default_param_space(binding: PricerBinding) -> ParamSpace:
    kind = binding.model_kind
    if kind is ModelKind.BS:
        names = ["v0"]
    elif kind in (ModelKind.SV, ModelKind.SVJ):
        names = ["kappa", "theta", "sigma_v", "rho"]
        if kind is ModelKind.SVJ:
            names += ["lambda", "mu_j", "sigma_j"]
        if binding.vol_source is VolSource.CALIBRATED_CONSTANT:
            names += ["v0"]
    elif kind is ModelKind.NONIID:
        names = ["v0", "lambda"]
    else:
        rows = _LEVY_INITIALS[kind]
        return ParamSpace(
            names=tuple(n for n, _ in rows),
            initial=np.array([x for _, x in rows]),
            lower=np.full(len(rows), -20.0),
            upper=np.full(len(rows), 20.0),
        )
    rows = [_HESTON_LADDER[n] for n in names]
    return ParamSpace(
        names=tuple(names),
        initial=np.array([r[0] for r in rows]),
        lower=np.array([r[1] for r in rows]),
        upper=np.array([r[2] for r in rows]),
    )


@dataclass
class QuoteData:
    """Per-quote arrays plus the cached market Vega weights."""

    spot: np.ndarray
    strike: np.ndarray
    tau: np.ndarray
    rate: np.ndarray
    dividend_yield: np.ndarray
    mid: np.ndarray
    implied_vol: np.ndarray
    vega: np.ndarray
    trade_dates: list


def prepare_quotes(quotes, flags: list | None = None) -> QuoteData:
    """Extract aligned arrays and market-data Vega weights.

    Quotes without an implied vol get one solved from the mid; mids
    outside the no-arbitrage band fall back to the floor vol and are
    flagged.
    """
    n = len(quotes)
    spot = np.array([q.spot for q in quotes])
    strike = np.array([q.strike for q in quotes])
    tau = np.array([q.maturity_years for q in quotes])
    rate = np.array([q.rate for q in quotes])
    q_ = np.array([q.dividend_yield for q in quotes])
    mid = np.array([q.mid for q in quotes])
    iv = np.empty(n)
    for i, quote in enumerate(quotes):
        if quote.implied_vol is not None:
            iv[i] = quote.implied_vol
        else:
            try:
                iv[i] = implied_vol(
                    quote.mid, quote.spot, quote.strike, quote.maturity_years,
                    quote.rate, quote.dividend_yield,
                )
            except (DomainError, NumericalError):
                iv[i] = _VOL_FLOOR
                if flags is not None:
                    flags.append(f"vega_floor_vol:quote={i}")
    vega = bs_vega_batch(spot, strike, tau, rate, q_, iv)
    return QuoteData(
        spot=spot, strike=strike, tau=tau, rate=rate, dividend_yield=q_,
        mid=mid, implied_vol=iv, vega=vega,
        trade_dates=[q.trade_date for q in quotes],
    )


def _params_dict(space_names, vector) -> dict:
    return dict(zip(space_names, vector))


def model_prices(binding: PricerBinding, params: np.ndarray, qd: QuoteData,
                 names: tuple | None = None, flags: list | None = None) -> np.ndarray:
    """Model prices for every quote at one parameter vector.

    Raises DomainError/NumericalError for infeasible vectors; the
    objective converts those into penalties.
    """
    kind = binding.model_kind
    names = names or default_param_space(binding).names
    p = _params_dict(names, np.asarray(params, dtype=np.float64))
    if kind is ModelKind.BS:
        v0 = p["v0"]
        if v0 < 0.0:
            raise DomainError("bs requires v0 >= 0")
        sigma = math.sqrt(v0)
        return bs_call_batch(qd.spot, qd.strike, qd.tau, qd.rate, qd.dividend_yield,
                             np.full_like(qd.spot, sigma))
    if kind in (ModelKind.SV, ModelKind.SVJ):
        hp = HestonParams(
            kappa=p["kappa"], theta=p["theta"], sigma_v=p["sigma_v"], rho=p["rho"],
            v0=p.get("v0", 0.0),
            lam=p.get("lambda", 0.0), mu_j=p.get("mu_j", 0.0), sigma_j=p.get("sigma_j", 0.0),
        )
        if binding.vol_source is VolSource.IMPLIED_PER_QUOTE:
            v0 = qd.implied_vol**2
        else:
            v0 = np.full_like(qd.spot, hp.v0)
        return heston_call_batch(
            hp, qd.spot, qd.strike, qd.tau, qd.rate, qd.dividend_yield, v0,
            binding.integration, flags,
        )
    if kind is ModelKind.NONIID:
        if p["v0"] < 0.0:
            raise DomainError("noniid requires v0 >= 0")
        spec = replace(binding.noniid_template, base_vol=math.sqrt(p["v0"]), lam=p["lambda"])
        return noniid_call_batch(spec, qd.spot, qd.strike, qd.tau, qd.rate,
                                 qd.dividend_yield, binding.series)
    # exponential-Levy families: one FFT grid per maturity/rate group
    if kind is ModelKind.GH:
        model = GhParams(p["alpha"], p["beta"], p["delta"], p["nu"], relaxed=binding.relaxed)
    elif kind is ModelKind.NIG:
        model = NigParams(p["alpha"], p["beta"], p["delta"], p["mu"])
    else:
        model = CgmyParams(p["c"], p["g"], p["m"], p["y"])
    prices = np.empty_like(qd.mid)
    keys = np.stack([qd.tau, qd.rate, qd.dividend_yield, qd.spot], axis=1)
    _, inverse = np.unique(keys, axis=0, return_inverse=True)
    for gid in np.unique(inverse):
        mask = inverse == gid
        i0 = int(np.argmax(mask))
        grid = fft_call_prices(
            model, qd.spot[i0], qd.rate[i0], qd.dividend_yield[i0], qd.tau[i0],
            binding.fft, flags,
        )
        for i in np.nonzero(mask)[0]:
            prices[i] = grid.price_at(qd.strike[i])
    return prices


def _sse_from(prices: np.ndarray, qd: QuoteData) -> float:
    resid = (qd.mid - prices) / qd.vega
    return float(np.dot(resid, resid))


def sse_objective(binding: PricerBinding, params, quotes_or_data,
                  names: tuple | None = None, flags: list | None = None) -> float:
    """Vega-weighted SSE; infeasible parameter vectors score PENALTY."""
    qd = quotes_or_data if isinstance(quotes_or_data, QuoteData) else prepare_quotes(
        quotes_or_data, flags
    )
    try:
        prices = model_prices(binding, params, qd, names, flags)
    except (DomainError, NumericalError) as exc:
        if flags is not None:
            flags.append(f"penalty:{exc}")
        return PENALTY
    return _sse_from(prices, qd)


def evaluate_metrics(binding: PricerBinding, params, quotes_or_data,
                     names: tuple | None = None, flags: list | None = None) -> ErrorMetrics:
    """SSE (identical to sse_objective), mean absolute error, and mean
    absolute relative error; near-zero mids are excluded from ARE."""
    qd = quotes_or_data if isinstance(quotes_or_data, QuoteData) else prepare_quotes(
        quotes_or_data, flags
    )
    prices = model_prices(binding, params, qd, names, flags)
    sse = _sse_from(prices, qd)
    abs_err = np.abs(prices - qd.mid)
    ae = float(abs_err.mean()) if abs_err.size else 0.0
    usable = qd.mid >= 1e-9
    if (~usable).any() and flags is not None:
        flags.append(f"are_excluded_quotes:count={int((~usable).sum())}")
    are = float((abs_err[usable] / qd.mid[usable]).mean()) if usable.any() else 0.0
    return ErrorMetrics(sse=sse, ae=ae, are=are, n_quotes=len(qd.mid))


# ---------------------------------------------------------------------------
# box-constrained Nelder-Mead


class _Box:
    """Periodic sine map between the unconstrained z space and the box."""

    def __init__(self, lower: np.ndarray, upper: np.ndarray):
        self.lower = lower
        self.span = upper - lower

    def to_x(self, z: np.ndarray) -> np.ndarray:
        return self.lower + self.span * 0.5 * (1.0 + np.sin(z))

    def to_z(self, x: np.ndarray) -> np.ndarray:
        frac = (x - self.lower) / np.where(self.span > 0.0, self.span, 1.0)
        return np.arcsin(np.clip(2.0 * frac - 1.0, -1.0, 1.0))


_DIAM_TOL = 1e-8
_STALL_TOL = 1e-10
_STALL_WINDOW = 50


class _Budget:
    def __init__(self, fn, box, limit, trace, incumbent, offset=0):
        self.fn = fn
        self.box = box
        self.limit = limit
        self.count = 0
        self.trace = trace
        self.incumbent = incumbent  # single-element list: global best-so-far
        self.offset = offset
        self.best_f = math.inf
        self.best_x = None
        self.history = []

    def __call__(self, z: np.ndarray) -> float:
        if self.count >= self.limit:
            raise _OutOfBudget
        x = self.box.to_x(z)
        f = self.fn(x)
        self.count += 1
        if f < self.best_f:
            self.best_f = f
            self.best_x = x.copy()
        if f < self.incumbent[0]:
            self.incumbent[0] = f
            self.trace.append((self.offset + self.count, f))
        self.history.append(self.best_f)
        return f


class _OutOfBudget(Exception):
    pass


def _nelder_mead(spend: _Budget, z0: np.ndarray, step: float = 0.5) -> bool:
    """Minimize in z space; returns True when converged by diameter or stall."""
    d = z0.size
    # adaptive coefficients help in the higher-dimensional SVJ space
    refl, expa = 1.0, 1.0 + 2.0 / d
    contr, shrink = 0.75 - 1.0 / (2.0 * d), 1.0 - 1.0 / d
    simplex = [z0.copy()]
    for i in range(d):
        z = z0.copy()
        z[i] += step
        simplex.append(z)
    try:
        values = [spend(z) for z in simplex]
        while True:
            order = np.argsort(values)
            simplex = [simplex[i] for i in order]
            values = [values[i] for i in order]
            x_best = spend.box.to_x(simplex[0])
            diam = 0.0
            for z in simplex[1:]:
                diam = max(diam, float(np.max(np.abs(spend.box.to_x(z) - x_best) /
                                               np.where(spend.box.span > 0, spend.box.span, 1.0))))
            if diam < _DIAM_TOL:
                return True
            if (
                len(spend.history) > _STALL_WINDOW
                and spend.history[-_STALL_WINDOW - 1] - spend.history[-1] < _STALL_TOL
            ):
                return True
            centroid = np.mean(simplex[:-1], axis=0)
            worst = simplex[-1]
            reflected = centroid + refl * (centroid - worst)
            f_r = spend(reflected)
            if f_r < values[0]:
                expanded = centroid + expa * (reflected - centroid)
                f_e = spend(expanded)
                if f_e < f_r:
                    simplex[-1], values[-1] = expanded, f_e
                else:
                    simplex[-1], values[-1] = reflected, f_r
            elif f_r < values[-2]:
                simplex[-1], values[-1] = reflected, f_r
            else:
                if f_r < values[-1]:
                    contracted = centroid + contr * (reflected - centroid)
                else:
                    contracted = centroid - contr * (centroid - worst)
                f_c = spend(contracted)
                if f_c < min(f_r, values[-1]):
                    simplex[-1], values[-1] = contracted, f_c
                else:
                    best = simplex[0]
                    for i in range(1, d + 1):
                        simplex[i] = best + shrink * (simplex[i] - best)
                        values[i] = spend(simplex[i])
    except _OutOfBudget:
        return False


def optimize(binding: PricerBinding, space: ParamSpace, quotes, budget: int = 5000,
             seed: int = 0, restarts: int = 3) -> CalibrationResult:
    """Minimize the Vega-weighted SSE inside the parameter box.

    Runs Nelder-Mead from the configured initial point, then from
    `restarts` seeded random interior points, then polishes from the
    incumbent; the best-so-far trace is global and monotone.
    """
    if not len(quotes):
        raise DomainError("optimize requires a nonempty quote set")
    flags: list = []
    qd = quotes if isinstance(quotes, QuoteData) else prepare_quotes(quotes, flags)
    box = _Box(space.lower, space.upper)
    trace: list = []

    def objective(x: np.ndarray) -> float:
        return sse_objective(binding, x, qd, space.names, flags)

    rng = np.random.default_rng(seed)
    dim = space.initial.size
    evaluations = 0
    best_f = math.inf
    best_x = space.initial.copy()
    converged = False
    incumbent = [math.inf]
    run_idx = 0
    polish_steps = (0.3, 0.08, 0.02)
    stalled_polishes = 0
    n_scripted = restarts + 1
    slot = max(budget // (n_scripted + 1), 60)
    while budget - evaluations > dim + 1:
        remaining = budget - evaluations
        spend = _Budget(objective, box, remaining, trace, incumbent, offset=evaluations)
        run_converged = False
        try:
            if run_idx == 0:
                z0, step, cap = box.to_z(space.initial), 0.5, slot
            elif run_idx < n_scripted or stalled_polishes >= 2:
                # seeded random interior restart; feasibility-screened draws
                # count against the budget like any other evaluation
                z0, step, cap = _feasible_start(spend, rng, dim), 0.5, slot
                stalled_polishes = 0
            else:
                # polish from the incumbent with a fresh simplex: the
                # standard escape from degenerate simplex collapse
                z0 = box.to_z(best_x)
                step = polish_steps[(run_idx - n_scripted) % len(polish_steps)]
                cap = remaining
            spend.limit = min(spend.count + cap, remaining)
            run_converged = _nelder_mead(spend, z0, step)
        except _OutOfBudget:
            pass
        evaluations += spend.count
        improved = spend.best_f < best_f - _STALL_TOL
        if spend.best_f < best_f:
            best_f = spend.best_f
            best_x = spend.best_x
            converged = run_converged
        if run_idx >= n_scripted:
            stalled_polishes = 0 if improved else stalled_polishes + 1
        run_idx += 1
    return CalibrationResult(
        best_params=best_x,
        best_sse=best_f,
        trace=trace,
        evaluations=evaluations,
        converged=converged,
        flags=_dedupe_flags(flags),
    )


def _feasible_start(spend: "_Budget", rng, dim: int) -> np.ndarray:
    z = np.arcsin(2.0 * rng.uniform(0.05, 0.95, size=dim) - 1.0)
    for _ in range(50):
        if spend(z) < PENALTY:
            return z
        z = np.arcsin(2.0 * rng.uniform(0.05, 0.95, size=dim) - 1.0)
    return z


def _dedupe_flags(flags: list) -> list:
    counts: dict = {}
    for f in flags:
        counts[f] = counts.get(f, 0) + 1
    return [f if c == 1 else f"{f} (x{c})" for f, c in counts.items()]
