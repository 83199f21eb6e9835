"""One-parameter sensitivity sweeps around a base pricing configuration.

A sweep reprices a single contract along a grid of values for one
parameter (a contract field or a model parameter), classifies the price
curve's direction from its adjacent differences, and can emit the curve
as CSV with a trailing ``# direction=...`` comment for external plotting.
"""

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .calibration import ModelKind, PricerBinding, QuoteData, default_param_space, model_prices
from .errors import DomainError, NumericalError

__all__ = ["Direction", "SweepSpec", "SweepReport", "price_contract", "run_sweep", "write_sweep_csv"]

CONTRACT_FIELDS = ("spot", "strike", "maturity", "rate", "dividend_yield")

_DIRECTION_TOL = 1e-9


class Direction(Enum):
    INCREASING = "Increasing"
    DECREASING = "Decreasing"
    NON_MONOTONE = "NonMonotone"


@dataclass(frozen=True)
class SweepSpec:
    binding: PricerBinding
    params: dict
    contract: dict  # spot, strike, maturity, rate, dividend_yield [, implied_vol]
    target: str
    grid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid", np.asarray(self.grid, dtype=np.float64))
        if self.grid.size < 5:
            raise DomainError(f"sweep grid needs at least 5 points, got {self.grid.size}")
        if not (np.diff(self.grid) > 0.0).all():
            raise DomainError("sweep grid must be strictly increasing")
        known = set(CONTRACT_FIELDS) | set(default_param_space(self.binding).names)
        if self.target not in known:
            raise DomainError(f"unknown sweep target {self.target!r}; expected one of {sorted(known)}")


@dataclass
class SweepReport:
    curve: list  # (value, price) over the valid grid points
    direction: Direction
    flags: list = field(default_factory=list)


def price_contract(binding: PricerBinding, params: dict, contract: dict,
                   flags: list | None = None) -> float:
    """Price one contract under any bound model."""
    names = default_param_space(binding).names
    missing = [n for n in names if n not in params]
    if missing:
        raise DomainError(f"missing model parameters {missing} for {binding.model_kind.value}")
    vector = np.array([float(params[n]) for n in names])
    maturity = float(contract["maturity"])
    if maturity <= 0.0:
        raise DomainError(f"contract maturity must be > 0, got {maturity}")
    iv = contract.get("implied_vol")
    qd = QuoteData(
        spot=np.array([float(contract["spot"])]),
        strike=np.array([float(contract["strike"])]),
        tau=np.array([maturity]),
        rate=np.array([float(contract.get("rate", 0.0))]),
        dividend_yield=np.array([float(contract.get("dividend_yield", 0.0))]),
        mid=np.array([0.0]),
        implied_vol=np.array([float(iv) if iv is not None else math.nan]),
        vega=np.array([1.0]),
        trade_dates=[None],
    )
    return float(model_prices(binding, vector, qd, names, flags)[0])


def run_sweep(spec: SweepSpec) -> SweepReport:
    """Price along the grid, recording invalid points as gaps."""
    curve = []
    flags: list = []
    for value in spec.grid:
        params = dict(spec.params)
        contract = dict(spec.contract)
        if spec.target in CONTRACT_FIELDS:
            contract[spec.target] = float(value)
        else:
            params[spec.target] = float(value)
        try:
            price = price_contract(spec.binding, params, contract, flags)
        except (DomainError, NumericalError) as exc:
            flags.append(f"gap:{spec.target}={value:g}:{exc}")
            continue
        curve.append((float(value), price))
    if len(curve) < 5:
        raise DomainError(f"sweep produced only {len(curve)} valid points; need at least 5")
    prices = np.array([p for _, p in curve])
    tol = _DIRECTION_TOL * float(np.abs(prices).max())
    diffs = np.diff(prices)
    # differences inside the tolerance band are ties; a direction needs at
    # least one difference beyond tolerance and none of the opposite sign
    if (diffs > -tol).all() and (diffs > tol).any():
        direction = Direction.INCREASING
    elif (diffs < tol).all() and (diffs < -tol).any():
        direction = Direction.DECREASING
    else:
        direction = Direction.NON_MONOTONE
    return SweepReport(curve=curve, direction=direction, flags=flags)


def write_sweep_csv(report: SweepReport, path, manifest_hash: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["param_value", "price"])
        for value, price in report.curve:
            writer.writerow([repr(value), repr(price)])
        gaps = sum(1 for f in report.flags if f.startswith("gap:"))
        if gaps:
            fh.write(f"# gaps={gaps}\n")
        if manifest_hash:
            fh.write(f"# manifest={manifest_hash}\n")
        fh.write(f"# direction={report.direction.value}\n")
