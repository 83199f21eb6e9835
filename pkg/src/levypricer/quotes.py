"""Option-quote ingestion, exclusion filters, and bucketed summaries.

Quotes are index call observations keyed by trade date. Three exclusion
filters are applied in a fixed order: the static no-arbitrage bound on
the bid-ask midpoint, a minimum days-to-expiry (default 6), and a
minimum price (default 0.375 = 3/8). Surviving quotes are grouped into
moneyness (S/K) and days-to-expiration buckets and summarized.

Maturities follow the trading-day convention: 252 days per year.
"""

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from enum import Enum

TRADING_DAYS_PER_YEAR = 252

__all__ = [
    "OptionQuote",
    "FilterConfig",
    "MoneynessBucket",
    "MaturityBucket",
    "BucketKey",
    "BucketSummary",
    "QuoteSchemaError",
    "load_quotes",
    "write_quotes_csv",
    "passes_no_arbitrage",
    "apply_filters",
    "bucket_key",
    "summarize",
    "write_summary_csv",
]

QUOTE_COLUMNS = [
    "trade_date",
    "spot",
    "strike",
    "maturity_days",
    "bid",
    "ask",
    "rate",
    "dividend_yield",
    "implied_vol",
]


class QuoteSchemaError(ValueError):
    """Malformed quote file: bad header, row, or field."""


@dataclass(frozen=True)
class OptionQuote:
    trade_date: dt.date
    spot: float
    strike: float
    maturity_days: int
    bid: float
    ask: float
    rate: float
    dividend_yield: float
    implied_vol: float | None = None
    maturity_years: float = field(default=0.0)

    def __post_init__(self):
        if self.maturity_years == 0.0:
            object.__setattr__(
                self, "maturity_years", self.maturity_days / TRADING_DAYS_PER_YEAR
            )
        if self.spot <= 0.0 or self.strike <= 0.0:
            raise ValueError(f"quote requires positive spot and strike, got {self.spot}, {self.strike}")
        if self.maturity_days < 1:
            raise ValueError(f"quote requires maturity_days >= 1, got {self.maturity_days}")
        if not (self.ask >= self.bid >= 0.0):
            raise ValueError(f"quote requires ask >= bid >= 0, got bid={self.bid}, ask={self.ask}")
        if abs(self.maturity_years - self.maturity_days / TRADING_DAYS_PER_YEAR) > 1e-12:
            raise ValueError("maturity_years inconsistent with maturity_days/252")
        if self.dividend_yield < 0.0:
            raise ValueError(f"quote requires dividend_yield >= 0, got {self.dividend_yield}")
        if self.implied_vol is not None and self.implied_vol <= 0.0:
            raise ValueError(f"implied_vol must be positive when present, got {self.implied_vol}")

    @property
    def mid(self) -> float:
        """Bid-ask midpoint: the market price used everywhere downstream."""
        return 0.5 * (self.bid + self.ask)

    @property
    def moneyness(self) -> float:
        return self.spot / self.strike


@dataclass(frozen=True)
class FilterConfig:
    min_days: int = 6
    min_price: float = 0.375
    enforce_no_arbitrage: bool = True

    def __post_init__(self):
        if self.min_days < 1:
            raise ValueError(f"min_days must be >= 1, got {self.min_days}")
        if self.min_price < 0.0:
            raise ValueError(f"min_price must be >= 0, got {self.min_price}")


class MoneynessBucket(Enum):
    DOTM = "DOTM"
    OTM = "OTM"
    ATM_LOW = "ATM_LOW"
    ATM_HIGH = "ATM_HIGH"
    ITM = "ITM"
    DITM = "DITM"


class MaturityBucket(Enum):
    SHORT = "SHORT"
    MEDIUM = "MEDIUM"
    LONG = "LONG"


@dataclass(frozen=True)
class BucketKey:
    moneyness_bucket: MoneynessBucket
    maturity_bucket: MaturityBucket


@dataclass(frozen=True)
class BucketSummary:
    mean_mid: float
    mean_eff_spread: float
    mean_implied_vol: float
    count: int


def _parse_row(row: dict, row_num: int) -> OptionQuote:
    def get_float(col: str) -> float:
        raw = (row.get(col) or "").strip()
        try:
            return float(raw)
        except ValueError:
            raise QuoteSchemaError(f"row {row_num}: non-numeric value {raw!r} in column {col!r}")

    raw_date = (row.get("trade_date") or "").strip()
    try:
        trade_date = dt.date.fromisoformat(raw_date)
    except ValueError:
        raise QuoteSchemaError(f"row {row_num}: bad ISO date {raw_date!r} in column 'trade_date'")

    raw_days = (row.get("maturity_days") or "").strip()
    try:
        maturity_days = int(raw_days)
    except ValueError:
        raise QuoteSchemaError(
            f"row {row_num}: non-integer value {raw_days!r} in column 'maturity_days'"
        )

    raw_iv = (row.get("implied_vol") or "").strip()
    implied = float(raw_iv) if raw_iv else None
    if raw_iv:
        try:
            implied = float(raw_iv)
        except ValueError:
            raise QuoteSchemaError(
                f"row {row_num}: non-numeric value {raw_iv!r} in column 'implied_vol'"
            )

    try:
        return OptionQuote(
            trade_date=trade_date,
            spot=get_float("spot"),
            strike=get_float("strike"),
            maturity_days=maturity_days,
            bid=get_float("bid"),
            ask=get_float("ask"),
            rate=get_float("rate"),
            dividend_yield=get_float("dividend_yield"),
            implied_vol=implied,
        )
    except ValueError as exc:
        raise QuoteSchemaError(f"row {row_num}: {exc}")


def load_quotes(path) -> list[OptionQuote]:
    """Read a quote CSV (header required; '#'-prefixed lines ignored).

    Raises QuoteSchemaError naming the row and column on any malformed
    field; IO errors propagate as OSError.
    """
    quotes = []
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.lstrip().startswith("#")]
    reader = csv.DictReader(lines)
    if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != QUOTE_COLUMNS:
        raise QuoteSchemaError(
            f"bad header: expected {','.join(QUOTE_COLUMNS)}, got {reader.fieldnames}"
        )
    for i, row in enumerate(reader, start=2):  # header is line 1
        quotes.append(_parse_row(row, i))
    return quotes


def _fmt(x: float) -> str:
    return repr(float(x))


def write_quotes_csv(quotes, path, manifest_hash: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(QUOTE_COLUMNS)
        for q in quotes:
            writer.writerow(
                [
                    q.trade_date.isoformat(),
                    _fmt(q.spot),
                    _fmt(q.strike),
                    q.maturity_days,
                    _fmt(q.bid),
                    _fmt(q.ask),
                    _fmt(q.rate),
                    _fmt(q.dividend_yield),
                    "" if q.implied_vol is None else _fmt(q.implied_vol),
                ]
            )
        if manifest_hash:
            fh.write(f"# manifest={manifest_hash}\n")


def passes_no_arbitrage(q: OptionQuote) -> bool:
    """Midpoint must cover max(0, S-K, S*e^{-q*tau} - K*e^{-r*tau})."""
    tau = q.maturity_years
    bound = max(
        0.0,
        q.spot - q.strike,
        q.spot * math.exp(-q.dividend_yield * tau) - q.strike * math.exp(-q.rate * tau),
    )
    return q.mid >= bound


def apply_filters(quotes, cfg: FilterConfig = FilterConfig()):
    """Split quotes into (kept, rejected) lists.

    Rules run in a fixed order per quote -- no-arbitrage, min_days,
    min_price -- and a rejection carries only the first failing rule.
    """
    kept = []
    rejected = []
    for q in quotes:
        if cfg.enforce_no_arbitrage and not passes_no_arbitrage(q):
            rejected.append((q, "no_arbitrage"))
        elif q.maturity_days < cfg.min_days:
            rejected.append((q, "min_days"))
        elif q.mid < cfg.min_price:
            rejected.append((q, "min_price"))
        else:
            kept.append(q)
    return kept, rejected


def bucket_key(q: OptionQuote) -> BucketKey:
    m = q.moneyness
    if m < 0.94:
        mb = MoneynessBucket.DOTM
    elif m < 0.97:
        mb = MoneynessBucket.OTM
    elif m < 1.00:
        mb = MoneynessBucket.ATM_LOW
    elif m < 1.03:
        mb = MoneynessBucket.ATM_HIGH
    elif m < 1.06:
        mb = MoneynessBucket.ITM
    else:
        mb = MoneynessBucket.DITM
    d = q.maturity_days
    if d < 40:
        tb = MaturityBucket.SHORT
    elif d < 120:
        tb = MaturityBucket.MEDIUM
    else:
        tb = MaturityBucket.LONG
    return BucketKey(mb, tb)


def summarize(quotes) -> dict[BucketKey, BucketSummary]:
    """Per-bucket means of mid, effective spread (half of ask-bid), and
    implied vol, plus counts. Every bucket appears; empty ones hold zeros.
    Implied-vol means are over the quotes that carry one."""
    acc: dict[BucketKey, list] = {}
    for mb in MoneynessBucket:
        for tb in MaturityBucket:
            acc[BucketKey(mb, tb)] = [0.0, 0.0, 0.0, 0, 0]  # mid, spread, iv, n, n_iv
    for q in quotes:
        slot = acc[bucket_key(q)]
        slot[0] += q.mid
        slot[1] += 0.5 * (q.ask - q.bid)
        if q.implied_vol is not None:
            slot[2] += q.implied_vol
            slot[4] += 1
        slot[3] += 1
    out = {}
    for key, (mid_sum, spr_sum, iv_sum, n, n_iv) in acc.items():
        out[key] = BucketSummary(
            mean_mid=mid_sum / n if n else 0.0,
            mean_eff_spread=spr_sum / n if n else 0.0,
            mean_implied_vol=iv_sum / n_iv if n_iv else 0.0,
            count=n,
        )
    return out


def write_summary_csv(summary, path, manifest_hash: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["moneyness_bucket", "maturity_bucket", "mean_mid", "mean_eff_spread", "mean_implied_vol", "count"]
        )
        for mb in MoneynessBucket:
            for tb in MaturityBucket:
                s = summary[BucketKey(mb, tb)]
                writer.writerow(
                    [mb.value, tb.value, _fmt(s.mean_mid), _fmt(s.mean_eff_spread), _fmt(s.mean_implied_vol), s.count]
                )
        if manifest_hash:
            fh.write(f"# manifest={manifest_hash}\n")
