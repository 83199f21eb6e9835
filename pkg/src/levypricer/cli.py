"""Command-line workflow: filter, summarize, synth, price, calibrate,
evaluate, sweep.

Every command is deterministic given its flags and seed. Outputs embed a
manifest hash (a digest of the command, resolved options, and input file
contents -- no wall-clock state) and each run writes a ``*.manifest.json``
provenance sidecar that additionally carries a timestamp.

Exit codes: 0 success, 1 IO/usage, 2 data/schema, 3 numerical failure.
"""

import argparse
import datetime as dt
import hashlib
import json
import math
import sys

import numpy as np

from . import calibration as cal
from . import quotes as qmod
from . import sweep as sweepmod
from . import synth as synthmod
from .errors import ConvergenceError, DomainError, NumericalError
from .heston import VolSource
from .jumps_noniid import spec_from_json_dict, spec_to_json_dict
from .quotes import FilterConfig, QuoteSchemaError

EXIT_OK = 0
EXIT_USAGE_IO = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

_MODEL_CHOICES = ["bs", "sv", "svj", "noniid", "gh", "nig", "cgmy"]


class _CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's 2
        raise _CliError(f"usage error: {message}", EXIT_USAGE_IO)


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _manifest(command: str, options: dict, input_paths: list, output_paths: list):
    inputs = {str(p): _sha256_file(p) for p in input_paths}
    payload = {
        "command": command,
        "options": {k: v for k, v in sorted(options.items())},
        "inputs": inputs,
    }
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    sidecar = {
        "command": command,
        "inputs": inputs,
        "config_digest": digest,
        "outputs": [str(p) for p in output_paths],
        "timestamp": dt.datetime.now().isoformat(),
    }
    return digest, sidecar


def _write_sidecar(out_path, sidecar) -> None:
    with open(f"{out_path}.manifest.json", "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _json_dump(doc, path) -> None:
    def clean(x):
        if isinstance(x, (np.floating, np.integer)):
            return float(x)
        raise TypeError(f"not JSON serializable: {type(x)}")

    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=clean)
        fh.write("\n")


def _load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _binding_for(model: str, vol_source: str | None = None, params_doc: dict | None = None,
                 relaxed: bool = False) -> cal.PricerBinding:
    kind = cal.ModelKind(model)
    kwargs = {}
    if kind in (cal.ModelKind.SV, cal.ModelKind.SVJ):
        if vol_source == "implied":
            kwargs["vol_source"] = VolSource.IMPLIED_PER_QUOTE
        else:
            kwargs["vol_source"] = VolSource.CALIBRATED_CONSTANT
    if kind is cal.ModelKind.NONIID and params_doc is not None:
        kwargs["noniid_template"] = spec_from_json_dict(params_doc.get("params", params_doc))
    return cal.PricerBinding(model_kind=kind, relaxed=relaxed, **kwargs)


def _params_vector_dict(model: str, params_doc: dict) -> dict:
    """Model-parameter dict keyed by the calibration space names."""
    doc = params_doc.get("params", params_doc)
    if params_doc.get("model", model) != model:
        raise _CliError(
            f"config mismatch: params file is for model {params_doc.get('model')!r}, flag says {model!r}",
            EXIT_DATA,
        )
    if model == "noniid":
        spec = spec_from_json_dict(doc)
        return {"v0": spec.base_vol**2, "lambda": spec.lam}
    if model == "bs" and "v0" not in doc and "vol" in doc:
        return {"v0": float(doc["vol"]) ** 2}
    return {k: float(v) for k, v in doc.items()}


# ---------------------------------------------------------------------------
# subcommands


def _cmd_filter(args) -> int:
    quotes = qmod.load_quotes(args.quotes)
    cfg = FilterConfig(
        min_days=args.min_days,
        min_price=args.min_price,
        enforce_no_arbitrage=not args.skip_no_arbitrage,
    )
    kept, rejected = qmod.apply_filters(quotes, cfg)
    rejects_path = args.rejects or f"{args.out}.rejects.csv"
    digest, sidecar = _manifest(
        "filter",
        {
            "min_days": args.min_days,
            "min_price": args.min_price,
            "no_arbitrage": not args.skip_no_arbitrage,
        },
        [args.quotes],
        [args.out, rejects_path],
    )
    qmod.write_quotes_csv(kept, args.out, manifest_hash=digest)
    with open(rejects_path, "w", encoding="utf-8") as fh:
        fh.write(",".join(qmod.QUOTE_COLUMNS + ["reason"]) + "\n")
        for q, reason in rejected:
            fh.write(
                f"{q.trade_date.isoformat()},{q.spot!r},{q.strike!r},{q.maturity_days},"
                f"{q.bid!r},{q.ask!r},{q.rate!r},{q.dividend_yield!r},"
                f"{'' if q.implied_vol is None else repr(q.implied_vol)},{reason}\n"
            )
        fh.write(f"# manifest={digest}\n")
    _write_sidecar(args.out, sidecar)
    print(f"kept {len(kept)} of {len(quotes)} quotes -> {args.out}")
    return EXIT_OK


def _cmd_summarize(args) -> int:
    quotes = qmod.load_quotes(args.quotes)
    summary = qmod.summarize(quotes)
    digest, sidecar = _manifest("summarize", {}, [args.quotes], [args.out])
    qmod.write_summary_csv(summary, args.out, manifest_hash=digest)
    _write_sidecar(args.out, sidecar)
    total = sum(s.count for s in summary.values())
    print(f"summarized {total} quotes -> {args.out}")
    return EXIT_OK


def _parse_grid(text: str) -> list:
    if ":" in text:
        start, stop, count = text.split(":")
        return list(np.linspace(float(start), float(stop), int(count)))
    return [float(x) for x in text.split(",")]


def _cmd_synth(args) -> int:
    params_doc = _load_json(args.params)
    binding = _binding_for(args.model, params_doc=params_doc, relaxed=args.relaxed)
    params = _params_vector_dict(args.model, params_doc)
    quotes = synthmod.generate_quotes(
        binding,
        params,
        spot=args.spot,
        strikes=_parse_grid(args.strikes),
        maturities_days=[int(d) for d in args.maturities.split(",")],
        rate=args.rate,
        dividend_yield=args.dividend_yield,
        spread=args.spread,
        noise=args.noise,
        seed=args.seed,
        trade_date=dt.date.fromisoformat(args.trade_date),
    )
    options = {
        "model": args.model, "spot": args.spot, "strikes": args.strikes,
        "maturities": args.maturities, "rate": args.rate,
        "dividend_yield": args.dividend_yield, "spread": args.spread,
        "noise": args.noise, "seed": args.seed, "trade_date": args.trade_date,
    }
    digest, sidecar = _manifest("synth", options, [args.params], [args.out])
    qmod.write_quotes_csv(quotes, args.out, manifest_hash=digest)
    _write_sidecar(args.out, sidecar)
    print(f"wrote {len(quotes)} synthetic quotes -> {args.out}")
    return EXIT_OK


def _cmd_price(args) -> int:
    params_doc = _load_json(args.params)
    binding = _binding_for(args.model, vol_source=args.vol_source, params_doc=params_doc,
                           relaxed=args.relaxed)
    params = _params_vector_dict(args.model, params_doc)
    contract = {
        "spot": args.spot,
        "strike": args.strike,
        "maturity": args.maturity_days / qmod.TRADING_DAYS_PER_YEAR,
        "rate": args.rate,
        "dividend_yield": args.dividend_yield,
    }
    if args.implied_vol is not None:
        contract["implied_vol"] = args.implied_vol
    flags: list = []
    price = sweepmod.price_contract(binding, params, contract, flags)
    options = {
        "model": args.model, "spot": args.spot, "strike": args.strike,
        "maturity_days": args.maturity_days, "rate": args.rate,
        "dividend_yield": args.dividend_yield, "implied_vol": args.implied_vol,
    }
    digest, _sidecar = _manifest("price", options, [args.params], [args.out or ""])
    doc = {
        "model": args.model,
        "price": price,
        "contract": options,
        "flags": flags,
        "manifest": digest,
    }
    if args.out:
        _json_dump(doc, args.out)
        _write_sidecar(args.out, _sidecar)
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return EXIT_OK


def _result_doc(binding, space, result, metrics) -> dict:
    return {
        "params": {n: float(v) for n, v in zip(space.names, result.best_params)},
        "sse": float(result.best_sse),
        "sse_per_quote": metrics.sse_per_quote,
        "ae": metrics.ae,
        "are": metrics.are,
        "n_quotes": metrics.n_quotes,
        "converged": result.converged,
        "evaluations": result.evaluations,
        "flags": list(result.flags),
    }


def _cmd_calibrate(args) -> int:
    all_quotes = qmod.load_quotes(args.quotes)
    if not all_quotes:
        raise _CliError("quote file holds no rows", EXIT_DATA)
    params_doc = _load_json(args.params) if args.params else None
    binding = _binding_for(args.model, vol_source=args.vol_source, params_doc=params_doc,
                           relaxed=args.relaxed)
    space = cal.default_param_space(binding)
    if params_doc is not None and args.model != "noniid":
        overrides = _params_vector_dict(args.model, params_doc)
        initial = np.array([overrides.get(n, x) for n, x in zip(space.names, space.initial)])
        space = cal.ParamSpace(space.names, initial, space.lower, space.upper)

    def run(quote_subset):
        result = cal.optimize(binding, space, quote_subset, budget=args.budget,
                              seed=args.seed, restarts=args.restarts)
        metrics = cal.evaluate_metrics(binding, result.best_params, quote_subset, space.names)
        return result, metrics

    options = {
        "model": args.model, "vol_source": args.vol_source, "mode": args.mode,
        "budget": args.budget, "seed": args.seed, "restarts": args.restarts,
    }
    inputs = [args.quotes] + ([args.params] if args.params else [])
    digest, sidecar = _manifest("calibrate", options, inputs, [args.out])
    if args.mode == "per-day":
        days = sorted({q.trade_date for q in all_quotes})
        day_docs = []
        for day in days:
            subset = [q for q in all_quotes if q.trade_date == day]
            result, metrics = run(subset)
            doc = _result_doc(binding, space, result, metrics)
            doc["date"] = day.isoformat()
            day_docs.append(doc)
        out_doc = {"model": args.model, "mode": "per-day", "days": day_docs, "manifest": digest}
    else:
        result, metrics = run(all_quotes)
        out_doc = {"model": args.model, "mode": "pooled", **_result_doc(binding, space, result, metrics),
                   "manifest": digest}
    _json_dump(out_doc, args.out)
    _write_sidecar(args.out, sidecar)
    print(f"calibrated {args.model} ({args.mode}) -> {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    result_doc = _load_json(args.result)
    if args.model and result_doc.get("model") != args.model:
        raise _CliError(
            f"config mismatch: result is for model {result_doc.get('model')!r}, flag says {args.model!r}",
            EXIT_DATA,
        )
    model = result_doc["model"]
    quotes = qmod.load_quotes(args.quotes)
    params_doc = _load_json(args.params) if args.params else None
    binding = _binding_for(model, vol_source=args.vol_source, params_doc=params_doc,
                           relaxed=args.relaxed)
    space = cal.default_param_space(binding)

    def metrics_doc(params_map, quote_subset):
        vector = np.array([float(params_map[n]) for n in space.names])
        flags: list = []
        m = cal.evaluate_metrics(binding, vector, quote_subset, space.names, flags)
        return {
            "sse": m.sse, "sse_per_quote": m.sse_per_quote, "ae": m.ae, "are": m.are,
            "n_quotes": m.n_quotes, "flags": flags,
        }

    digest, sidecar = _manifest(
        "evaluate", {"model": model, "vol_source": args.vol_source},
        [args.result, args.quotes] + ([args.params] if args.params else []), [args.out],
    )
    if result_doc.get("mode") == "per-day":
        day_docs = []
        for day_entry in result_doc["days"]:
            day = dt.date.fromisoformat(day_entry["date"])
            subset = [q for q in quotes if q.trade_date == day]
            if not subset:
                continue
            doc = metrics_doc(day_entry["params"], subset)
            doc["date"] = day_entry["date"]
            day_docs.append(doc)
        if not day_docs:
            raise _CliError("no quote dates match the per-day calibration result", EXIT_DATA)
        total_n = sum(d["n_quotes"] for d in day_docs)
        agg = {
            "sse": sum(d["sse"] for d in day_docs),
            "ae": sum(d["ae"] * d["n_quotes"] for d in day_docs) / total_n,
            "are": sum(d["are"] * d["n_quotes"] for d in day_docs) / total_n,
            "n_quotes": total_n,
        }
        out_doc = {"model": model, "mode": "per-day", "days": day_docs, "aggregate": agg,
                   "manifest": digest}
    else:
        out_doc = {"model": model, "mode": result_doc.get("mode", "pooled"),
                   **metrics_doc(result_doc["params"], quotes), "manifest": digest}
    _json_dump(out_doc, args.out)
    _write_sidecar(args.out, sidecar)
    print(f"evaluated {model} on {len(quotes)} quotes -> {args.out}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    params_doc = _load_json(args.params)
    binding = _binding_for(args.model, vol_source=args.vol_source, params_doc=params_doc,
                           relaxed=args.relaxed)
    params = _params_vector_dict(args.model, params_doc)
    contract = {
        "spot": args.spot,
        "strike": args.strike,
        "maturity": args.maturity_days / qmod.TRADING_DAYS_PER_YEAR,
        "rate": args.rate,
        "dividend_yield": args.dividend_yield,
    }
    if args.implied_vol is not None:
        contract["implied_vol"] = args.implied_vol
    if args.grid:
        grid = _parse_grid(args.grid)
    else:
        grid = list(np.linspace(args.grid_start, args.grid_stop, args.grid_points))
    spec = sweepmod.SweepSpec(binding=binding, params=params, contract=contract,
                              target=args.target, grid=np.array(grid))
    report = sweepmod.run_sweep(spec)
    options = {
        "model": args.model, "target": args.target, "grid": [float(g) for g in grid],
        "spot": args.spot, "strike": args.strike, "maturity_days": args.maturity_days,
        "rate": args.rate, "dividend_yield": args.dividend_yield,
    }
    digest, sidecar = _manifest("sweep", options, [args.params], [args.out])
    sweepmod.write_sweep_csv(report, args.out, manifest_hash=digest)
    _write_sidecar(args.out, sidecar)
    print(f"sweep {args.target}: direction={report.direction.value} -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_contract_flags(p) -> None:
    p.add_argument("--spot", type=float, required=True)
    p.add_argument("--strike", type=float, default=100.0)
    p.add_argument("--maturity-days", type=int, default=63)
    p.add_argument("--rate", type=float, default=0.0)
    p.add_argument("--dividend-yield", type=float, default=0.0)
    p.add_argument("--implied-vol", type=float, default=None)


def build_parser() -> _Parser:
    parser = _Parser(prog="levypricer", description=__doc__)
    parser.add_argument("--config", default=None, help="JSON file of flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter", help="apply the exclusion filters to a quote CSV")
    p.add_argument("--quotes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rejects", default=None)
    p.add_argument("--min-days", type=int, default=6)
    p.add_argument("--min-price", type=float, default=0.375)
    p.add_argument("--skip-no-arbitrage", action="store_true")
    p.set_defaults(fn=_cmd_filter)

    p = sub.add_parser("summarize", help="bucketed summary statistics of a quote CSV")
    p.add_argument("--quotes", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_summarize)

    p = sub.add_parser("synth", help="generate a synthetic model-priced quote CSV")
    p.add_argument("--model", choices=_MODEL_CHOICES, required=True)
    p.add_argument("--params", required=True, help="model parameter JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--spot", type=float, default=100.0)
    p.add_argument("--strikes", default="70:130:25", help="start:stop:count or comma list")
    p.add_argument("--maturities", default="21,63,126,252", help="comma list of days")
    p.add_argument("--rate", type=float, default=0.01)
    p.add_argument("--dividend-yield", type=float, default=0.0)
    p.add_argument("--spread", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trade-date", default="2020-01-02")
    p.add_argument("--relaxed", action="store_true")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("price", help="price a single contract")
    p.add_argument("--model", choices=_MODEL_CHOICES, required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--vol-source", choices=["implied", "constant"], default="constant")
    p.add_argument("--relaxed", action="store_true")
    _add_contract_flags(p)
    p.set_defaults(fn=_cmd_price)

    p = sub.add_parser("calibrate", help="fit model parameters to a quote CSV")
    p.add_argument("--model", choices=_MODEL_CHOICES, required=True)
    p.add_argument("--quotes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--params", default=None, help="optional initial-value override / noniid spec")
    p.add_argument("--vol-source", choices=["implied", "constant"], default="constant")
    p.add_argument("--mode", choices=["pooled", "per-day"], default="pooled")
    p.add_argument("--budget", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=3)
    p.add_argument("--relaxed", action="store_true")
    p.set_defaults(fn=_cmd_calibrate)

    p = sub.add_parser("evaluate", help="score a calibration result on a quote CSV")
    p.add_argument("--result", required=True, help="CalibrationResult JSON")
    p.add_argument("--quotes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", default=None, help="expected model (mismatch is an error)")
    p.add_argument("--params", default=None, help="noniid spec JSON when evaluating noniid")
    p.add_argument("--vol-source", choices=["implied", "constant"], default="constant")
    p.add_argument("--relaxed", action="store_true")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("sweep", help="one-parameter price sensitivity sweep")
    p.add_argument("--model", choices=_MODEL_CHOICES, required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--grid", default=None, help="comma list or start:stop:count")
    p.add_argument("--grid-start", type=float, default=None)
    p.add_argument("--grid-stop", type=float, default=None)
    p.add_argument("--grid-points", type=int, default=25)
    p.add_argument("--vol-source", choices=["implied", "constant"], default="constant")
    p.add_argument("--relaxed", action="store_true")
    _add_contract_flags(p)
    p.set_defaults(fn=_cmd_sweep)

    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        # config file supplies defaults; explicit flags win
        if "--config" in argv:
            cfg_path = argv[argv.index("--config") + 1]
            config = _load_json(cfg_path)
            for p in [parser] + list(parser._subparsers._group_actions[0].choices.values()):
                known = {a.dest for a in p._actions}
                p.set_defaults(**{k: v for k, v in config.items() if k in known})
        args = parser.parse_args(argv)
        return args.fn(args)
    except _CliError as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except (FileNotFoundError, PermissionError, IsADirectoryError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_USAGE_IO
    except (QuoteSchemaError, DomainError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, ConvergenceError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
