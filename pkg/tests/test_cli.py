import json

import numpy as np
import pytest

from levypricer.cli import main
from levypricer.quotes import load_quotes

HEADER = "trade_date,spot,strike,maturity_days,bid,ask,rate,dividend_yield,implied_vol\n"


def write_sample_quotes(path, n_good=9, bad_no_arb=True):
    rows = [HEADER]
    for i in range(n_good):
        strike = 95.0 + 2.0 * i
        rows.append(f"2020-01-02,100.0,{strike},63,4.1,4.5,0.01,0.0,0.2\n")
    if bad_no_arb:
        # mid far below intrinsic for a deep ITM strike
        rows.append("2020-01-02,100.0,60.0,63,1.0,1.2,0.01,0.0,\n")
    path.write_text("".join(rows))


def bs_params_file(tmp_path, v0=0.04):
    p = tmp_path / "bs.json"
    p.write_text(json.dumps({"model": "bs", "params": {"v0": v0}}))
    return p


def nig_params_file(tmp_path):
    p = tmp_path / "nig.json"
    p.write_text(json.dumps({
        "model": "nig",
        "params": {"alpha": 6.1882, "beta": -3.8941, "delta": 0.1622, "mu": 0.0},
    }))
    return p


class TestFilterCommand:
    def test_drops_designated_row(self, tmp_path):
        src = tmp_path / "quotes.csv"
        write_sample_quotes(src)
        out = tmp_path / "kept.csv"
        code = main(["filter", "--quotes", str(src), "--out", str(out)])
        assert code == 0
        kept = load_quotes(out)
        assert len(kept) == 9
        rejects = (tmp_path / "kept.csv.rejects.csv").read_text()
        assert "no_arbitrage" in rejects

    def test_default_thresholds(self, tmp_path):
        src = tmp_path / "quotes.csv"
        src.write_text(
            HEADER
            + "2020-01-02,100.0,110.0,5,1.0,1.2,0.01,0.0,\n"   # 5 days: min_days
            + "2020-01-02,100.0,140.0,63,0.2,0.3,0.01,0.0,\n"  # mid 0.25: min_price
            + "2020-01-02,100.0,110.0,63,1.0,1.2,0.01,0.0,\n"
        )
        out = tmp_path / "kept.csv"
        assert main(["filter", "--quotes", str(src), "--out", str(out)]) == 0
        assert len(load_quotes(out)) == 1
        rejects = (out.parent / "kept.csv.rejects.csv").read_text()
        assert "min_days" in rejects and "min_price" in rejects

    def test_missing_input_exits_one(self, tmp_path):
        code = main(["filter", "--quotes", str(tmp_path / "nope.csv"), "--out", str(tmp_path / "o.csv")])
        assert code == 1

    def test_malformed_file_exits_two(self, tmp_path):
        src = tmp_path / "quotes.csv"
        src.write_text(HEADER + "2020-01-02,abc,110.0,63,1.0,1.2,0.01,0.0,\n")
        code = main(["filter", "--quotes", str(src), "--out", str(tmp_path / "o.csv")])
        assert code == 2

    def test_usage_error_exits_one(self):
        assert main(["filter"]) == 1


class TestSummarizeCommand:
    def test_summary_written(self, tmp_path):
        src = tmp_path / "quotes.csv"
        write_sample_quotes(src, bad_no_arb=False)
        out = tmp_path / "summary.csv"
        assert main(["summarize", "--quotes", str(src), "--out", str(out)]) == 0
        text = out.read_text().splitlines()
        assert text[0].startswith("moneyness_bucket,")
        counts = sum(int(line.split(",")[-1]) for line in text[1:] if not line.startswith("#"))
        assert counts == 9


class TestSynthPriceSweep:
    def test_synth_deterministic_bytes(self, tmp_path):
        params = bs_params_file(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        args = ["synth", "--model", "bs", "--params", str(params), "--spot", "100",
                "--strikes", "90:120:7", "--maturities", "42,126", "--noise", "0.01",
                "--seed", "11"]
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_changes_noise(self, tmp_path):
        params = bs_params_file(tmp_path)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        base = ["synth", "--model", "bs", "--params", str(params), "--strikes", "95:115:5",
                "--maturities", "63", "--noise", "0.02", "--spot", "100"]
        assert main(base + ["--seed", "1", "--out", str(a)]) == 0
        assert main(base + ["--seed", "2", "--out", str(b)]) == 0
        assert a.read_bytes() != b.read_bytes()

    def test_price_command_stdout_and_file(self, tmp_path, capsys):
        params = nig_params_file(tmp_path)
        assert main(["price", "--model", "nig", "--params", str(params), "--spot", "10",
                     "--strike", "12", "--maturity-days", "504", "--rate", "0.05"]) == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["model"] == "nig"
        assert 0.0 < doc["price"] < 10.0
        out = tmp_path / "price.json"
        assert main(["price", "--model", "nig", "--params", str(params), "--spot", "10",
                     "--strike", "12", "--maturity-days", "504", "--rate", "0.05",
                     "--out", str(out)]) == 0
        doc2 = json.loads(out.read_text())
        assert doc2["price"] == doc["price"]
        assert "manifest" in doc2

    def test_sweep_command_direction_line(self, tmp_path):
        params = nig_params_file(tmp_path)
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--model", "nig", "--params", str(params), "--target", "strike",
                     "--grid", "9:12:25", "--spot", "10", "--strike", "12",
                     "--maturity-days", "504", "--rate", "0.05", "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "param_value,price"
        assert lines[-1] == "# direction=Decreasing"

    def test_params_model_mismatch_exits_two(self, tmp_path):
        params = nig_params_file(tmp_path)
        code = main(["price", "--model", "cgmy", "--params", str(params), "--spot", "10"])
        assert code == 2


class TestCalibrateEvaluate:
    def test_round_trip_and_handoff(self, tmp_path):
        params = bs_params_file(tmp_path, v0=0.0625)
        quotes_a = tmp_path / "a.csv"
        quotes_b = tmp_path / "b.csv"
        for path, seed in ((quotes_a, 1), (quotes_b, 2)):
            assert main(["synth", "--model", "bs", "--params", str(params), "--spot", "100",
                         "--strikes", "92:120:8", "--maturities", "42,126,252",
                         "--seed", str(seed), "--out", str(path)]) == 0
        result = tmp_path / "result.json"
        assert main(["calibrate", "--model", "bs", "--quotes", str(quotes_a),
                     "--budget", "400", "--seed", "0", "--out", str(result)]) == 0
        doc = json.loads(result.read_text())
        assert doc["model"] == "bs" and doc["mode"] == "pooled"
        assert doc["params"]["v0"] == pytest.approx(0.0625, abs=1e-5)
        assert doc["sse"] < 1e-8
        assert {"sse_per_quote", "ae", "are", "n_quotes", "converged", "evaluations", "flags"} <= set(doc)

        metrics = tmp_path / "metrics.json"
        assert main(["evaluate", "--result", str(result), "--quotes", str(quotes_b),
                     "--out", str(metrics)]) == 0
        mdoc = json.loads(metrics.read_text())
        assert mdoc["model"] == "bs"
        assert mdoc["sse"] < 1e-6

    def test_evaluate_model_mismatch_exits_two(self, tmp_path):
        result = tmp_path / "result.json"
        result.write_text(json.dumps({"model": "bs", "mode": "pooled", "params": {"v0": 0.04}}))
        quotes = tmp_path / "q.csv"
        write_sample_quotes(quotes, bad_no_arb=False)
        code = main(["evaluate", "--result", str(result), "--quotes", str(quotes),
                     "--model", "sv", "--out", str(tmp_path / "m.json")])
        assert code == 2

    def test_per_day_mode(self, tmp_path):
        quotes = tmp_path / "q.csv"
        rows = [HEADER]
        for day in ("2020-01-02", "2020-01-03"):
            for i in range(6):
                rows.append(f"{day},100.0,{96.0 + 3 * i},63,3.8,4.2,0.01,0.0,0.2\n")
        quotes.write_text("".join(rows))
        result = tmp_path / "result.json"
        assert main(["calibrate", "--model", "bs", "--quotes", str(quotes), "--mode", "per-day",
                     "--budget", "200", "--out", str(result)]) == 0
        doc = json.loads(result.read_text())
        assert doc["mode"] == "per-day"
        assert [d["date"] for d in doc["days"]] == ["2020-01-02", "2020-01-03"]
        metrics = tmp_path / "m.json"
        assert main(["evaluate", "--result", str(result), "--quotes", str(quotes),
                     "--out", str(metrics)]) == 0
        mdoc = json.loads(metrics.read_text())
        assert mdoc["mode"] == "per-day" and len(mdoc["days"]) == 2
        assert mdoc["aggregate"]["n_quotes"] == 12


class TestConfigFile:
    def test_config_defaults_with_flag_precedence(self, tmp_path):
        src = tmp_path / "quotes.csv"
        write_sample_quotes(src)
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({"min_days": 100}))
        out = tmp_path / "kept.csv"
        # config pushes min_days to 100 -> everything rejected
        assert main(["--config", str(cfg), "filter", "--quotes", str(src), "--out", str(out)]) == 0
        assert len(load_quotes(out)) == 0
        # explicit flag wins over config
        assert main(["--config", str(cfg), "filter", "--quotes", str(src), "--out", str(out),
                     "--min-days", "6"]) == 0
        assert len(load_quotes(out)) == 9


class TestManifests:
    def test_outputs_reference_manifest_hash(self, tmp_path):
        src = tmp_path / "quotes.csv"
        write_sample_quotes(src)
        out = tmp_path / "kept.csv"
        assert main(["filter", "--quotes", str(src), "--out", str(out)]) == 0
        text = out.read_text()
        assert "# manifest=" in text
        sidecar = json.loads((tmp_path / "kept.csv.manifest.json").read_text())
        digest = text.rsplit("# manifest=", 1)[1].strip()
        assert sidecar["config_digest"] == digest
        assert sidecar["command"] == "filter"
        assert "timestamp" in sidecar
