import csv
import json

import pytest

from regretfolio.cli import main
from regretfolio.config import CONFIG_KEYS, BacktestConfig, load_config
from regretfolio.errors import ConfigError


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def run_backtest_cli(config, bundle, out):
    assert main(["backtest", "--config", str(config), "--bundle", str(bundle), "--out", str(out)]) == 0


def test_ingest_clean(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("date,SPY,GLD\n2020-01-02,1,2\n2020-01-03,2,3\n2020-01-06,3,4\n")
    assert main(["ingest", "--prices", str(tmp_path / "p.csv"), "--out", str(tmp_path / "b")]) == 0
    assert capsys.readouterr().out.strip().endswith("0 issues")
    assert (tmp_path / "b" / "prices.csv").exists()


def test_ingest_all_missing_asset(tmp_path, capsys):
    (tmp_path / "p.csv").write_text("date,SPY,GLD\n2020-01-02,1,\n2020-01-03,2,\n")
    assert main(["ingest", "--prices", str(tmp_path / "p.csv"), "--out", str(tmp_path / "b")]) == 1
    assert "GLD" in capsys.readouterr().err


def test_ingest_deterministic(demo_inputs, tmp_path):
    args = ["--prices", str(demo_inputs / "prices.csv"), "--sentiment",
            str(demo_inputs / "sentiment.csv"), "--yields", str(demo_inputs / "yields.csv"),
            "--sectors", str(demo_inputs / "sectors.csv")]
    assert main(["ingest", *args, "--out", str(tmp_path / "a")]) == 0
    assert main(["ingest", *args, "--out", str(tmp_path / "b")]) == 0
    for name in ("prices.csv", "sentiment.csv", "sectors.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_ingest_refuses_non_empty_out(demo_inputs, tmp_path):
    out = tmp_path / "b"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert main(["ingest", "--prices", str(demo_inputs / "prices.csv"), "--out", str(out)]) == 1
    assert main(["ingest", "--prices", str(demo_inputs / "prices.csv"), "--out", str(out),
                 "--force"]) == 0


def test_backtest_best_config(demo_inputs, demo_bundle_dir, tmp_path):
    out = tmp_path / "run"
    run_backtest_cli(demo_inputs / "config_best.json", demo_bundle_dir, out)
    metrics = json.loads((out / "metrics.json").read_text())
    assert set(metrics) == {"NRL", "SPY", "Gold", "Hedge", "MAD"}
    assert all(set(m) == {"annualized_return", "volatility", "sharpe", "sortino",
                          "max_drawdown", "calmar"} for m in metrics.values())
    trades = read_csv(out / "trades.csv")
    assert trades and set(trades[0]) == {"date", "decision", "allocation", "fee", "gate", "advisor"}
    for name in ("equity.csv", "benchmarks.csv", "config.json", "run.json", "advisor_log.jsonl"):
        assert (out / name).exists()


def test_backtest_byte_identical(demo_inputs, demo_bundle_dir, tmp_path):
    cfg = demo_inputs / "config_dynamic.json"
    run_backtest_cli(cfg, demo_bundle_dir, tmp_path / "a")
    run_backtest_cli(cfg, demo_bundle_dir, tmp_path / "b")
    for name in ("metrics.json", "trades.csv", "equity.csv", "advisor_log.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_objective_names_field(demo_bundle_dir, tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"objective": "volatility"}))
    assert main(["backtest", "--config", str(cfg), "--bundle", str(demo_bundle_dir),
                 "--out", str(tmp_path / "o")]) == 1
    assert "objective" in capsys.readouterr().err


def test_grid_resume_and_sort(demo_inputs, demo_bundle_dir, tmp_path, capsys):
    args = ["grid", "--config", str(demo_inputs / "grid.json"), "--bundle", str(demo_bundle_dir),
            "--out", str(tmp_path / "g"), "--sort-by", "sharpe"]
    assert main(args) == 0
    assert "4 configs, 0 already done" in capsys.readouterr().out
    rows = read_csv(tmp_path / "g" / "grid_results.csv")
    assert len(rows) == 4 and all(r["status"] == "ok" for r in rows)
    sharpe = [float(r["sharpe"]) for r in rows]
    assert sharpe == sorted(sharpe, reverse=True)

    # simulate an interruption: drop one stored result and rerun
    stored = sorted((tmp_path / "g" / "runs").glob("*.json"))
    stamps = {p.name: p.stat().st_mtime_ns for p in stored}
    stored[0].unlink()
    assert main(args) == 0
    assert "4 configs, 3 already done" in capsys.readouterr().out
    for p in stored[1:]:
        assert p.stat().st_mtime_ns == stamps[p.name]
    assert len(read_csv(tmp_path / "g" / "grid_results.csv")) == 4


def test_grid_parallel_matches_serial(demo_inputs, demo_bundle_dir, tmp_path):
    base = ["grid", "--config", str(demo_inputs / "grid.json"), "--bundle", str(demo_bundle_dir)]
    assert main([*base, "--out", str(tmp_path / "s")]) == 0
    assert main([*base, "--out", str(tmp_path / "p"), "--jobs", "2"]) == 0
    assert ((tmp_path / "s" / "grid_results.csv").read_bytes()
            == (tmp_path / "p" / "grid_results.csv").read_bytes())


def test_report_rows(demo_inputs, demo_bundle_dir, tmp_path):
    run_backtest_cli(demo_inputs / "config_best.json", demo_bundle_dir, tmp_path / "r1")
    assert main(["report", str(tmp_path / "r1"), "--out", str(tmp_path / "rep1")]) == 0
    rows = read_csv(tmp_path / "rep1" / "metrics.csv")
    assert [r["strategy"] for r in rows] == ["NRL", "SPY", "Gold", "Hedge", "MAD"]

    other = json.loads((demo_inputs / "config_best.json").read_text())
    other["objective"] = "sharpe"
    (tmp_path / "other.json").write_text(json.dumps(other))
    run_backtest_cli(tmp_path / "other.json", demo_bundle_dir, tmp_path / "r2")
    assert main(["report", str(tmp_path / "r1"), str(tmp_path / "r2"),
                 "--out", str(tmp_path / "rep2")]) == 0
    nrl = [r for r in read_csv(tmp_path / "rep2" / "metrics.csv") if r["strategy"] == "NRL"]
    assert len(nrl) == 2 and nrl[0]["config_hash"] != nrl[1]["config_hash"]
    header = read_csv(tmp_path / "rep2" / "equity_curves.csv")[0]
    assert len(header) == 1 + 2 * 5


def test_empty_args_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_config_round_trip(demo_inputs):
    cfg = load_config(demo_inputs / "config_dynamic.json")
    again = BacktestConfig.from_dict(json.loads(cfg.to_json()))
    assert again == cfg and again.digest() == cfg.digest()
    assert list(cfg.to_dict()) == list(CONFIG_KEYS)


def test_config_errors():
    with pytest.raises(ConfigError, match="wndow_k"):
        BacktestConfig.from_dict({"wndow_k": 3})
    with pytest.raises(ConfigError, match="fg_delta"):
        BacktestConfig.from_dict({"fg_delta": [1, 2]})
    with pytest.raises(ConfigError, match="hedging"):
        BacktestConfig.from_dict({"hedging": "yes"})
    with pytest.raises(ConfigError, match="initial_capital"):
        BacktestConfig.from_dict({"initial_capital": 0})
