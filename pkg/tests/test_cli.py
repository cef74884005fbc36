import json
import os

import pytest

from hemsim.cli import main
from hemsim.config import load_config
from hemsim.control import read_metrics_csv
from hemsim.domain import TrainConfig, paper_preset

from synthdata import micro_household, write_raw_csv, write_tx_csv

MICRO_INI = """\
[split]
pattern = train:4,eval:2,test:4
totals = train:12,eval:6,test:12

[train]
episodes = 3
episode_len_h = 12
batch_size = 16
buffer_size = 64
layer1 = 8
layer2 = 16
seed_count = 2
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """Raw micro data plus a full ingest-to-report pipeline run."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    data.mkdir()
    series = micro_household()
    write_raw_csv(data / "measurements.csv", [series])
    write_tx_csv(data / "transactions.csv", [series])
    config = root / "config.ini"
    config.write_text(MICRO_INI)
    out = root / "out"
    base = ["--config", str(config), "--out", str(out)]
    assert main(["ingest", "--data", str(data)] + base) == 0
    assert main(["split"] + base) == 0
    assert main(["simulate-rbpm"] + base) == 0
    assert main(["solve-mpc"] + base) == 0
    assert main(["train"] + base) == 0
    assert main(["evaluate"] + base) == 0
    assert main(["report"] + base) == 0
    return {"root": root, "data": data, "config": config, "out": out, "base": base}


def test_ingest_artifacts(workdir):
    hdir = workdir["out"] / "households" / "h1"
    assert (hdir / "series.csv").exists()
    assert (hdir / "transactions.csv").exists()
    spec = json.loads((hdir / "spec.json").read_text())
    # battery from defaults, EV capacity and PV peak inferred from the data
    assert spec["bess_capacity_kwh"] == 6.75
    assert spec["bess_power_kw"] == 3.3
    assert spec["ev_capacity_kwh"] == 10.0
    # inferred from winter measurements, so well below the panel rating
    assert 0.0 < spec["pv_peak_kw"] <= 4.0


def test_split_artifact(workdir):
    from datetime import datetime

    plan = json.loads((workdir["out"] / "households" / "h1" / "split.json").read_text())
    totals = {}
    for seg in plan:
        days = (
            datetime.fromisoformat(seg["end"]) - datetime.fromisoformat(seg["start"])
        ).days
        totals[seg["role"]] = totals.get(seg["role"], 0) + days
    assert totals == {"train": 12, "eval": 6, "test": 12}


def test_baseline_metrics(workdir):
    rdir = workdir["out"] / "runs" / "h1"
    rbpm = read_metrics_csv(rdir / "rbpm_test_metrics.csv")
    assert len(rbpm) == 1
    assert rbpm[0].policy == "rbpm" and rbpm[0].split == "test"
    assert (rdir / "rbpm_test_trace.csv").exists()
    mpc = read_metrics_csv(rdir / "mpc_test_metrics.csv")
    # hindsight optimum cannot lose to the rule-based baseline
    assert mpc[0].profit_per_day >= rbpm[0].profit_per_day - 1e-9
    # one schedule per test segment (12 test days in 4-day blocks)
    schedules = sorted(rdir.glob("mpc_test_schedule_*.csv"))
    assert len(schedules) == 3


def test_training_artifacts(workdir):
    rdir = workdir["out"] / "runs" / "h1"
    assert (rdir / "ddpg_seed0.npz").exists()
    assert (rdir / "ddpg_seed1.npz").exists()
    log = (rdir / "ddpg_train_log_seed0.csv").read_text().strip().splitlines()
    assert log[0] == "episode,mean_reward,critic_loss,actor_objective"
    assert len(log) == 4  # header + 3 episodes


def test_evaluate_artifacts(workdir):
    rdir = workdir["out"] / "runs" / "h1"
    rows = read_metrics_csv(rdir / "ddpg_metrics.csv")
    assert len(rows) == 4  # 2 seeds x (eval, test)
    assert {r.split for r in rows} == {"eval", "test"}
    assert {r.seed for r in rows} == {0, 1}
    best = json.loads((rdir / "best_seed.json").read_text())
    assert set(best) == {"best_seed", "eval_eur_day", "test_eur_day"}
    eval_rows = {r.seed: r.profit_per_day for r in rows if r.split == "eval"}
    assert best["eval_eur_day"] == max(eval_rows.values())


def test_report_table(workdir):
    lines = (workdir["out"] / "report.csv").read_text().strip().splitlines()
    assert lines[0] == (
        "household,rbpm_eur_day,mpc_eur_day,ddpg_mean_eur_day,ddpg_best_eur_day,"
        "potential_mean_pct,potential_best_pct,discomfort_best_pp"
    )
    assert len(lines) == 2
    cells = lines[1].split(",")
    assert cells[0] == "h1"
    assert float(cells[2]) >= float(cells[1])  # mpc >= rbpm
    for pct in cells[5:7]:
        if pct:
            int(pct)  # whole percentages


def test_trace_day_all_policies(workdir, capsys):
    base = workdir["base"]
    for policy in ("rbpm", "mpc"):
        assert main(["trace-day", "--household", "h1", "--date", "2021-01-03",
                     "--policy", policy] + base) == 0
    assert main(["trace-day", "--household", "h1", "--date", "2021-01-03",
                 "--policy", "ddpg", "--seed", "0"] + base) == 0
    # without --seed the best evaluated checkpoint is used
    assert main(["trace-day", "--household", "h1", "--date", "2021-01-03",
                 "--policy", "ddpg"] + base) == 0
    out = capsys.readouterr().out
    assert "avoided cost vs rbpm" in out
    rdir = workdir["out"] / "runs" / "h1"
    for policy in ("rbpm", "mpc", "ddpg"):
        trace = (rdir / f"trace_2021-01-03_{policy}.csv").read_text().strip().splitlines()
        assert len(trace) == 25  # header + 24 hours


def test_trace_day_outside_range_fails(workdir, capsys):
    assert main(["trace-day", "--household", "h1", "--date", "2022-06-01",
                 "--policy", "rbpm"] + workdir["base"]) == 1
    assert "error:" in capsys.readouterr().err


def test_synth_command(workdir):
    assert main(["synth", "--household", "h1"] + workdir["base"]) == 0
    hdir = workdir["out"] / "households" / "h1-synth"
    assert (hdir / "split.json").exists()
    tx_lines = (hdir / "transactions.csv").read_text().strip().splitlines()
    orig_lines = (
        workdir["out"] / "households" / "h1" / "transactions.csv"
    ).read_text().strip().splitlines()
    assert len(tx_lines) - 1 == 2 * (len(orig_lines) - 1)


def test_analyze_command(workdir):
    assert main(["analyze", "--data", str(workdir["data"])] + workdir["base"]) == 0
    adir = workdir["out"] / "analysis"
    stats = json.loads((adir / "filter_stats.json").read_text())
    assert stats["total"] == 15  # one charge every second day for 30 days
    assert stats["excluded_long"] == 0
    classification = json.loads((adir / "classification.json").read_text())
    # 06:00-12:00 charges all run into the surplus window
    assert classification["optimizable"] == 15
    assert classification["pct_optimizable"] == 100.0
    elbow = (adir / "elbow.csv").read_text().strip().splitlines()
    assert elbow[0] == "k,wcss,silhouette"
    clusters = (adir / "clusters.csv").read_text().strip().splitlines()
    assert len(clusters) == 2  # one household, one row
    assert (adir / "savings.csv").exists()
    annual = json.loads((adir / "annual.json").read_text())
    assert set(annual) == {"mean_annual_kwh", "mean_annual_eur", "mean_annual_co2_kg"}


def test_sweep_plans(tmp_path):
    out = tmp_path / "out"
    assert main(["sweep", "--sweep", "stage1", "--plan-only", "--out", str(out)]) == 0
    plan = (out / "sweeps" / "stage1" / "plan.csv").read_text().strip().splitlines()
    assert plan[0] == "config_id,changes,seed_count"
    assert len(plan) == 17
    assert plan[1].startswith("s01,batch_size=100,")
    assert main(["sweep", "--sweep", "grid", "--plan-only", "--out", str(out)]) == 0
    plan = (out / "sweeps" / "grid" / "plan.csv").read_text().strip().splitlines()
    assert len(plan) == 82
    assert plan[1].startswith("g01,")
    ids = {line.split(",")[0] for line in plan[1:]}
    assert len(ids) == 81


def test_pipeline_is_deterministic(workdir):
    """Same data, config and seeds twice: byte-identical metrics."""
    base_args = ["--config", str(workdir["config"])]
    outputs = []
    for name in ("detA", "detB"):
        out = workdir["root"] / name
        args = base_args + ["--out", str(out)]
        assert main(["ingest", "--data", str(workdir["data"])] + args) == 0
        assert main(["split"] + args) == 0
        assert main(["train"] + args) == 0
        assert main(["evaluate"] + args) == 0
        outputs.append((out / "runs" / "h1" / "ddpg_metrics.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_missing_prerequisites_exit_one(tmp_path, capsys):
    out = str(tmp_path / "empty")
    assert main(["split", "--out", out]) == 1
    assert "ingest" in capsys.readouterr().err
    assert main(["evaluate", "--out", out]) == 1
    capsys.readouterr()


def test_usage_errors_exit_two():
    with pytest.raises(SystemExit) as exc:
        main(["no-such-command"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


# --- config file parsing ----------------------------------------------------------


def test_load_config_defaults_and_sections(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(
        "[tariff]\nprice_buy = 0.50\nprice_sell = 0.10\n"
        "[spec]\nbess_capacity_kwh = 10.0\n"
        "[spec:h9]\nbess_power_kw = 5.0\n"
        "[train]\npreset = paper\nepisodes = 11\n"
        "[run]\nout = elsewhere\nbase_seed = 3\n"
    )
    cfg = load_config(path)
    assert cfg.tariff.price_buy_eur_per_kwh == 0.50
    assert cfg.tariff.price_sell_eur_per_kwh == 0.10
    assert cfg.spec_kwargs("h1") == {"bess_capacity_kwh": 10.0, "bess_power_kw": 3.3}
    assert cfg.spec_kwargs("h9") == {"bess_capacity_kwh": 10.0, "bess_power_kw": 5.0}
    # preset applies first, explicit keys override it
    assert cfg.train == TrainConfig(**{**paper_preset().__dict__, "episodes": 11})
    assert cfg.out_dir == "elsewhere"
    assert cfg.base_seed == 3


def test_load_config_rejects_unknown_keys(tmp_path):
    bad_spec = tmp_path / "a.ini"
    bad_spec.write_text("[spec]\nnot_a_field = 1\n")
    with pytest.raises(ValueError, match="unknown spec key"):
        load_config(bad_spec)
    bad_train = tmp_path / "b.ini"
    bad_train.write_text("[train]\nlearning_rate = 0.1\n")
    with pytest.raises(ValueError, match="unknown train key"):
        load_config(bad_train)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "nope.ini")


def test_hemsim_out_env_wins(tmp_path, monkeypatch):
    path = tmp_path / "exp.ini"
    path.write_text("[run]\nout = from_file\n")
    monkeypatch.setenv("HEMSIM_OUT", "from_env")
    assert load_config(path).out_dir == "from_env"
    monkeypatch.delenv("HEMSIM_OUT")
    assert load_config(path).out_dir == "from_file"
