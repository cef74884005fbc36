"""Command-line entry points.

Artifact layout under the output directory (--out beats HEMSIM_OUT beats
the [run] section of the config file):

    households/<id>/series.csv        hourly PV and demand energies
    households/<id>/transactions.csv  charging transactions
    households/<id>/spec.json         hardware ratings
    households/<id>/split.json        train/eval/test day plan
    runs/<id>/                        metrics, traces, checkpoints per policy
    analysis/                         cohort-level outputs
    sweeps/<name>/                    hyperparameter sweep plan and results
    report.csv                        benchmark summary table
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from datetime import date
from pathlib import Path

import numpy as np

from . import analysis, dataio
from .config import ExperimentConfig, load_config
from .control import (
    MetricsRow,
    avoided_cost_eur,
    potential_realized,
    read_metrics_csv,
    rbpm_policy,
    rollout,
    rollout_segments,
    write_metrics_csv,
)
from .ddpg import (
    SeedResult,
    evaluate,
    load_checkpoint,
    reward_weights,
    save_checkpoint,
    select_best_by_eval,
    train,
    write_train_log,
)
from .domain import TARIFF_PRESETS, HouseholdSeries, TrainConfig, validate_household
from .env import build_frames, write_trace_csv
from .mpc import build_lp, mpc_profit, replay_schedule, solve_lp, write_schedule_csv

REPORT_HEADER = (
    "household,rbpm_eur_day,mpc_eur_day,ddpg_mean_eur_day,ddpg_best_eur_day,"
    "potential_mean_pct,potential_best_pct,discomfort_best_pp"
)
SWEEP_PLAN_HEADER = "config_id,changes,seed_count"
SWEEP_RESULT_HEADER = "phase,config_id,household,seed,eval_eur_day,test_eur_day"


# --- shared plumbing ------------------------------------------------------------


def _config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(getattr(args, "config", None), preset=getattr(args, "preset", None))
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "tariff", None):
        cfg.tariff = TARIFF_PRESETS[args.tariff]
    if getattr(args, "seeds", None):
        cfg.train = replace(cfg.train, seed_count=args.seeds)
    if getattr(args, "seed", None) is not None:
        cfg.base_seed = args.seed
    return cfg


def _household_dir(cfg: ExperimentConfig, household_id: str) -> Path:
    return Path(cfg.out_dir) / "households" / household_id


def _runs_dir(cfg: ExperimentConfig, household_id: str) -> Path:
    path = Path(cfg.out_dir) / "runs" / household_id
    path.mkdir(parents=True, exist_ok=True)
    return path


def _list_households(cfg: ExperimentConfig, only: str | None = None) -> list[str]:
    root = Path(cfg.out_dir) / "households"
    if not root.is_dir():
        raise FileNotFoundError(f"no households under {root}; run `hemsim ingest` first")
    ids = sorted(p.name for p in root.iterdir() if p.is_dir())
    if only is not None:
        if only not in ids:
            raise FileNotFoundError(f"household {only} not found under {root}")
        ids = [only]
    if not ids:
        raise FileNotFoundError(f"no households under {root}")
    return ids


def _write_household(cfg: ExperimentConfig, series: HouseholdSeries) -> Path:
    hdir = _household_dir(cfg, series.household_id)
    hdir.mkdir(parents=True, exist_ok=True)
    dataio.write_series_csv(hdir / "series.csv", series)
    dataio.write_transactions_csv(
        hdir / "transactions.csv", series.household_id, series.transactions
    )
    (hdir / "spec.json").write_text(dataio.spec_to_json(series.spec))
    return hdir


def _load_household(cfg: ExperimentConfig, household_id: str) -> HouseholdSeries:
    hdir = _household_dir(cfg, household_id)
    spec = dataio.spec_from_json((hdir / "spec.json").read_text())
    by_household = dataio.read_transactions_csv(hdir / "transactions.csv")
    txs = by_household.get(household_id, [])
    return dataio.read_series_csv(hdir / "series.csv", household_id, txs, spec)


def _load_plan(cfg: ExperimentConfig, household_id: str) -> dataio.SplitPlan:
    path = _household_dir(cfg, household_id) / "split.json"
    if not path.exists():
        raise FileNotFoundError(f"{path} missing; run `hemsim split` first")
    return dataio.plan_from_json(path.read_text())


def _role_segments(plan: dataio.SplitPlan, role: str) -> list[tuple[int, int]]:
    segments = [seg.step_range() for seg in plan.by_role(role)]
    if not segments:
        raise ValueError(f"split has no '{role}' days")
    return segments


# --- subcommands ----------------------------------------------------------------


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    data_dir = Path(args.data)
    rows_by_household = dataio.ingest(data_dir / cfg.measurements_file)
    tx_path = data_dir / cfg.transactions_file
    labeled = dataio.read_transactions_csv(tx_path) if tx_path.exists() else {}
    for household_id in sorted(rows_by_household):
        rows = rows_by_household[household_id]
        channels = dataio.fill_gaps(dataio.resample_hourly(rows))
        txs = labeled.get(household_id) or dataio.derive_transactions(rows)
        kwargs = cfg.spec_kwargs(household_id)
        kwargs.setdefault("pv_peak_kw", dataio.infer_pv_peak(rows))
        series = dataio.build_series(household_id, channels, txs, **kwargs)
        problems = validate_household(series)
        if problems:
            raise ValueError(f"{household_id}: " + "; ".join(problems))
        _write_household(cfg, series)
        print(
            f"{household_id}: {series.n_steps // 24} days, "
            f"{len(series.transactions)} transactions"
        )
    return 0


def cmd_split(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    for household_id in _list_households(cfg, args.household):
        series = _load_household(cfg, household_id)
        plan = dataio.split(series, cfg.split)
        path = _household_dir(cfg, household_id) / "split.json"
        path.write_text(dataio.plan_to_json(plan))
        totals = plan.day_totals()
        print(f"{household_id}: " + ", ".join(f"{k}={v}d" for k, v in sorted(totals.items())))
    return 0


def cmd_simulate_rbpm(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    weights = reward_weights(cfg.train)
    for household_id in _list_households(cfg, args.household):
        series = _load_household(cfg, household_id)
        plan = _load_plan(cfg, household_id)
        segments = _role_segments(plan, args.role)
        result = rollout_segments(
            series, segments, rbpm_policy(series.spec), cfg.tariff, weights
        )
        rdir = _runs_dir(cfg, household_id)
        write_metrics_csv(
            rdir / f"rbpm_{args.role}_metrics.csv",
            [
                MetricsRow(
                    household=household_id,
                    policy="rbpm",
                    seed=None,
                    split=args.role,
                    profit_per_day=result.profit_per_day,
                    discomfort=result.discomfort_score,
                    potential_realized=None,
                )
            ],
        )
        write_trace_csv(
            rdir / f"rbpm_{args.role}_trace.csv", result.frames, result.outcomes, result.states
        )
        print(f"{household_id} rbpm {args.role}: {result.profit_per_day:+.2f} EUR/day")
    return 0


def cmd_solve_mpc(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    for household_id in _list_households(cfg, args.household):
        series = _load_household(cfg, household_id)
        plan = _load_plan(cfg, household_id)
        segments = _role_segments(plan, args.role)
        result = mpc_profit(series, segments, cfg.tariff)
        cap = series.spec.ev_capacity_kwh
        shortfalls = [
            100.0 * float(s) / cap for sched in result.schedules for s in sched.slack
        ]
        rdir = _runs_dir(cfg, household_id)
        write_metrics_csv(
            rdir / f"mpc_{args.role}_metrics.csv",
            [
                MetricsRow(
                    household=household_id,
                    policy="mpc",
                    seed=None,
                    split=args.role,
                    profit_per_day=result.profit_per_day,
                    discomfort=(
                        sum(shortfalls) / len(shortfalls) if shortfalls else None
                    ),
                    potential_realized=None,
                )
            ],
        )
        frames_all = build_frames(series)
        for k, ((seg_start, seg_end), sched) in enumerate(zip(segments, result.schedules)):
            write_schedule_csv(
                rdir / f"mpc_{args.role}_schedule_{k}.csv",
                frames_all[seg_start:seg_end],
                sched,
            )
        print(f"{household_id} mpc {args.role}: {result.profit_per_day:+.2f} EUR/day")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    for household_id in _list_households(cfg, args.household):
        series = _load_household(cfg, household_id)
        plan = _load_plan(cfg, household_id)
        rdir = _runs_dir(cfg, household_id)
        for i in range(cfg.train.seed_count):
            seed = cfg.base_seed + i
            trained = train(series, plan, cfg.train, seed, cfg.tariff)
            save_checkpoint(rdir / f"ddpg_seed{seed}.npz", trained.agent)
            write_train_log(rdir / f"ddpg_train_log_seed{seed}.csv", trained.log_rows)
            final = trained.log_rows[-1]
            print(
                f"{household_id} seed {seed}: trained {cfg.train.episodes} episodes, "
                f"final mean reward {final[1]:+.4f}"
            )
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    for household_id in _list_households(cfg, args.household):
        series = _load_household(cfg, household_id)
        plan = _load_plan(cfg, household_id)
        rdir = _runs_dir(cfg, household_id)
        checkpoints = sorted(
            rdir.glob("ddpg_seed*.npz"), key=lambda p: int(p.stem.removeprefix("ddpg_seed"))
        )
        if not checkpoints:
            raise FileNotFoundError(f"no checkpoints under {rdir}; run `hemsim train` first")
        rows: list[MetricsRow] = []
        results: list[SeedResult] = []
        for path in checkpoints:
            seed = int(path.stem.removeprefix("ddpg_seed"))
            agent = load_checkpoint(path)
            eval_run = evaluate(agent, series, plan, "eval", cfg.tariff)
            test_run = evaluate(agent, series, plan, "test", cfg.tariff)
            results.append(
                SeedResult(
                    seed=seed,
                    eval_profit_per_day=eval_run.profit_per_day,
                    test_profit_per_day=test_run.profit_per_day,
                    eval_discomfort=eval_run.discomfort_score,
                    test_discomfort=test_run.discomfort_score,
                )
            )
            for split_name, run in (("eval", eval_run), ("test", test_run)):
                rows.append(
                    MetricsRow(
                        household=household_id,
                        policy="ddpg",
                        seed=seed,
                        split=split_name,
                        profit_per_day=run.profit_per_day,
                        discomfort=run.discomfort_score,
                        potential_realized=None,
                    )
                )
        best = results[select_best_by_eval(results)]
        write_metrics_csv(rdir / "ddpg_metrics.csv", rows)
        (rdir / "best_seed.json").write_text(
            json.dumps(
                {
                    "best_seed": best.seed,
                    "eval_eur_day": best.eval_profit_per_day,
                    "test_eur_day": best.test_profit_per_day,
                },
                indent=2,
                sort_keys=True,
            )
        )
        print(
            f"{household_id} ddpg: {len(results)} seeds, best seed {best.seed} "
            f"(test {best.test_profit_per_day:+.2f} EUR/day)"
        )
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    out_rows: list[list[object]] = []
    for household_id in _list_households(cfg, args.household):
        rdir = Path(cfg.out_dir) / "runs" / household_id
        rbpm_rows = read_metrics_csv(rdir / "rbpm_test_metrics.csv")
        mpc_rows = read_metrics_csv(rdir / "mpc_test_metrics.csv")
        ddpg_rows = read_metrics_csv(rdir / "ddpg_metrics.csv")
        rbpm = rbpm_rows[0].profit_per_day
        mpc = mpc_rows[0].profit_per_day
        test_rows = [r for r in ddpg_rows if r.split == "test"]
        eval_rows = {r.seed: r for r in ddpg_rows if r.split == "eval"}
        if not test_rows:
            raise ValueError(f"{household_id}: no ddpg test metrics")
        mean_test = sum(r.profit_per_day for r in test_rows) / len(test_rows)
        best_seed = max(test_rows, key=lambda r: eval_rows[r.seed].profit_per_day).seed
        best_row = next(r for r in test_rows if r.seed == best_seed)
        pot_mean = potential_realized(mean_test, rbpm, mpc)
        pot_best = potential_realized(best_row.profit_per_day, rbpm, mpc)
        out_rows.append(
            [
                household_id,
                f"{rbpm:.2f}",
                f"{mpc:.2f}",
                f"{mean_test:.2f}",
                f"{best_row.profit_per_day:.2f}",
                "" if pot_mean.zero_potential else str(round(100.0 * pot_mean.fraction)),
                "" if pot_best.zero_potential else str(round(100.0 * pot_best.fraction)),
                "" if best_row.discomfort is None else f"{best_row.discomfort:.2f}",
            ]
        )
    report_path = Path(cfg.out_dir) / "report.csv"
    with open(report_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER.split(","))
        writer.writerows(out_rows)
    for row in out_rows:
        print(",".join(str(c) for c in row))
    print(f"wrote {report_path}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    data_dir = Path(args.data)
    adir = Path(cfg.out_dir) / "analysis"
    adir.mkdir(parents=True, exist_ok=True)
    rows_by_household = dataio.ingest(data_dir / cfg.measurements_file)
    tx_path = data_dir / cfg.transactions_file
    labeled = dataio.read_transactions_csv(tx_path) if tx_path.exists() else {}

    channels_by_household = {}
    kept_by_household = {}
    all_stats_total = 0
    all_long = 0
    all_short = 0
    for household_id in sorted(rows_by_household):
        rows = rows_by_household[household_id]
        channels_by_household[household_id] = dataio.fill_gaps(dataio.resample_hourly(rows))
        txs = labeled.get(household_id) or dataio.derive_transactions(rows)
        kept, stats = analysis.filter_transactions(txs)
        kept_by_household[household_id] = kept
        all_stats_total += stats.total
        all_long += stats.excluded_long
        all_short += stats.excluded_short

    (adir / "filter_stats.json").write_text(
        json.dumps(
            {
                "total": all_stats_total,
                "excluded_long": all_long,
                "excluded_short": all_short,
                "pct_long": round(100.0 * all_long / all_stats_total, 2) if all_stats_total else 0.0,
                "pct_short": round(100.0 * all_short / all_stats_total, 2) if all_stats_total else 0.0,
            },
            indent=2,
            sort_keys=True,
        )
    )

    profiles = analysis.build_profiles(kept_by_household)
    rng = np.random.default_rng(cfg.base_seed)
    k_max = min(args.k_max, max(1, len(profiles) - 1))
    points = analysis.elbow_sweep(profiles, k_max, args.restarts, rng)
    with open(adir / "elbow.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "wcss", "silhouette"])
        for p in points:
            writer.writerow([p.k, repr(p.wcss), "" if p.silhouette is None else repr(p.silhouette)])
    k = analysis.pick_k(points) if len(profiles) > 2 else 1
    result = analysis.kmeans(profiles, k, args.restarts, rng)
    analysis.write_cluster_csv(adir / "clusters.csv", profiles, result)

    n_opt = 0
    n_not = 0
    for kept in kept_by_household.values():
        for tx in kept:
            if analysis.classify_optimizable(tx):
                n_opt += 1
            else:
                n_not += 1
    (adir / "classification.json").write_text(
        json.dumps(
            {
                "optimizable": n_opt,
                "not_optimizable": n_not,
                "pct_optimizable": round(100.0 * n_opt / (n_opt + n_not), 2)
                if n_opt + n_not
                else 0.0,
            },
            indent=2,
            sort_keys=True,
        )
    )

    entries = []
    for household_id, kept in kept_by_household.items():
        entries.extend(
            analysis.household_monthly_savings(
                household_id, channels_by_household[household_id], kept
            )
        )
    report_rows = analysis.monthly_report(entries)
    analysis.write_savings_csv(adir / "savings.csv", report_rows)

    annual_by_household = {}
    for entry in entries:
        annual_by_household.setdefault(entry.household_id, 0.0)
        annual_by_household[entry.household_id] += entry.savings_kwh
    mean_annual = (
        sum(annual_by_household.values()) / len(annual_by_household)
        if annual_by_household
        else 0.0
    )
    eur, co2 = analysis.annualize_savings(mean_annual, cfg.tariff.price_buy_eur_per_kwh)
    (adir / "annual.json").write_text(
        json.dumps(
            {
                "mean_annual_kwh": round(mean_annual, 3),
                "mean_annual_eur": round(eur, 2),
                "mean_annual_co2_kg": round(co2, 2),
            },
            indent=2,
            sort_keys=True,
        )
    )
    print(
        f"{len(profiles)} households, {all_stats_total} transactions "
        f"({n_opt} optimizable), k={k}, mean annual savings {mean_annual:.1f} kWh"
    )
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    series = _load_household(cfg, args.household)
    synth = analysis.synthesize(series)
    _write_household(cfg, synth)
    plan = dataio.split(synth, cfg.split)
    (_household_dir(cfg, synth.household_id) / "split.json").write_text(
        dataio.plan_to_json(plan)
    )
    print(
        f"{synth.household_id}: {len(synth.transactions)} transactions "
        f"(from {len(series.transactions)}), pv x1.5, "
        f"bess {synth.spec.bess_capacity_kwh} kWh / {synth.spec.bess_power_kw} kW"
    )
    return 0


def cmd_trace_day(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    series = _load_household(cfg, args.household)
    day_date = date.fromisoformat(args.date)
    day0 = series.start.date()
    day = (day_date - day0).days
    n_days = series.n_steps // 24
    if not 0 <= day < n_days:
        raise ValueError(f"{args.date} outside the measured range")
    frames = build_frames(series)[: (day + 1) * 24]
    weights = reward_weights(cfg.train)
    spec = series.spec

    rbpm_run = rollout(frames, rbpm_policy(spec), spec, cfg.tariff, weights)
    if args.policy == "rbpm":
        run = rbpm_run
    elif args.policy == "mpc":
        schedule = solve_lp(build_lp(frames, spec, cfg.tariff))
        run = replay_schedule(schedule, frames, spec, cfg.tariff, weights)
    else:
        rdir = _runs_dir(cfg, args.household)
        if args.seed is not None:
            path = rdir / f"ddpg_seed{args.seed}.npz"
        else:
            best_path = rdir / "best_seed.json"
            if not best_path.exists():
                raise FileNotFoundError(
                    f"{best_path} missing; run `hemsim evaluate` or pass --seed"
                )
            best = json.loads(best_path.read_text())
            path = rdir / f"ddpg_seed{best['best_seed']}.npz"
        agent = load_checkpoint(path)
        run = rollout(frames, agent.policy(spec), spec, cfg.tariff, weights)

    lo, hi = day * 24, (day + 1) * 24
    rdir = _runs_dir(cfg, args.household)
    trace_path = rdir / f"trace_{args.date}_{args.policy}.csv"
    write_trace_csv(trace_path, run.frames[lo:hi], run.outcomes[lo:hi], run.states[lo:hi])

    def day_purchase(r) -> float:
        return sum(
            oc.flows.grid_purchase_kwh + oc.flows.external_ev_kwh for oc in r.outcomes[lo:hi]
        )

    def day_feedin(r) -> float:
        return sum(oc.flows.grid_feedin_kwh for oc in r.outcomes[lo:hi])

    purchase = day_purchase(run)
    reference = day_purchase(rbpm_run)
    print(
        f"{args.household} {args.date} {args.policy}: "
        f"purchase {purchase:.2f} kWh, feed-in {day_feedin(run):.2f} kWh"
    )
    if args.policy != "rbpm":
        shifted = max(0.0, reference - purchase)
        print(f"rbpm reference purchase: {reference:.2f} kWh")
        print(
            f"avoided cost vs rbpm: {avoided_cost_eur(shifted, cfg.tariff):.2f} EUR "
            f"({shifted:.2f} kWh shifted)"
        )
    print(f"wrote {trace_path}")
    return 0


# --- hyperparameter sweeps --------------------------------------------------------


def sweep_plan(name: str, base: TrainConfig) -> list[tuple[str, dict[str, object]]]:
    """Named sweep matrices: one-at-a-time stage or a full grid."""
    if name == "stage1":
        alternatives: list[dict[str, object]] = [
            {"batch_size": 100},
            {"batch_size": 150},
            {"buffer_size": 20000},
            {"buffer_size": 30000},
            {"lr_actor": 5e-4, "lr_critic": 5e-3},
            {"lr_actor": 5e-5, "lr_critic": 5e-4},
            {"noise_scale": 0.2},
            {"noise_kind": "ou"},
            {"soft_update_tau": 0.005},
            {"soft_update_tau": 0.0005},
            {"discomfort_weight": 0.04},
            {"discomfort_kind": "linear"},
            {"layer1": 200, "layer2": 400},
            {"layer1": 400, "layer2": 800},
            {"penalty_weight": 0.0},
            {"penalty_weight": 1.0},
        ]
        return [(f"s{i + 1:02d}", changes) for i, changes in enumerate(alternatives)]
    if name == "grid":
        entries = []
        i = 0
        for batch in (120, 100, 150):
            for lr_a, lr_c in ((1e-4, 1e-3), (5e-4, 5e-3), (5e-5, 5e-4)):
                for noise in (0.1, 0.2, 0.4):
                    for l1, l2 in ((300, 600), (200, 400), (250, 500)):
                        i += 1
                        entries.append(
                            (
                                f"g{i:02d}",
                                {
                                    "batch_size": batch,
                                    "lr_actor": lr_a,
                                    "lr_critic": lr_c,
                                    "noise_scale": noise,
                                    "layer1": l1,
                                    "layer2": l2,
                                },
                            )
                        )
        return entries
    raise ValueError(f"unknown sweep '{name}'; choose stage1 or grid")


def _changes_str(changes: dict[str, object]) -> str:
    return ";".join(f"{k}={changes[k]}" for k in sorted(changes))


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    entries = sweep_plan(args.sweep, cfg.train)
    sdir = Path(cfg.out_dir) / "sweeps" / args.sweep
    sdir.mkdir(parents=True, exist_ok=True)
    seeds = args.seeds or (10 if args.sweep == "grid" else cfg.train.seed_count)
    with open(sdir / "plan.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_PLAN_HEADER.split(","))
        for config_id, changes in entries:
            writer.writerow([config_id, _changes_str(changes), seeds])
    print(f"{args.sweep}: {len(entries)} configurations, {seeds} seeds each")
    if args.plan_only:
        return 0

    households = _list_households(cfg, args.household)
    result_rows: list[list[object]] = []
    mean_eval: dict[str, list[float]] = {}
    for config_id, changes in entries:
        config = replace(cfg.train, **changes, seed_count=seeds)
        for household_id in households:
            series = _load_household(cfg, household_id)
            plan = _load_plan(cfg, household_id)
            for i in range(seeds):
                seed = cfg.base_seed + i
                trained = train(series, plan, config, seed, cfg.tariff)
                eval_run = evaluate(trained.agent, series, plan, "eval", cfg.tariff)
                test_run = evaluate(trained.agent, series, plan, "test", cfg.tariff)
                result_rows.append(
                    [
                        1,
                        config_id,
                        household_id,
                        seed,
                        repr(eval_run.profit_per_day),
                        repr(test_run.profit_per_day),
                    ]
                )
                mean_eval.setdefault(config_id, []).append(eval_run.profit_per_day)
        print(f"{config_id}: mean eval {np.mean(mean_eval[config_id]):+.3f} EUR/day")

    if args.sweep == "grid":
        ranked = sorted(mean_eval, key=lambda c: -float(np.mean(mean_eval[c])))
        finalists = ranked[: args.top]
        full_seeds = args.full_seeds
        by_id = dict(entries)
        for config_id in finalists:
            config = replace(cfg.train, **by_id[config_id], seed_count=full_seeds)
            for household_id in households:
                series = _load_household(cfg, household_id)
                plan = _load_plan(cfg, household_id)
                for i in range(full_seeds):
                    seed = cfg.base_seed + i
                    trained = train(series, plan, config, seed, cfg.tariff)
                    eval_run = evaluate(trained.agent, series, plan, "eval", cfg.tariff)
                    test_run = evaluate(trained.agent, series, plan, "test", cfg.tariff)
                    result_rows.append(
                        [
                            2,
                            config_id,
                            household_id,
                            seed,
                            repr(eval_run.profit_per_day),
                            repr(test_run.profit_per_day),
                        ]
                    )
            print(f"{config_id}: finalist re-run at {full_seeds} seeds")

    with open(sdir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_RESULT_HEADER.split(","))
        writer.writerows(result_rows)
    print(f"wrote {sdir / 'results.csv'} ({len(result_rows)} rows)")
    return 0


# --- argument parsing -------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, *, data: bool = False) -> None:
    if data:
        p.add_argument("--data", required=True, help="directory with raw measurement CSVs")
    p.add_argument("--config", help="INI experiment config")
    p.add_argument("--out", help="output directory (default: out, or HEMSIM_OUT)")
    p.add_argument("--tariff", choices=sorted(TARIFF_PRESETS), help="price preset override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hemsim",
        description="Simulate and optimize a PV-battery-EV household under fixed prices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="raw 15-minute CSVs to per-household artifacts")
    _add_common(p, data=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("split", help="assign whole days to train/eval/test")
    _add_common(p)
    p.add_argument("--household", help="only this household")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("simulate-rbpm", help="run the rule-based baseline")
    _add_common(p)
    p.add_argument("--household", help="only this household")
    p.add_argument("--role", default="test", help="split role to simulate (default test)")
    p.set_defaults(func=cmd_simulate_rbpm)

    p = sub.add_parser("solve-mpc", help="solve the hindsight linear program")
    _add_common(p)
    p.add_argument("--household", help="only this household")
    p.add_argument("--role", default="test", help="split role to solve (default test)")
    p.set_defaults(func=cmd_solve_mpc)

    p = sub.add_parser("train", help="train DDPG agents")
    _add_common(p)
    p.add_argument("--household", help="only this household")
    p.add_argument("--preset", choices=["paper", "tuned"], help="hyperparameter preset")
    p.add_argument("--seed", type=int, help="base seed (default from config)")
    p.add_argument("--seeds", type=int, help="number of seeds (default from config)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate trained checkpoints on eval and test days")
    _add_common(p)
    p.add_argument("--household", help="only this household")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarize rbpm/mpc/ddpg into report.csv")
    _add_common(p)
    p.add_argument("--household", help="only this household")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("analyze", help="charging-behavior analytics from raw data")
    _add_common(p, data=True)
    p.add_argument("--k-max", type=int, default=6, help="largest cluster count to sweep")
    p.add_argument("--restarts", type=int, default=10, help="clustering restarts")
    p.add_argument("--seed", type=int, help="clustering seed (default from config)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synth", help="derive a high-potential synthetic household")
    _add_common(p)
    p.add_argument("--household", required=True, help="base household")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="hyperparameter sweeps")
    _add_common(p)
    p.add_argument("--sweep", required=True, choices=["stage1", "grid"], help="sweep matrix")
    p.add_argument("--household", help="only this household")
    p.add_argument("--plan-only", action="store_true", help="write the plan, do not train")
    p.add_argument("--seed", type=int, help="base seed")
    p.add_argument("--seeds", type=int, help="seeds per configuration")
    p.add_argument("--full-seeds", type=int, default=40, help="seeds for grid finalists")
    p.add_argument("--top", type=int, default=4, help="grid finalist count")
    p.add_argument("--preset", choices=["paper", "tuned"], help="base hyperparameters")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("trace-day", help="hourly flow trace of one policy on one day")
    _add_common(p)
    p.add_argument("--household", required=True)
    p.add_argument("--date", required=True, help="calendar day, YYYY-MM-DD")
    p.add_argument("--policy", required=True, choices=["rbpm", "mpc", "ddpg"])
    p.add_argument("--seed", type=int, help="checkpoint seed (default: best by eval)")
    p.set_defaults(func=cmd_trace_day)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
