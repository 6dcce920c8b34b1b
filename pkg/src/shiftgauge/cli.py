"""``shiftgauge`` command line.

Every subcommand reads one config file, runs once per seed and writes
``{task}_{method}_{seed}.csv`` files plus checkpoints and a manifest under the
output directory. Only ``eval`` touches hidden target labels.

Exit codes: 0 success, 1 input or config error, 2 runtime or training error.
"""
from __future__ import annotations

import argparse
import math
import sys
import time
from collections import defaultdict
from pathlib import Path
from typing import Callable

from .baselines import ben_david_estimate, conf_score_estimate, pearson, score_methods
from .config import ExperimentConfig, load_config
from .data import save_csv
from .errors import (ConfigError, FormatError, InputError, MetricError, ShapeError,
                     ShiftGaugeError)
from .hypothesis import load_checkpoint, save_checkpoint, zero_one_risk
from .plots import emit_plot
from .proxy import (compute_proxy_risk, detect_errors, early_stopping_trace, score_error_detection,
                    select_division)
from .reports import (EARLYSTOP_COLUMNS, METHODS_COLUMNS, SWEEP_COLUMNS, RiskReport, methods_rows,
                      read_csv, read_methods_report, read_risk_reports, write_csv, write_manifest,
                      write_risk_reports)
from .suite import build_pair, has_hidden_labels, task_name, train_candidate
from .trainer import train_dir

PROXY_TRACE_COLUMNS = ["restart", "multiplier", "epoch", "disagreement", "objective", "feasible"]
DETECT_COLUMNS = ["index", "flagged"]
SCORE_COLUMNS = ["precision", "recall", "f1", "tp", "fp", "fn", "tn"]
ESTIMATE_METHODS = ("proxy", "ben_david", "conf_score")


class Run:
    """Output bookkeeping for one subcommand invocation."""

    def __init__(self, cfg: ExperimentConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.task = task_name(cfg)
        self.out = Path(cfg.output.directory)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[Path] = []
        self.timings: dict[str, float] = {}

    def path(self, method: str, seed, ext: str = "csv") -> Path:
        return self.out / f"{self.task}_{method}_{seed}.{ext}"

    def csv(self, method: str, seed, columns, rows) -> Path:
        p = write_csv(self.path(method, seed), columns, rows)
        self.outputs.append(p)
        return p

    def checkpoint(self, h, method: str, seed) -> Path:
        p = self.path(method, seed, "ckpt")
        save_checkpoint(h, p)
        self.outputs.append(p)
        return p

    def plot(self, series, kind: str, method: str, seed, title: str = "") -> None:
        if self.cfg.output.emit_plots:
            self.outputs.append(emit_plot(series, kind, self.path(method, seed, "svg"), title))

    @property
    def seed_tag(self) -> str:
        return "-".join(str(s) for s in self.cfg.model.seeds)

    def manifest(self, argv) -> Path:
        return write_manifest(self.out / f"manifest_{self.command}_{self.seed_tag}.json",
                              self.command, self.cfg.text, self.cfg.model.seeds, self.outputs,
                              self.timings, argv)


def _nan_blank(v):
    return None if isinstance(v, float) and math.isnan(v) else v


# ---------------------------------------------------------------- subcommands

def cmd_gen_data(run: Run, seed: int) -> None:
    pair = build_pair(run.cfg, seed)
    for method, data in (("source", pair.source), ("target", pair.target_unlabeled)):
        p = run.path(method, seed)
        save_csv(data, p)
        run.outputs.append(p)


def _candidate(run: Run, seed: int):
    pair = build_pair(run.cfg, seed)
    h, trace = train_candidate(run.cfg, pair, seed)
    run.checkpoint(h, run.cfg.model.candidate, seed)
    return pair, h, trace


def cmd_train(run: Run, seed: int) -> None:
    _, _, trace = _candidate(run, seed)
    method = run.cfg.model.candidate
    p = run.path(method, seed)
    p.write_text(trace.to_csv())
    run.outputs.append(p)
    rows = trace.rows()
    run.plot({"x": [r[0] for r in rows], "curves": {"source train": [r[1] for r in rows],
                                                   "source val": [r[2] for r in rows]}},
             "risk_curve", method, seed, f"{run.task} training")


def _report(run: Run, method: str, seed: int, value: float, t0: float) -> None:
    r = RiskReport(run.task, method, value, seed, wall_time_s=time.perf_counter() - t0)
    run.timings[f"{method}/{seed}"] = r.wall_time_s
    p = write_risk_reports(run.path(method, seed), [r])
    run.outputs.append(p)


def cmd_proxy_risk(run: Run, seed: int) -> None:
    t0 = time.perf_counter()
    pair, h, _ = _candidate(run, seed)
    res = compute_proxy_risk(h, run.cfg.check_spec(pair.source.dim), pair.source,
                             pair.target_unlabeled, run.cfg.train.with_seed(seed))
    _report(run, "proxy", seed, res.max_risk, t0)
    run.csv("proxy-trace", seed, PROXY_TRACE_COLUMNS,
            [[e.restart, e.multiplier, e.epoch, e.disagreement, _nan_blank(e.objective), e.feasible]
             for e in res.trace])
    if res.best_check_model is not None:
        run.checkpoint(res.best_check_model, "check", seed)


def cmd_bd_bound(run: Run, seed: int) -> None:
    t0 = time.perf_counter()
    pair, h, _ = _candidate(run, seed)
    est = ben_david_estimate(h, run.cfg.proxy.bd_class, pair.source, pair.target_unlabeled,
                             run.cfg.train.with_seed(seed), run.cfg.check_spec(pair.source.dim))
    _report(run, est.method, seed, est.predicted_risk, t0)


def cmd_conf_score(run: Run, seed: int) -> None:
    t0 = time.perf_counter()
    pair, h, _ = _candidate(run, seed)
    est = conf_score_estimate(h, pair.source, pair.target_unlabeled, run.cfg.train.with_seed(seed))
    _report(run, est.method, seed, est.predicted_risk, t0)


def cmd_early_stop(run: Run, seed: int) -> None:
    pair = build_pair(run.cfg, seed)
    every = run.cfg.proxy.checkpoint_every
    checkpoints = []
    train_candidate(run.cfg, pair, seed,
                    callback=lambda e, h: checkpoints.append((e, h.copy())) if e % every == 0 else None)
    if not checkpoints:
        raise ConfigError(f"proxy.checkpoint_every={every} exceeds train.epochs_t1; no checkpoints")
    for e, h in checkpoints:
        run.checkpoint(h, f"epoch{e}", seed)
    rows = early_stopping_trace(checkpoints, run.cfg.check_spec(pair.source.dim), pair.source,
                                pair.target_unlabeled, run.cfg.train.with_seed(seed))
    run.csv("earlystop", seed, EARLYSTOP_COLUMNS,
            [[r.epoch, r.src_risk, r.proxy_risk, None] for r in rows])
    run.plot({"x": [r.epoch for r in rows], "curves": {"source": [r.src_risk for r in rows],
                                                      "proxy": [r.proxy_risk for r in rows]}},
             "risk_curve", "earlystop", seed, f"{run.task} early stopping")


def cmd_detect_errors(run: Run, seed: int) -> None:
    pair, h, _ = _candidate(run, seed)
    res = compute_proxy_risk(h, run.cfg.check_spec(pair.source.dim), pair.source,
                             pair.target_unlabeled, run.cfg.train.with_seed(seed))
    flags = detect_errors(h, res, pair.target_unlabeled.features)
    run.csv("detect", seed, DETECT_COLUMNS, [[i, bool(f)] for i, f in enumerate(flags)])
    run.checkpoint(res.best_check_model, "check", seed)


def cmd_sweep_division(run: Run, seeds) -> None:
    cfg = run.cfg
    pairs = {s: build_pair(cfg, s) for s in seeds}
    dim = pairs[seeds[0]].source.dim
    base = cfg.model_spec(dim)
    seconds = list(cfg.proxy.second_level_divisions) or None
    t0 = time.perf_counter()
    sel = select_division(base, cfg.candidate_divisions, seconds, None, None, cfg.train, seeds,
                          data=lambda s: (pairs[s].source, pairs[s].target_unlabeled))
    run.timings["sweep"] = time.perf_counter() - t0
    for s in seeds:
        rows = [[r.division_index, r.second_level_division, r.seed, r.worst_in_class_proxy_risk, None]
                for r in sel.table if r.seed == s]
        run.csv("division_sweep", s, SWEEP_COLUMNS, rows)
        for i in cfg.candidate_divisions:
            h, _ = train_dir(base.with_division(i), pairs[s].source, pairs[s].target_unlabeled,
                             cfg.train.with_seed(s))
            run.checkpoint(h, f"division{i}", s)
    run.csv("division_choice", run.seed_tag, ["division_index", "score", "chosen"],
            [[i, sel.scores[i], i == sel.chosen] for i in sorted(sel.scores)])
    per_div = defaultdict(list)
    for r in sel.table:
        per_div[r.division_index].append(r.worst_in_class_proxy_risk)
    run.plot(dict(per_div), "division_ucurve", "division_sweep", run.seed_tag,
             f"{run.task} worst in-class proxy risk")
    print(f"chosen division: {sel.chosen}")


# ---------------------------------------------------------------- eval

def _print_scores(pairs_by_method: dict[str, list[tuple[float, float]]]) -> None:
    for method in sorted(pairs_by_method):
        pairs = pairs_by_method[method]
        mae = sum(abs(p - t) for p, t in pairs) / len(pairs)
        try:
            _, r = score_methods(pairs)
            pcc = f"{r:.6f}"
        except MetricError:
            pcc = "n/a"
        print(f"{method}: n={len(pairs)} mean_abs_err={mae:.6f} pcc={pcc}")


def eval_report(path) -> None:
    """Score an existing methods report."""
    rows = read_methods_report(path)
    if not rows:
        raise FormatError(f"{path}: no rows")
    grouped: dict[str, list[tuple[float, float]]] = defaultdict(list)
    for task, method, pred, true in rows:
        if pred is None or true is None:
            raise FormatError(f"{path}: row for {task}/{method} lacks predicted_risk or true_risk")
        grouped[method].append((pred, true))
    _print_scores(grouped)


def cmd_eval(run: Run, seeds) -> None:
    cfg = run.cfg
    if not has_hidden_labels(cfg):
        raise InputError("eval needs target labels; set dataset.target_has_labels for csv inputs")
    filled: list[RiskReport] = []
    for s in seeds:
        pair = build_pair(cfg, s)
        tgt = pair.hidden_target("eval")

        def risk_of(name: str) -> float:
            return zero_one_risk(load_checkpoint(run.path(name, s, "ckpt")), tgt.features, tgt.labels)

        reports = []
        for m in ESTIMATE_METHODS:
            if run.path(m, s).exists():
                for r in read_risk_reports(run.path(m, s)):
                    reports.append(r.with_truth(risk_of(cfg.model.candidate)))
        if reports:
            run.csv("eval", s, METHODS_COLUMNS, methods_rows(reports))
            filled += reports
        sweep = run.path("division_sweep", s)
        if sweep.exists():
            rows = [[int(r["division_index"]), int(r["second_level_division"]), int(r["seed"]),
                     float(r["worst_in_class_proxy_risk"]), risk_of(f"division{r['division_index']}")]
                    for r in read_csv(sweep)]
            run.csv("division_sweep-eval", s, SWEEP_COLUMNS, rows)
        stop = run.path("earlystop", s)
        if stop.exists():
            rows = [[int(r["epoch"]), float(r["src_risk"]), float(r["proxy_risk"]),
                     risk_of(f"epoch{r['epoch']}")] for r in read_csv(stop)]
            run.csv("earlystop-eval", s, EARLYSTOP_COLUMNS, rows)
            try:
                print(f"earlystop seed {s}: pcc={pearson([r[2] for r in rows], [r[3] for r in rows]):.6f}")
            except MetricError as exc:
                print(f"earlystop seed {s}: pcc=n/a ({exc})")
        det = run.path("detect", s)
        if det.exists():
            flags = [r["flagged"] == "1" for r in read_csv(det)]
            h = load_checkpoint(run.path(cfg.model.candidate, s, "ckpt"))
            sc = score_error_detection(flags, h.predict(tgt.features) != tgt.labels)
            run.csv("detect-eval", s, SCORE_COLUMNS,
                    [[sc.precision, sc.recall, sc.f1, sc.tp, sc.fp, sc.fn, sc.tn]])
            print(f"detect seed {s}: precision={sc.precision:.6f} recall={sc.recall:.6f} f1={sc.f1:.6f}")
    if filled:
        run.csv("methods_report", run.seed_tag, METHODS_COLUMNS, methods_rows(filled))
        grouped: dict[str, list[tuple[float, float]]] = defaultdict(list)
        for r in filled:
            grouped[r.method].append((r.estimated_risk, r.true_risk))
        _print_scores(grouped)
        run.plot({"predicted": [r.estimated_risk for r in filled], "true": [r.true_risk for r in filled],
                  "labels": [f"{r.method} seed {r.seed}" for r in filled]},
                 "scatter_pred_vs_true", "methods_report", run.seed_tag, f"{run.task} predicted vs true")


PER_SEED: dict[str, Callable[[Run, int], None]] = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "proxy-risk": cmd_proxy_risk,
    "bd-bound": cmd_bd_bound,
    "conf-score": cmd_conf_score,
    "early-stop": cmd_early_stop,
    "detect-errors": cmd_detect_errors,
}
ALL_SEEDS = {"sweep-division": cmd_sweep_division, "eval": cmd_eval}
COMMANDS = tuple(PER_SEED) + tuple(ALL_SEEDS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shiftgauge",
                                     description="Estimate target risk under distribution shift.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config file (INI)")
        p.add_argument("--seed", type=int, help="run only this seed")
        p.add_argument("--out", help="output directory (overrides output.directory)")
        if name == "eval":
            p.add_argument("--report", help="score an existing methods_report.csv instead")
    return parser


def run_command(args, argv) -> None:
    if args.command == "eval" and args.report:
        eval_report(args.report)
        return
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed must be non-negative, got {args.seed}")
        cfg = cfg.with_seeds([args.seed])
    if args.out:
        cfg = cfg.with_output(args.out)
    run = Run(cfg, args.command)
    t0 = time.perf_counter()
    if args.command in PER_SEED:
        for s in cfg.model.seeds:
            PER_SEED[args.command](run, s)
    else:
        ALL_SEEDS[args.command](run, list(cfg.model.seeds))
    run.timings["total"] = time.perf_counter() - t0
    run.manifest(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    try:
        run_command(args, argv)
    except (ConfigError, InputError, FormatError, ShapeError, MetricError, OSError) as exc:
        print(f"shiftgauge {args.command}: error: {_one_line(exc)}", file=sys.stderr)
        return 1
    except (ShiftGaugeError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"shiftgauge {args.command}: failed: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 2
    return 0


def _one_line(exc: BaseException) -> str:
    return " ".join(str(exc).split()) or type(exc).__name__


if __name__ == "__main__":
    sys.exit(main())
