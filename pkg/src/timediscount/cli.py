"""Command-line front end.

Subcommands: ``synth``, ``train``, ``evaluate``, ``gridsearch``, ``gradcheck``.

Run settings come from a flat ``key = value`` file given with ``--config``
and may be overridden by ``--key value`` flags; unknown keys are
rejected.  All outputs go under ``--out DIR``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import itertools
import logging
import math
import sys
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import baselines, checkpoint, checks, datasets, seqdata, synth
from .model import KINDS, ModelConfig, build_model
from .optim import NumericError, TrainLog, default_metric, evaluate, grad_check, train
from .seqdata import DataError

log = logging.getLogger("timediscount")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


# --- configuration --------------------------------------------------------

# ModelConfig fields that are derived from the data rather than configured
DERIVED_MODEL_KEYS = ("D", "task")
MODEL_KEYS = tuple(f.name for f in fields(ModelConfig) if f.name not in DERIVED_MODEL_KEYS)


@dataclass
class RunConfig:
    data: str = "sunspot"  # "sunspot", a series CSV or an events CSV
    labels: str = ""  # sample,label[,t] CSV for event data
    split: float = 0.67
    normalize: str = "auto"  # auto | minmax | standardize
    iterations: int = 1000
    seeds: tuple = (0,)
    batch_size: int = 16
    metric: str = ""  # empty: rmse for autoregression, auc for classification
    eval_every: int = 1
    shuffle: bool = False
    alpha: float = 1e-3
    jobs: int = 1
    val_fraction: float = 0.8
    select_by: str = "average"  # average | best | final
    var_solver: str = "sgd"  # sgd | ols
    model: dict = field(default_factory=dict)

    def model_config(self, D: int, task: str, **overrides) -> ModelConfig:
        try:
            return ModelConfig(D=D, task=task, **{**self.model, **overrides})
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None


RUN_KEYS = tuple(f.name for f in fields(RunConfig) if f.name != "model")
_MODEL_DEFAULTS = {f.name: f.default for f in fields(ModelConfig)}
_RUN_DEFAULTS = {f.name: f.default for f in fields(RunConfig) if f.name != "model"}


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int_tuple(text: str) -> tuple:
    return tuple(-1 if p.strip() == "full" else int(p) for p in text.split(",") if p.strip())


def coerce(key: str, text: str):
    """Convert a config string to the type of the key's default."""
    default = _RUN_DEFAULTS.get(key, _MODEL_DEFAULTS.get(key))
    try:
        if isinstance(default, bool):
            return _parse_bool(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            return _parse_int_tuple(text)
        return text.strip()
    except ValueError as exc:
        raise UsageError(f"bad value for {key}: {exc}") from None


def normalize_key(key: str) -> str:
    return key.strip().lstrip("-").replace("-", "_")


def read_config_file(path: str | Path) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    for n, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        k, v = line.split("=", 1)
        out[normalize_key(k)] = v.strip()
    return out


def parse_overrides(extra: list[str]) -> dict[str, str]:
    """``--key value`` or ``--key=value`` pairs left over by argparse."""
    out, i = {}, 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument {tok!r}")
        if "=" in tok:
            k, v = tok.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"option {tok} needs a value")
            k, v = tok, extra[i + 1]
            i += 2
        out[normalize_key(k)] = v
    return out


def build_run_config(raw: dict[str, str]) -> RunConfig:
    unknown = sorted(set(raw) - set(RUN_KEYS) - set(MODEL_KEYS))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    run = {k: coerce(k, v) for k, v in raw.items() if k in RUN_KEYS}
    model = {k: coerce(k, v) for k, v in raw.items() if k in MODEL_KEYS}
    cfg = RunConfig(**run, model=model)
    if cfg.normalize not in ("auto", "minmax", "standardize"):
        raise UsageError(f"normalize must be auto, minmax or standardize, got {cfg.normalize!r}")
    if cfg.metric not in ("", "rmse", "auc"):
        raise UsageError(f"metric must be rmse or auc, got {cfg.metric!r}")
    if cfg.select_by not in ("average", "best", "final"):
        raise UsageError(f"select_by must be average, best or final, got {cfg.select_by!r}")
    if cfg.var_solver not in ("sgd", "ols"):
        raise UsageError(f"var_solver must be sgd or ols, got {cfg.var_solver!r}")
    if cfg.iterations < 0 or cfg.batch_size < 1 or cfg.eval_every < 1 or cfg.jobs < 1:
        raise UsageError("iterations must be >= 0; batch_size, eval_every and jobs >= 1")
    if not cfg.seeds:
        raise UsageError("at least one seed is required")
    return cfg


def load_run_config(args, extra: list[str]) -> RunConfig:
    raw = read_config_file(args.config) if args.config else {}
    raw.update(parse_overrides(extra))
    return build_run_config(raw)


# --- data -----------------------------------------------------------------

def _is_events_csv(path: Path) -> bool:
    with open(path, newline="") as fh:
        header = next(csv.reader(fh), [])
    return {"timestamp", "attribute", "value"} <= set(header)


def load_dataset(cfg: RunConfig):
    if cfg.data == "sunspot":
        return datasets.sunspot_data()
    path = Path(cfg.data)
    if not path.is_file():
        raise DataError(f"data file {path} not found")
    if _is_events_csv(path):
        if not cfg.labels:
            raise DataError("event data needs a labels file (labels = PATH)")
        groups = seqdata.read_events_csv(path)
        labels, t = datasets.read_labels_csv(cfg.labels)
        history = cfg.model.get("history", _MODEL_DEFAULTS["history"])
        return datasets.events_dataset(groups, labels, history, t=t)
    series, header = seqdata.read_series_csv(path)
    return datasets.SeriesData(series, tuple(header))


def norm_mode(cfg: RunConfig, data) -> str:
    if cfg.normalize != "auto":
        return cfg.normalize
    return "minmax" if data.task == "autoreg" else "standardize"


def make_split(cfg: RunConfig, data, fraction: float, stats=None) -> datasets.Split:
    history = cfg.model.get("history", _MODEL_DEFAULTS["history"])
    return data.split(fraction, history, norm_mode(cfg, data), stats)


# --- reports --------------------------------------------------------------

@dataclass
class SeedResult:
    seed: int
    average: float
    best: float
    best_iter: int
    final: float

    @classmethod
    def from_log(cls, seed: int, lg: TrainLog) -> "SeedResult":
        best, it = lg.best
        return cls(seed, lg.average, best, it, lg.final)


@dataclass
class MetricReport:
    """Average over logged iterations, best value and where it occurred, per seed."""

    metric: str
    per_seed: list[SeedResult]

    @property
    def average(self) -> float:
        vals = [r.average for r in self.per_seed if not math.isnan(r.average)]
        return float(np.mean(vals)) if vals else math.nan

    def _best(self) -> SeedResult | None:
        ok = [r for r in self.per_seed if not math.isnan(r.best)]
        if not ok:
            return None
        pick = max if self.metric == "auc" else min
        return pick(ok, key=lambda r: r.best)

    @property
    def best(self) -> float:
        r = self._best()
        return r.best if r else math.nan

    @property
    def best_iter(self) -> int:
        r = self._best()
        return r.best_iter if r else 0

    @property
    def best_seed(self) -> int | None:
        r = self._best()
        return r.seed if r else None

    def score(self, select_by: str) -> float:
        if select_by == "best":
            return self.best
        if select_by == "final":
            vals = [r.final for r in self.per_seed if not math.isnan(r.final)]
            return float(np.mean(vals)) if vals else math.nan
        return self.average

    def to_csv(self, path: Path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "metric", "average", "best", "best_iter", "final"])
            for r in self.per_seed:
                w.writerow([r.seed, self.metric, repr(r.average), repr(r.best), r.best_iter, repr(r.final)])
            finals = [r.final for r in self.per_seed]
            w.writerow(["all", self.metric, repr(self.average), repr(self.best), self.best_iter,
                        repr(float(np.mean(finals))) if finals else repr(math.nan)])

    def summary(self) -> str:
        return (f"{self.metric}: average {self.average:.4f}, best {self.best:.4f} "
                f"(seed {self.best_seed}, iteration {self.best_iter}) over {len(self.per_seed)} seed(s)")


def write_trainlogs(path: Path, logs: dict[int, TrainLog]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "iteration", "objective", "test_metric"])
        for seed, lg in logs.items():
            for it, obj, m in zip(lg.iterations, lg.objective, lg.test_metric):
                w.writerow([seed, it, repr(obj), repr(m)])


def write_predictions(path: Path, rows: list[tuple[int, np.ndarray, np.ndarray]], task: str):
    """One row per (seed, sample): targets then predictions (or label then score)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if not rows:
            w.writerow(["seed", "index"])
            return
        if task == "classify":
            w.writerow(["seed", "index", "label", "score"])
            for seed, y, p in rows:
                for i, (a, b) in enumerate(zip(y, p[:, 1])):
                    w.writerow([seed, i, int(a), repr(float(b))])
        else:
            D = rows[0][1].shape[1]
            w.writerow(["seed", "index"] + [f"target{j}" for j in range(D)] + [f"pred{j}" for j in range(D)])
            for seed, y, p in rows:
                for i in range(len(y)):
                    w.writerow([seed, i] + [repr(float(v)) for v in y[i]] + [repr(float(v)) for v in p[i]])


# --- training -------------------------------------------------------------

@dataclass
class RunResult:
    seed: int
    log: TrainLog
    model: object


def fit_one(mcfg: ModelConfig, cfg: RunConfig, split: datasets.Split, seed: int) -> RunResult:
    """Train one seed; VAR with ``var_solver = ols`` is solved in closed form."""
    metric = cfg.metric or ("rmse" if mcfg.task == "autoreg" else "auc")
    model = build_model(mcfg, seed)
    if mcfg.kind == "var" and cfg.var_solver == "ols":
        if mcfg.task != "autoreg":
            raise UsageError("the ols solver only applies to autoregression")
        Xtr = np.where(split.train[0] == mcfg.sentinel, 0.0, split.train[0])
        model.p = baselines.var_fit_ols(Xtr, split.train[1], model.p.lag)
        lg = TrainLog(metric)
        lg.append(0, model.objective(*split.train), evaluate(model, *split.test, metric))
        return RunResult(seed, lg, model)
    lg = train(model, split.train, split.test, cfg.iterations, cfg.batch_size, seed, metric,
               cfg.eval_every, cfg.shuffle, cfg.alpha)
    return RunResult(seed, lg, model)


def fit_seeds(mcfg: ModelConfig, cfg: RunConfig, split: datasets.Split, seeds=None) -> list[RunResult]:
    """Train every seed, in worker processes when ``jobs > 1``; order follows ``seeds``."""
    seeds = list(cfg.seeds if seeds is None else seeds)
    if cfg.jobs == 1 or len(seeds) == 1:
        return [fit_one(mcfg, cfg, split, s) for s in seeds]
    with cf.ProcessPoolExecutor(max_workers=min(cfg.jobs, len(seeds))) as ex:
        futures = [ex.submit(fit_one, mcfg, cfg, split, s) for s in seeds]
        return [f.result() for f in futures]


def report_of(results: list[RunResult], metric: str) -> MetricReport:
    return MetricReport(metric, [SeedResult.from_log(r.seed, r.log) for r in results])


def save_run(out: Path, results: list[RunResult], split: datasets.Split, mcfg: ModelConfig,
             cfg: RunConfig, metric: str) -> MetricReport:
    out.mkdir(parents=True, exist_ok=True)
    report = report_of(results, metric)
    write_trainlogs(out / "trainlog.csv", {r.seed: r.log for r in results})
    report.to_csv(out / "metrics.csv")
    meta = {"stats": split.stats_dict, "data": cfg.data, "labels": cfg.labels,
            "split": cfg.split, "normalize": split.stats.mode}
    preds = []
    for r in results:
        checkpoint.save(out / f"checkpoint-seed{r.seed}.bin", r.model, dict(meta, seed=r.seed))
        preds.append((r.seed, split.test[1], r.model.predict(split.test[0])))
    write_predictions(out / "predictions.csv", preds, mcfg.task)
    return report


def cmd_train(cfg: RunConfig, out: Path) -> MetricReport:
    data = load_dataset(cfg)
    mcfg = cfg.model_config(data.D, data.task)
    split = make_split(cfg, data, cfg.split)
    metric = cfg.metric or ("rmse" if mcfg.task == "autoreg" else "auc")
    results = fit_seeds(mcfg, cfg, split)
    report = save_run(out, results, split, mcfg, cfg, metric)
    print(report.summary())
    return report


def cmd_evaluate(ckpt: Path, cfg: RunConfig, out: Path, on: str = "test") -> MetricReport:
    raw = ckpt.read_bytes()
    model = checkpoint.loads(raw)
    meta = checkpoint.read_meta(raw)
    mc = model.config
    overrides = {"history": mc.history}
    cfg = replace(cfg, model={**cfg.model, **overrides})
    if "data" in meta and cfg.data == _RUN_DEFAULTS["data"]:
        cfg = replace(cfg, data=meta["data"], labels=cfg.labels or meta.get("labels", ""),
                      split=meta.get("split", cfg.split))
    data = load_dataset(cfg)
    if data.D != mc.D:
        raise DataError(f"data has {data.D} attributes, checkpoint model expects {mc.D}")
    if data.task != mc.task:
        raise DataError(f"data is for {data.task}, checkpoint model was trained for {mc.task}")
    stats = datasets.stats_from_dict(meta["stats"]) if "stats" in meta else None
    split = make_split(cfg, data, cfg.split, stats)
    X, Y = {"test": split.test, "train": split.train}[on]
    metric = cfg.metric or default_metric(model)
    value = evaluate(model, X, Y, metric)
    lg = TrainLog(metric)
    lg.append(0, math.nan, value)
    report = MetricReport(metric, [SeedResult.from_log(int(meta.get("seed", 0)), lg)])
    out.mkdir(parents=True, exist_ok=True)
    report.to_csv(out / "metrics.csv")
    write_predictions(out / "predictions.csv", [(report.per_seed[0].seed, Y, model.predict(X))], mc.task)
    print(f"{metric} on {on}: {value:.6f}")
    return report


# --- grid search ----------------------------------------------------------

STANDARD_GRID = {
    "K": [4, 8, 16, 24],
    "lam_mu": [0.8, 0.85, 0.9, 0.95],
    "pool_l0": [1, 2, 3, 4, 5, 10],
    "pool_l": [1.0, 1.05, 1.1, 1.2],
    "l1": [0.01, 0.1, 1.0],
}
# shorthand keys that set several model fields at once
GRID_ALIASES = {
    "lam_mu": ("lam", "mu"),
    "pool_l0": ("pool1_l0", "pool2_l0"),
    "pool_l": ("pool1_l", "pool2_l"),
}


def standard_grid(coupled: bool = True) -> dict[str, list]:
    grid = dict(STANDARD_GRID)
    if not coupled:
        vals = grid.pop("lam_mu")
        grid = {"lam": vals, "mu": vals, **grid}
    return grid


def parse_grid(specs: list[str]) -> dict[str, list]:
    grid = {}
    for spec in specs:
        if "=" not in spec:
            raise UsageError(f"grid entries look like key=v1,v2; got {spec!r}")
        k, vals = spec.split("=", 1)
        k = normalize_key(k)
        targets = GRID_ALIASES.get(k, (k,))
        for t in targets:
            if t not in MODEL_KEYS:
                raise UsageError(f"unknown grid key {k}")
        parsed = [coerce(targets[0], v) for v in vals.split(",") if v.strip()]
        if not parsed:
            raise UsageError(f"grid key {k} has no values")
        grid[k] = parsed
    return grid


def expand_grid(grid: dict[str, list]) -> list[dict]:
    """Cartesian product in key order; aliases are expanded into model fields."""
    keys = list(grid)
    points = []
    for combo in itertools.product(*(grid[k] for k in keys)):
        point = {}
        for k, v in zip(keys, combo):
            for t in GRID_ALIASES.get(k, (k,)):
                point[t] = v
        points.append(point)
    return points


def _grid_job(idx: int, point: dict, cfg: RunConfig, data, out: Path):
    """Train one grid point on the first part of the training data, score it on the rest."""
    pdir = out / "points" / f"{idx:05d}"
    try:
        pcfg = replace(cfg, model={**cfg.model, **point}, jobs=1)
        sub = data.head(cfg.split)
        split = make_split(pcfg, sub, cfg.val_fraction)
        mcfg = pcfg.model_config(data.D, data.task)
        metric = cfg.metric or ("rmse" if mcfg.task == "autoreg" else "auc")
        results = fit_seeds(mcfg, pcfg, split)
        report = report_of(results, metric)
        pdir.mkdir(parents=True, exist_ok=True)
        write_trainlogs(pdir / "trainlog.csv", {r.seed: r.log for r in results})
        score = report.score(cfg.select_by)
        if math.isnan(score):
            raise NumericError("no validation metric was recorded")
        return idx, "ok", score, ""
    except (NumericError, FloatingPointError, ValueError, UsageError) as exc:
        return idx, "failed", math.nan, f"{type(exc).__name__}: {exc}"


def rank_points(results, metric: str) -> list:
    """Successful points ordered best first (ties by index), failures last."""
    ok = [r for r in results if r[1] == "ok"]
    bad = [r for r in results if r[1] != "ok"]
    sign = -1.0 if metric == "auc" else 1.0
    ok.sort(key=lambda r: (sign * r[2], r[0]))
    return ok + sorted(bad, key=lambda r: r[0])


def cmd_gridsearch(cfg: RunConfig, out: Path, grid: dict[str, list]) -> tuple[dict, MetricReport | None]:
    points = expand_grid(grid)
    if not points:
        raise UsageError("empty grid")
    data = load_dataset(cfg)
    task = data.task
    metric = cfg.metric or ("rmse" if task == "autoreg" else "auc")
    out.mkdir(parents=True, exist_ok=True)
    if cfg.jobs > 1 and len(points) > 1:
        with cf.ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            futures = [ex.submit(_grid_job, i, p, cfg, data, out) for i, p in enumerate(points)]
            results = [f.result() for f in futures]
    else:
        results = [_grid_job(i, p, cfg, data, out) for i, p in enumerate(points)]
    ranked = rank_points(results, metric)
    keys = sorted({k for p in points for k in p})
    with open(out / "ranking.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "point", "status", f"val_{metric}_{cfg.select_by}"] + keys + ["error"])
        for rank, (idx, status, score, err) in enumerate(ranked, start=1):
            w.writerow([rank if status == "ok" else "", idx, status, repr(score)]
                       + [points[idx].get(k, "") for k in keys] + [err])
    failed = sum(r[1] != "ok" for r in results)
    if failed:
        log.warning("%d of %d grid points failed", failed, len(points))
    if ranked[0][1] != "ok":
        print(f"all {len(points)} grid points failed")
        return {}, None
    best = points[ranked[0][0]]
    print(f"selected point {ranked[0][0]}: {best} (validation {metric} {ranked[0][2]:.4f})")
    final_cfg = replace(cfg, model={**cfg.model, **best})
    mcfg = final_cfg.model_config(data.D, task)
    split = make_split(final_cfg, data, cfg.split)
    report = save_run(out, fit_seeds(mcfg, final_cfg, split), split, mcfg, final_cfg, metric)
    print(report.summary())
    return best, report


# --- gradient check -------------------------------------------------------

def flip_largest(grads: dict[str, np.ndarray]):
    """Sign error at the largest-magnitude gradient coordinate (fault injection)."""
    name = max(grads, key=lambda k: float(np.max(np.abs(grads[k]))) if grads[k].size else -1.0)
    g = grads[name]
    idx = np.unravel_index(int(np.argmax(np.abs(g))), g.shape)
    g[idx] = -g[idx]


def cmd_gradcheck(kinds, cases: int, seed: int, inject: bool, step: float, tolerance: float) -> bool:
    rng = np.random.default_rng(seed)
    all_ok = True
    for kind in kinds:
        worst, n_checked, n_skipped, failed = 0.0, 0, 0, []
        for c in range(cases):
            model, X, Y = checks.random_case(kind, rng)
            rep = grad_check(model, X, Y, step, tolerance, corrupt=flip_largest if inject else None)
            worst = max(worst, rep.max_rel_error)
            n_checked += rep.n_checked
            n_skipped += rep.n_skipped
            if not rep.passed:
                failed.append((c, rep))
        status = "ok" if not failed else "FAIL"
        print(f"{kind}: {status} max rel err {worst:.3e} over {cases} cases "
              f"({n_checked} coordinates, {n_skipped} skipped at kinks)")
        for c, rep in failed[:5]:
            name, idx, a, n, e = rep.failures[0]
            print(f"  case {c}: {name}{list(idx)} analytic {a:.6g} numeric {n:.6g} rel err {e:.2e}")
        all_ok &= not failed
    return all_ok


# --- synthetic data -------------------------------------------------------

def cmd_synth(args) -> None:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.kind == "planted":
        if args.missing >= 1:
            raise DataError("missingness rate must be below 1")
        motif = synth.MotifSpec(amplitude=args.amplitude)
        groups, labels = synth.planted_events(args.n, args.T, args.D, args.jitter, args.missing,
                                              motif, args.noise, args.seed)
        seqdata.write_events_csv(out / "events.csv", groups)
        datasets.write_labels_csv(out / "labels.csv", labels, t=args.T)
        print(f"wrote {args.n} samples ({int(labels.sum())} positive) to {out}")
    else:
        series, _ = synth.var_series(args.n, args.D, noise=args.noise, seed=args.seed)
        with open(out / "series.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(synth.attribute_names(args.D))
            for row in series.T:
                w.writerow([repr(float(v)) for v in row])
        print(f"wrote a {args.D} x {args.n} VAR series to {out / 'series.csv'}")


# --- entry point ----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tdconv", description="Time-discounting convolution models for event sequences.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def run_opts(sp):
        sp.add_argument("--config", help="flat key = value file")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("train", help="train a model (extra --key value pairs override the config)")
    run_opts(sp)
    sp = sub.add_parser("evaluate", help="score a checkpoint on a data split")
    run_opts(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--on", choices=("test", "train"), default="test")
    sp = sub.add_parser("gridsearch", help="select hyperparameters on a chronological validation split")
    run_opts(sp)
    sp.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                    help="grid axis; lam_mu, pool_l0 and pool_l set both members of a pair")
    sp.add_argument("--standard-grid", action="store_true", help="the standard candidate sets (1152 points)")
    sp.add_argument("--uncoupled", action="store_true", help="sweep lam and mu independently")
    sp.add_argument("--list", action="store_true", help="print the grid size and exit")

    sp = sub.add_parser("gradcheck", help="finite-difference check of every model kind")
    sp.add_argument("--kinds", default=",".join(KINDS))
    sp.add_argument("--cases", type=int, default=5)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--step", type=float, default=1e-5)
    sp.add_argument("--tolerance", type=float, default=1e-4)
    sp.add_argument("--inject-sign-error", action="store_true", help="test mode: corrupt one gradient")

    sp = sub.add_parser("synth", help="write a synthetic dataset")
    sp.add_argument("kind", choices=("planted", "var"))
    sp.add_argument("--out", required=True)
    sp.add_argument("--n", type=int, default=3000, help="samples (planted) or steps (var)")
    sp.add_argument("--T", type=int, default=64)
    sp.add_argument("--D", type=int, default=4)
    sp.add_argument("--jitter", type=int, default=3)
    sp.add_argument("--missing", type=float, default=0.5)
    sp.add_argument("--amplitude", type=float, default=synth.MotifSpec().amplitude)
    sp.add_argument("--noise", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    return p


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command in ("synth", "gradcheck") and extra:
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    if args.command == "synth":
        cmd_synth(args)
        return EXIT_OK
    if args.command == "gradcheck":
        kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
        bad = [k for k in kinds if k not in KINDS]
        if bad or args.cases < 1:
            raise UsageError(f"unknown model kinds {bad}" if bad else "--cases must be >= 1")
        ok = cmd_gradcheck(kinds, args.cases, args.seed, args.inject_sign_error, args.step, args.tolerance)
        return EXIT_OK if ok else EXIT_NUMERIC
    cfg = load_run_config(args, extra)
    out = Path(args.out)
    if args.command == "train":
        cmd_train(cfg, out)
    elif args.command == "evaluate":
        cmd_evaluate(Path(args.checkpoint), cfg, out, args.on)
    else:
        grid = standard_grid(not args.uncoupled) if args.standard_grid else {}
        grid.update(parse_grid(args.grid))
        if args.list:
            print(f"{len(expand_grid(grid))} grid points")
            return EXIT_OK
        best, _ = cmd_gridsearch(cfg, out, grid)
        if not best:
            return EXIT_NUMERIC
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except UsageError as exc:
        print(f"tdconv: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NumericError, FloatingPointError) as exc:
        print(f"tdconv: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, ValueError) as exc:
        print(f"tdconv: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
