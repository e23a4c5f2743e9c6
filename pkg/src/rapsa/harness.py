"""Experiment configuration, trace CSV I/O and benchmark summaries."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import mnist
from .core import Constant, DomainError, Hybrid, InverseTime
from .engine import EngineConfig, Trace, TraceRecord, run
from .problems import LogisticProblem, closed_form_optimum, generate_lmmse

log = logging.getLogger(__name__)

CSV_COLUMNS = ("t", "features_processed", "objective", "grad_norm", "test_accuracy", "wall_ms")


class ConfigError(DomainError):
    pass


@dataclass
class ExperimentConfig:
    problem: str = "lmmse"
    # lmmse
    p: int = 1024
    N: int = 10_000
    q: int = 1
    sigma2: float = 10 ** -1.5
    data_seed: int | None = None
    # mnist
    lam: float | None = None
    data_dir: str | None = None
    digits: tuple = (0, 8)
    # engine
    B: tuple = (16,)
    I: int = 16
    L: int = 1
    schedule: str = "hybrid"
    eps: float = 1e-3
    T_anneal: float = 450.0
    gamma: float | None = None
    gamma0: float | None = None
    T0: float | None = None
    T: int = 10_000
    seed: int = 0
    eval_every: int = 100
    algorithm: str = "rapsa"
    tau: int = 10
    workers: int = 1
    track_grad_norm: bool = False
    timing: bool = False
    # output
    output: str = "trace.csv"
    thresholds: tuple = ()
    relative_thresholds: tuple = ()

    def step_schedule(self):
        if self.schedule == "hybrid":
            return Hybrid(self.eps, self.T_anneal)
        if self.schedule == "constant":
            return Constant(self.gamma)
        if self.schedule == "inverse_time":
            return InverseTime(self.gamma0, self.T0)
        raise ConfigError(f"unknown schedule {self.schedule!r}")

    def engine_config(self, B: int | None = None) -> EngineConfig:
        if B is None:
            if len(self.B) != 1:
                raise ConfigError("several block counts given; use a sweep")
            B = self.B[0]
        return EngineConfig(I=self.I, B=B, L=self.L, schedule=self.step_schedule(), T=self.T, seed=self.seed,
                            eval_every=self.eval_every, algorithm=self.algorithm, tau=self.tau,
                            workers=self.workers, track_grad_norm=self.track_grad_norm)

    def validate(self):
        if self.problem not in ("lmmse", "mnist"):
            raise ConfigError(f"unknown problem {self.problem!r}")
        for B in self.B:
            self.engine_config(B)
        if self.problem == "mnist":
            d = mnist.data_dir(self.data_dir)
            for split in ("train", "test"):
                for path in mnist.split_paths(d, split):
                    if not path.exists():
                        raise ConfigError(f"missing MNIST file {path}")
        if self.relative_thresholds and self.problem != "lmmse":
            raise ConfigError("relative thresholds need a known optimum (lmmse only)")
        return self


_INT = {"p", "N", "q", "data_seed", "I", "L", "T", "seed", "eval_every", "tau", "workers"}
_FLOAT = {"sigma2", "lam", "eps", "T_anneal", "gamma", "gamma0", "T0"}
_BOOL = {"track_grad_norm", "timing"}
_INT_LIST = {"B", "digits"}
_FLOAT_LIST = {"thresholds", "relative_thresholds"}
_STR = {"problem", "data_dir", "schedule", "algorithm", "output"}


def _number(text):
    # accepts 1e-3 and 10^-1.5
    text = text.strip()
    if "^" in text:
        base, exp = text.split("^", 1)
        return float(base) ** float(exp)
    return float(text)


def parse_config(text: str, base_dir=None) -> ExperimentConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment, lists are comma separated."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in _INT | _FLOAT | _BOOL | _INT_LIST | _FLOAT_LIST | _STR:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            if key in _INT:
                values[key] = int(_number(val))
            elif key in _FLOAT:
                values[key] = _number(val)
            elif key in _BOOL:
                values[key] = val.lower() in ("1", "true", "yes", "on")
            elif key in _INT_LIST:
                values[key] = tuple(int(v) for v in val.split(",") if v.strip())
            elif key in _FLOAT_LIST:
                values[key] = tuple(_number(v) for v in val.split(",") if v.strip())
            else:
                values[key] = val
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {val!r}") from exc
    cfg = ExperimentConfig(**values)
    if base_dir is not None:
        if not Path(cfg.output).is_absolute():
            cfg.output = str(Path(base_dir) / cfg.output)
        if cfg.data_dir and not Path(cfg.data_dir).is_absolute():
            cfg.data_dir = str(Path(base_dir) / cfg.data_dir)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


# -- traces -------------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_trace_csv(path, trace, timing: bool = True) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in trace:
            w.writerow([_fmt(r.t), _fmt(r.features_processed), _fmt(r.objective), _fmt(r.grad_norm),
                        _fmt(r.test_accuracy), _fmt(r.wall_ms if timing else None)])


def read_trace_csv(path) -> Trace:
    def opt(s):
        return float(s) if s != "" else None

    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        for d in reader:
            fp = float(d["features_processed"])
            rows.append(TraceRecord(int(d["t"]), int(fp) if fp.is_integer() else fp, float(d["objective"]),
                                    opt(d["grad_norm"]), opt(d["test_accuracy"]), opt(d["wall_ms"])))
    return Trace(rows)


@dataclass(frozen=True)
class Crossing:
    t: int
    features_processed: float


def benchmark_crossing(trace, threshold: float) -> Crossing | None:
    """First row with ``objective <= threshold``; ``None`` when never reached."""
    if not len(trace):
        raise DomainError("empty trace")
    for r in trace:
        if r.objective <= threshold:
            return Crossing(r.t, r.features_processed)
    return None


def test_accuracy(x, prob: LogisticProblem) -> float:
    """Share of samples with ``sign(x^T z) == y``; a zero score counts as wrong."""
    x = np.asarray(x, dtype=float)
    if x.shape != (prob.p,):
        raise DomainError(f"classifier has shape {x.shape}, expected ({prob.p},)")
    return float(np.mean(np.sign(prob.Z @ x) == prob.y))


test_accuracy.__test__ = False  # not a pytest test despite the name


# -- experiments --------------------------------------------------------------


@dataclass
class ExperimentResult:
    trace: Trace
    summary: dict
    csv_path: Path | None = None
    summary_path: Path | None = None
    extra: dict = field(default_factory=dict)


def build_problem(cfg: ExperimentConfig):
    """Return ``(train_problem, test_problem_or_None, F_star_or_None, info)``."""
    if cfg.problem == "lmmse":
        seed = cfg.seed if cfg.data_seed is None else cfg.data_seed
        prob = generate_lmmse(cfg.p, cfg.N, cfg.q, cfg.sigma2, seed)
        try:
            _, F_star = closed_form_optimum(prob)
        except DomainError:
            F_star = None
        return prob, None, F_star, {"p": cfg.p, "N": cfg.N, "q": cfg.q, "sigma2": cfg.sigma2, "data_seed": seed}
    d = mnist.data_dir(cfg.data_dir)
    train = mnist.load_mnist_idx(*mnist.split_paths(d, "train"))
    test = mnist.load_mnist_idx(*mnist.split_paths(d, "test"))
    prob = mnist.build_binary_task(train, cfg.digits, cfg.lam)
    test_prob = mnist.build_binary_task(test, cfg.digits, prob.lam)
    return prob, test_prob, None, {"p": prob.p, "N_train": prob.n_samples, "N_test": test_prob.n_samples,
                                   "lam": prob.lam, "digits": list(cfg.digits)}


def summarize(trace, cfg: ExperimentConfig, B: int, F_star=None, info=None) -> dict:
    F0 = trace[0].objective
    crossings = {}
    for thr in cfg.thresholds:
        c = benchmark_crossing(trace, thr)
        crossings[repr(thr)] = None if c is None else {"t": c.t, "features_processed": c.features_processed}
    rel = {}
    for frac in cfg.relative_thresholds:
        thr = F_star + frac * (F0 - F_star)
        c = benchmark_crossing(trace, thr)
        rel[repr(frac)] = {"threshold": thr,
                           "crossing": None if c is None else {"t": c.t, "features_processed": c.features_processed}}
    out = {"problem": cfg.problem, "B": B, "I": cfg.I, "L": cfg.L, "T": cfg.T, "seed": cfg.seed,
           "algorithm": cfg.algorithm, "schedule": repr(cfg.step_schedule()),
           "initial_objective": F0, "final_objective": trace[-1].objective,
           "F_star": F_star, "crossings": crossings, "relative_crossings": rel}
    if trace[-1].test_accuracy is not None:
        out["final_test_accuracy"] = trace[-1].test_accuracy
    out.update(info or {})
    return out


def run_experiment(cfg: ExperimentConfig, B: int | None = None, output=None, problem_cache=None) -> ExperimentResult:
    """Build the problem, run the engine, write the CSV and a JSON summary beside it."""
    cfg.validate()
    engine_cfg = cfg.engine_config(B)
    built = problem_cache if problem_cache is not None else build_problem(cfg)
    prob, test_prob, F_star, info = built
    test_fn = (lambda x: test_accuracy(x, test_prob)) if test_prob is not None else None
    try:
        trace = run(engine_cfg, prob, np.zeros(prob.p), test_fn=test_fn)
    except FloatingPointError as exc:
        raise RuntimeError(f"engine failed for B={engine_cfg.B}: {exc}") from exc
    summary = summarize(trace, cfg, engine_cfg.B, F_star, info)
    out = Path(output or cfg.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_trace_csv(out, trace, timing=cfg.timing)
    spath = out.with_suffix(".summary.json")
    spath.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    log.info("wrote %s (%d rows)", out, len(trace))
    return ExperimentResult(trace, summary, out, spath)


def sweep_output(path, B: int) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_B{B}{path.suffix or '.csv'}")


def run_sweep(cfg: ExperimentConfig) -> list:
    """One run per block count in ``cfg.B`` on a shared problem instance."""
    cfg.validate()
    built = build_problem(cfg)
    results = []
    for B in cfg.B:
        results.append(run_experiment(cfg, B, sweep_output(cfg.output, B), built))
    return results


def sweep_ordering(results, threshold_key=None, relative=False):
    """Features processed to reach a threshold, per B (``inf`` when not reached)."""
    out = {}
    for res in results:
        table = res.summary["relative_crossings" if relative else "crossings"]
        key = threshold_key if threshold_key is not None else next(iter(table))
        entry = table[key]
        crossing = entry["crossing"] if relative else entry
        out[res.summary["B"]] = math.inf if crossing is None else crossing["features_processed"]
    return out


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **kw)
