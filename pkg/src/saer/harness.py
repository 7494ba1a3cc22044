"""Multi-trial experiments, CSV/JSON output, aggregation and criterion checks.

Trial ``i`` of an experiment runs with seed ``base_seed + i`` and is fully
reproducible on its own. Summaries are computed from the set of trial rows
keyed by trial index, so merging partial results in any order gives the same
bytes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .graph import (
    BipartiteGraph,
    degree_report,
    generate_almost_regular,
    generate_regular,
    load_graph,
)
from .metrics import ROUND_COLUMNS, RoundRecord, RunResult
from .protocol import ProtocolKind, default_max_rounds, simulate
from .theory import EnvelopeError, TheoryEnvelope, TheoryParams, completion_bound, envelope, recommended_c

ROUNDS_SCHEMA = "# saer-rounds v1"
TRIALS_SCHEMA = "# saer-trials v1"
OUTPUT_DIR_ENV = "SAER_OUTPUT_DIR"

TRIAL_COLUMNS = (
    "trial", "seed", "completed", "completion_round", "work", "work_per_ball",
    "max_load", "max_S_t", "max_K_t", "envelope_violations", "rounds",
)


class ConfigError(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    graph: dict = field(default_factory=lambda: {"type": "regular", "n": 64, "delta": 8, "seed": 0})
    kind: str = "SAER"
    c: int | str = "auto"
    d: int = 1
    quotas: str = "full"
    trials: int = 1
    base_seed: int = 0
    max_rounds: int | None = None
    metrics: str = "full"
    eta: float = 1.0
    rho: float = 1.0
    workers: int = 1
    out_dir: str | None = None

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**dict(data))
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.d < 1:
            raise ConfigError("d must be >= 1")
        if self.kind not in ("SAER", "RAES"):
            raise ConfigError(f"unknown protocol kind {self.kind!r}")
        if self.metrics not in ("full", "light"):
            raise ConfigError("metrics must be 'full' or 'light'")
        if self.quotas not in ("full", "zero", "random"):
            raise ConfigError("quotas must be one of full, zero, random")
        if not (self.c == "auto" or (isinstance(self.c, int) and self.c >= 1)):
            raise ConfigError("c must be a positive integer or 'auto'")
        if self.max_rounds is not None and self.max_rounds < 1:
            raise ConfigError("max_rounds must be >= 1")
        if self.eta <= 0 or self.rho < 1:
            raise ConfigError("need eta > 0 and rho >= 1")
        if "type" not in self.graph and "file" not in self.graph:
            raise ConfigError("graph spec needs 'type' or 'file'")

    def resolved_c(self) -> int:
        return recommended_c(self.eta, self.rho, self.d) if self.c == "auto" else int(self.c)


def build_graph(spec: Mapping[str, Any]) -> BipartiteGraph:
    if "file" in spec:
        return load_graph(spec["file"])
    kind = spec["type"]
    if kind == "regular":
        return generate_regular(int(spec["n"]), int(spec["delta"]), int(spec.get("seed", 0)))
    if kind == "almost_regular":
        return generate_almost_regular(
            int(spec["n"]), int(spec["delta_min_c"]), float(spec.get("rho", 1.0)),
            float(spec.get("heavy_fraction", 0.0)), int(spec.get("seed", 0)),
        )
    raise ConfigError(f"unknown graph type {kind!r}")


def make_quotas(policy: str, n: int, d: int, seed: int) -> np.ndarray | None:
    if policy == "full":
        return None
    if policy == "zero":
        return np.zeros(n, dtype=np.int64)
    return np.random.default_rng([seed, 0x5157]).integers(0, d + 1, size=n)


def theory_for(g: BipartiteGraph, c: int, d: int, eta: float, rho: float) -> TheoryEnvelope | None:
    """Envelope matching the graph's actual degree profile; None if c is too small."""
    rep = degree_report(g)
    if g.n < 2:
        return None
    try:
        return envelope(TheoryParams(
            n=g.n, d=d, c=c, eta=eta, rho=rho,
            delta_min_c=rep.delta_min_C, delta_max_s=rep.delta_max_S,
        ))
    except EnvelopeError:
        return None


def envelope_violations(trajectory: Sequence[RoundRecord], env: TheoryEnvelope) -> int:
    """Rounds t <= floor(3 ln n) where K_t exceeds gamma_t (t < T) or delta_t (t >= T)."""
    bad = 0
    for rec in trajectory:
        if rec.round > env.completion_bound or rec.K_t is None:
            continue
        if rec.K_t > env.bound(rec.round):
            bad += 1
    return bad


@dataclass(frozen=True)
class TrialRow:
    trial: int
    seed: int
    completed: bool
    completion_round: int
    work: int
    work_per_ball: float
    max_load: int
    max_S_t: float | None
    max_K_t: float | None
    envelope_violations: int | None
    rounds: int


def trial_row(trial: int, seed: int, res: RunResult, n_balls: int, env: TheoryEnvelope | None) -> TrialRow:
    ks = [r.K_t for r in res.trajectory if r.K_t is not None]
    tracked = bool(ks) or not res.trajectory
    return TrialRow(
        trial=trial,
        seed=seed,
        completed=res.completed,
        completion_round=res.completion_round if res.completed else -1,
        work=res.work,
        work_per_ball=res.work / n_balls if n_balls else 0.0,
        max_load=res.max_load,
        max_S_t=res.max_S,
        max_K_t=max(ks, default=0.0) if tracked else None,
        envelope_violations=envelope_violations(res.trajectory, env) if env is not None and tracked else None,
        rounds=len(res.trajectory),
    )


def _stats(values: Sequence[float]) -> dict | None:
    if not values:
        return None
    a = np.asarray(values, dtype=np.float64)
    return {
        "mean": float(a.mean()),
        "median": float(np.median(a)),
        "p95": float(np.percentile(a, 95)),
        "max": float(a.max()),
    }


@dataclass
class AggregateSummary:
    rows: dict[int, TrialRow] = field(default_factory=dict)

    @classmethod
    def from_rows(cls, rows: Iterable[TrialRow]) -> "AggregateSummary":
        out = cls()
        for r in rows:
            out.add(r)
        return out

    def add(self, row: TrialRow) -> None:
        old = self.rows.get(row.trial)
        if old is not None and old != row:
            raise ValueError(f"conflicting results for trial {row.trial}")
        self.rows[row.trial] = row

    def merge(self, other: "AggregateSummary") -> "AggregateSummary":
        out = AggregateSummary(dict(self.rows))
        for r in other.rows.values():
            out.add(r)
        return out

    def to_dict(self) -> dict:
        rows = [self.rows[k] for k in sorted(self.rows)]
        done = [r for r in rows if r.completed]
        viol = [r.envelope_violations for r in rows if r.envelope_violations is not None]
        s_vals = [r.max_S_t for r in done if r.max_S_t is not None]
        return {
            "trials": len(rows),
            "completed": len(done),
            "non_termination_count": len(rows) - len(done),
            "completion_round": _stats([r.completion_round for r in done]),
            "work": _stats([r.work for r in done]),
            "work_per_ball": _stats([r.work_per_ball for r in done]),
            "max_load": _stats([r.max_load for r in done]),
            "max_S_t": _stats(s_vals),
            "max_load_all_trials": max((r.max_load for r in rows), default=0),
            "envelope_violation_rounds": sum(viol) if viol else None,
            "envelope_violation_trials": sum(1 for v in viol if v > 0) if viol else None,
        }


# --- single runs and experiments -------------------------------------------

@dataclass
class ExperimentOutput:
    config: ExperimentConfig
    graph: BipartiteGraph
    c: int
    env: TheoryEnvelope | None
    rows: list[TrialRow]
    results: list[RunResult]
    summary: AggregateSummary

    def meta(self) -> dict:
        rep = degree_report(self.graph)
        return {
            "kind": self.config.kind,
            "n": self.graph.n,
            "c": self.c,
            "d": self.config.d,
            "eta": self.config.eta,
            "rho": self.config.rho,
            "metrics": self.config.metrics,
            "quotas": self.config.quotas,
            "trials": self.config.trials,
            "base_seed": self.config.base_seed,
            "max_rounds": self.max_rounds,
            "degree_report": asdict(rep),
            "theory": self.env.header() if self.env is not None else None,
        }

    @property
    def max_rounds(self) -> int:
        return self.config.max_rounds or default_max_rounds(self.graph.n)


def _run_one(args: tuple) -> tuple[TrialRow, RunResult]:
    g, cfg, c, env, trial = args
    seed = cfg.base_seed + trial
    quotas = make_quotas(cfg.quotas, g.n, cfg.d, seed)
    res = simulate(g, cfg.kind, c, cfg.d, seed, quotas=quotas, max_rounds=cfg.max_rounds, metrics=cfg.metrics)
    n_balls = g.n * cfg.d
    return trial_row(trial, seed, res, n_balls, env), res


def run_experiment(cfg: ExperimentConfig, graph: BipartiteGraph | None = None) -> ExperimentOutput:
    cfg.validate()
    g = graph if graph is not None else build_graph(cfg.graph)
    c = cfg.resolved_c()
    env = theory_for(g, c, cfg.d, cfg.eta, cfg.rho)
    jobs = [(g, cfg, c, env, i) for i in range(cfg.trials)]
    if cfg.workers > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            done = list(pool.map(_run_one, jobs))
    else:
        done = [_run_one(j) for j in jobs]
    done.sort(key=lambda pair: pair[0].trial)
    rows = [p[0] for p in done]
    results = [p[1] for p in done]
    return ExperimentOutput(cfg, g, c, env, rows, results, AggregateSummary.from_rows(rows))


# --- serialization ----------------------------------------------------------

def _fmt(x: Any) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def rounds_csv(results: Sequence[tuple[int, RunResult]]) -> str:
    buf = io.StringIO()
    buf.write(ROUNDS_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("trial",) + ROUND_COLUMNS)
    for trial, res in results:
        for rec in res.trajectory:
            w.writerow([trial] + [_fmt(getattr(rec, col)) for col in ROUND_COLUMNS])
    return buf.getvalue()


def trials_csv(rows: Sequence[TrialRow]) -> str:
    buf = io.StringIO()
    buf.write(TRIALS_SCHEMA + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRIAL_COLUMNS)
    for r in rows:
        w.writerow([_fmt(getattr(r, col)) for col in TRIAL_COLUMNS])
    return buf.getvalue()


def to_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _read_csv(path: Path, schema: str, required: Sequence[str]) -> list[dict[str, str]]:
    text = path.read_text()
    lines = text.splitlines()
    if not lines or lines[0].strip() != schema:
        raise SchemaError(f"{path.name}: expected schema line {schema!r}")
    reader = csv.DictReader(line for line in lines[1:] if not line.startswith("#"))
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise SchemaError(f"{path.name}: missing columns {missing}")
    return list(reader)


def read_rounds_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    return _read_csv(Path(path), ROUNDS_SCHEMA, ("trial",) + ROUND_COLUMNS)


def read_trials_csv(path: str | os.PathLike) -> list[dict[str, str]]:
    return _read_csv(Path(path), TRIALS_SCHEMA, TRIAL_COLUMNS)


def write_experiment(out: ExperimentOutput, out_dir: str | os.PathLike) -> Path:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    (d / "rounds.csv").write_text(rounds_csv([(r.trial, res) for r, res in zip(out.rows, out.results)]))
    (d / "trials.csv").write_text(trials_csv(out.rows))
    (d / "summary.json").write_text(to_json({"meta": out.meta(), "summary": out.summary.to_dict()}))
    return d


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "saer-out"))


# --- acceptance-style checks -----------------------------------------------

@dataclass(frozen=True)
class Verdict:
    criterion: str
    status: str          # PASS | FAIL | SKIPPED
    detail: str

    @property
    def ok(self) -> bool:
        return self.status != "FAIL"


def _verdict(name: str, passed: bool, detail: str) -> Verdict:
    return Verdict(name, "PASS" if passed else "FAIL", detail)


def _num(s: str) -> float | None:
    return None if s == "" else float(s)


def evaluate_criteria(
    meta: Mapping[str, Any],
    trials: Sequence[Mapping[str, str]],
    rounds: Sequence[Mapping[str, str]],
    pass_rate: float = 0.99,
) -> list[Verdict]:
    """Evaluate safety, completion, burned fraction, envelope, decay and work
    criteria on an experiment's serialized outputs."""
    n, c, d = int(meta["n"]), int(meta["c"]), int(meta["d"])
    cd = c * d
    saer = meta["kind"] == "SAER"
    bound = completion_bound(n)
    max_rounds = int(meta["max_rounds"])
    n_trials = len(trials)
    need = math.ceil(pass_rate * n_trials - 1e-9)
    out: list[Verdict] = []

    worst = max([int(r["max_load"]) for r in rounds] + [int(t["max_load"]) for t in trials], default=0)
    out.append(_verdict("safety", worst <= cd, f"max load {worst} vs c*d={cd}"))

    comp = [int(t["completion_round"]) for t in trials]
    within = sum(1 for r in comp if 0 <= r <= bound)
    all_done = all(0 <= r <= max_rounds for r in comp)
    out.append(_verdict(
        "completion", within >= need and all_done,
        f"{within}/{n_trials} within {bound} rounds (need {need}); all within max_rounds={max_rounds}: {all_done}",
    ))

    by_trial: dict[int, list[Mapping[str, str]]] = {}
    for r in rounds:
        by_trial.setdefault(int(r["trial"]), []).append(r)
    full = bool(rounds) and all(r["S_t"] != "" for r in rounds)

    if not saer:
        out.append(Verdict("burned_fraction", "SKIPPED", "SAER-only criterion"))
        out.append(Verdict("envelope", "SKIPPED", "SAER-only criterion"))
    elif not full and rounds:
        out.append(Verdict("burned_fraction", "SKIPPED", "light metrics"))
        out.append(Verdict("envelope", "SKIPPED", "light metrics"))
    else:
        good = 0
        for t in trials:
            rs = by_trial.get(int(t["trial"]), [])
            if all(float(r["S_t"]) <= 0.5 for r in rs):
                good += 1
        out.append(_verdict("burned_fraction", good >= need, f"{good}/{n_trials} trials with max S_t <= 0.5"))
        theory = meta.get("theory")
        if theory is None:
            out.append(Verdict("envelope", "SKIPPED", "no valid envelope for this c"))
        else:
            clean = sum(1 for t in trials if t["envelope_violations"] in ("0", ""))
            out.append(_verdict("envelope", clean >= need, f"{clean}/{n_trials} trials inside envelope (T={theory['T']})"))

    pairs = ok_pairs = 0
    threshold = n * d / math.log(n)
    for rs in by_trial.values():
        for r in rs:
            if int(r["round"]) > bound:
                continue
            before = int(r["alive_after"]) + int(r["accepted"])
            if before >= threshold:
                pairs += 1
                ok_pairs += int(r["alive_after"]) <= 0.8 * before
    frac = ok_pairs / pairs if pairs else 1.0
    out.append(_verdict("alive_decay", frac >= pass_rate, f"{ok_pairs}/{pairs} (trial, round) pairs decayed by 4/5"))

    wpb = [float(t["work_per_ball"]) for t in trials if int(t["completion_round"]) >= 0]
    if not wpb or all(int(t["completion_round"]) == 0 for t in trials):
        out.append(Verdict("work", "SKIPPED", "no balls placed"))
    else:
        mean = float(np.mean(wpb))
        out.append(_verdict("work", 2.0 <= mean <= 8.0, f"mean W/(n d) = {mean:.4f}"))
    return out


def check_directory(path: str | os.PathLike, pass_rate: float = 0.99) -> list[Verdict]:
    d = Path(path)
    try:
        meta = json.loads((d / "summary.json").read_text())["meta"]
    except KeyError:
        raise SchemaError("summary.json: missing 'meta'") from None
    for key in ("n", "c", "d", "kind", "max_rounds"):
        if key not in meta:
            raise SchemaError(f"summary.json: missing meta field {key!r}")
    trials = read_trials_csv(d / "trials.csv")
    rounds = read_rounds_csv(d / "rounds.csv")
    return evaluate_criteria(meta, trials, rounds, pass_rate)
