"""Declarative experiments: grid expansion, seeded replication, CSV/JSON persistence."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from . import __version__
from .dyngraph import (
    EdgeMarkov,
    EdgeMarkovParams,
    IndependentGnp,
    Initial,
    RngStream,
    pair_count,
    stationary_probability,
    stream_hash,
    DENSE_THRESHOLD,
)
from .protocol import Instruments, RunRecord, default_max_rounds, run_protocol, source_only_run
from .stats import SummaryStats, summarize

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CSV_COLUMNS = (
    "experiment_id",
    "grid_index",
    "replica",
    "n",
    "p",
    "q",
    "initial",
    "protocol",
    "seed_stream",
    "completion_round",
    "timed_out",
    "max_rounds",
    "total_messages",
    "bootstrap_round",
    "bd_violations",
    "bd_max_ratio",
)


class ConfigError(ValueError):
    pass


class ParseError(ValueError):
    pass


class MigrationError(ValueError):
    pass


# --------------------------------------------------------------------------
# Parameter rules

_NUM = r"[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?"


def eval_p_rule(rule, n: int) -> float:
    """literal | "1/n" | "logn/n" | "<c>/n" | "n^-<a>" (natural log)."""
    if isinstance(rule, (int, float)) and not isinstance(rule, bool):
        return float(rule)
    if not isinstance(rule, str):
        raise ConfigError(f"bad p rule {rule!r}")
    r = rule.replace(" ", "")
    if re.fullmatch(_NUM, r):
        return float(r)
    if r == "logn/n":
        return math.log(n) / n
    m = re.fullmatch(rf"({_NUM})/n", r)
    if m:
        return float(m.group(1)) / n
    m = re.fullmatch(rf"n\^-({_NUM})", r)
    if m:
        return n ** -float(m.group(1))
    raise ConfigError(f"unknown p rule {rule!r}")


def eval_q_rule(rule, n: int, p: float) -> float:
    """literal | "1-p" | "1/log n" | "<c>/log n"."""
    if isinstance(rule, (int, float)) and not isinstance(rule, bool):
        return float(rule)
    if not isinstance(rule, str):
        raise ConfigError(f"bad q rule {rule!r}")
    r = rule.replace(" ", "")
    if re.fullmatch(_NUM, r):
        return float(r)
    if r == "1-p":
        return 1.0 - p
    m = re.fullmatch(rf"({_NUM})/logn", r)
    if m:
        return float(m.group(1)) / math.log(n)
    raise ConfigError(f"unknown q rule {rule!r}")


# --------------------------------------------------------------------------
# Config


@dataclass(frozen=True)
class ExperimentConfig:
    experiment_id: str
    n: tuple[int, ...]
    p: tuple[Any, ...]
    q: tuple[Any, ...] = ("1-p",)
    model: str = "edge_markov"  # or "independent_gnp"
    initial: str = "stationary"
    protocol: str = "push"  # push | flooding | source_only
    replicas: int = 1
    master_seed: int = 0
    max_rounds: int | None = None  # None: protocol default
    source: int = 0
    initial_informed: int | str = 1  # count, or "ceil_ln_n"
    instruments: dict = field(default_factory=dict)
    memory_budget_bytes: int = 2**30

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "experiment_id" not in d or "n" not in d or "p" not in d:
            raise ConfigError("config needs experiment_id, n and p")
        d = dict(d)
        for key in ("n", "p", "q"):
            if key in d:
                v = d[key]
                d[key] = tuple(v) if isinstance(v, (list, tuple)) else (v,)
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        for key in ("n", "p", "q"):
            d[key] = list(d[key])
        return d

    def instruments_obj(self) -> Instruments:
        inst = self.instruments
        unknown = set(inst) - {"bounded_degree", "bootstrap", "switch_count"}
        if unknown:
            raise ConfigError(f"unknown instruments: {sorted(unknown)}")
        bd = inst.get("bounded_degree", False)
        bd_rounds = None
        if isinstance(bd, dict):
            bd_rounds = bd.get("rounds")
            bd = True
        boot = inst.get("bootstrap", {})
        gamma = boot.get("gamma", 10.0) if isinstance(boot, dict) else 10.0
        return Instruments(bool(bd), bd_rounds, float(gamma), bool(inst.get("switch_count", False)))

    def bootstrap_horizon(self) -> float:
        boot = self.instruments.get("bootstrap", {})
        return float(boot.get("horizon", 80.0)) if isinstance(boot, dict) else 80.0

    def validate(self) -> None:
        if self.replicas < 1:
            raise ConfigError("replicas must be >= 1")
        if self.model not in ("edge_markov", "independent_gnp"):
            raise ConfigError(f"unknown model {self.model!r}")
        if self.protocol not in ("push", "flooding", "source_only"):
            raise ConfigError(f"unknown protocol {self.protocol!r}")
        if self.model == "independent_gnp" and list(self.q) != ["1-p"]:
            raise ConfigError("independent_gnp fixes q = 1-p")
        if self.max_rounds is not None and int(self.max_rounds) < 1:
            raise ConfigError("max_rounds must be >= 1")
        try:
            Initial.parse(self.initial)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.instruments_obj()
        for point in self.grid():
            n, p, q = point
            if n < 1 or not 0 <= self.source < n:
                raise ConfigError(f"invalid n={n} for source {self.source}")
            try:
                if self.model == "edge_markov":
                    EdgeMarkovParams(n, p, q, Initial.parse(self.initial))
                else:
                    IndependentGnp(n, p)
            except ValueError as exc:
                raise ConfigError(f"grid point n={n}, p={p}, q={q}: {exc}") from exc
            need = _memory_estimate(n, p, q)
            if need > self.memory_budget_bytes:
                raise ConfigError(f"n={n} needs ~{need} bytes, budget {self.memory_budget_bytes}")

    def grid(self) -> list[tuple[int, float, float]]:
        out = []
        for n in self.n:
            for pr in self.p:
                p = eval_p_rule(pr, int(n))
                for qr in self.q:
                    out.append((int(n), p, eval_q_rule(qr, int(n), p)))
        return out


def _memory_estimate(n: int, p: float, q: float) -> int:
    total = pair_count(n)
    dens = p / (p + q) if p + q > 0 else 1.0
    if dens > DENSE_THRESHOLD or p > DENSE_THRESHOLD:
        return 9 * total
    return int(48 * total * max(dens, p) + 64 * n)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return ExperimentConfig.from_dict(raw)


# --------------------------------------------------------------------------
# Tasks


@dataclass(frozen=True)
class Task:
    index: int
    grid_index: int
    replica: int
    n: int
    p: float
    q: float
    stream_id: int


def expand_grid(config: ExperimentConfig) -> list[Task]:
    tasks = []
    for gi, (n, p, q) in enumerate(config.grid()):
        for r in range(config.replicas):
            sid = stream_hash(config.experiment_id, gi, r)
            tasks.append(Task(len(tasks), gi, r, n, p, q, sid))
    return tasks


def _initial_count(config: ExperimentConfig, n: int) -> int:
    k = config.initial_informed
    if k == "ceil_ln_n":
        return max(1, math.ceil(math.log(n)))
    return int(k)


def run_task(config: ExperimentConfig, task: Task) -> RunRecord:
    rng = RngStream(config.master_seed, task.stream_id)
    if config.model == "edge_markov":
        model = EdgeMarkov(EdgeMarkovParams(task.n, task.p, task.q, Initial.parse(config.initial)))
    else:
        model = IndependentGnp(task.n, task.p)
    inst = config.instruments_obj()
    if config.protocol == "source_only":
        target = min(task.n, math.ceil(inst.bootstrap_gamma * math.log(task.n))) if task.n > 1 else 1
        horizon = config.max_rounds or max(1, math.ceil(config.bootstrap_horizon() * math.log(max(task.n, 2))))
        return source_only_run(model, config.source, target, horizon, rng)
    max_rounds = config.max_rounds or default_max_rounds(task.n, task.p)
    return run_protocol(
        model,
        config.protocol,
        config.source,
        max_rounds,
        rng,
        instruments=inst,
        initial_informed=_initial_count(config, task.n),
    )


def _run_packed(args):
    return run_task(*args)


# --------------------------------------------------------------------------
# Results


@dataclass
class ResultRow:
    experiment_id: str
    grid_index: int
    replica: int
    n: int
    p: float
    q: float
    initial: str
    protocol: str
    seed_stream: int
    completion_round: int | None
    timed_out: bool
    max_rounds: int
    total_messages: int
    bootstrap_round: int | None
    bd_violations: int | None
    bd_max_ratio: float | None

    @classmethod
    def from_record(cls, experiment_id: str, task: Task, rec: RunRecord) -> "ResultRow":
        return cls(
            experiment_id,
            task.grid_index,
            task.replica,
            rec.n,
            rec.p,
            rec.q,
            rec.initial,
            rec.protocol,
            task.stream_id,
            rec.completion_round,
            rec.timed_out,
            rec.max_rounds,
            rec.messages_total,
            rec.bootstrap_round,
            rec.bd_violations,
            rec.bd_max_ratio,
        )

    def to_csv_fields(self) -> list[str]:
        def fmt(v):
            if v is None:
                return ""
            if isinstance(v, bool):
                return "1" if v else "0"
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return [fmt(getattr(self, c)) for c in CSV_COLUMNS]

    @classmethod
    def from_csv_fields(cls, values: list[str]) -> "ResultRow":
        def opt(v, kind):
            return None if v == "" else kind(v)

        (eid, gi, rep, n, p, q, init, proto, sid, comp, to, mr, msgs, boot, bdv, bdr) = values
        return cls(
            eid,
            int(gi),
            int(rep),
            int(n),
            float(p),
            float(q),
            init,
            proto,
            int(sid),
            opt(comp, int),
            to == "1",
            int(mr),
            int(msgs),
            opt(boot, int),
            opt(bdv, int),
            opt(bdr, float),
        )


@dataclass
class GridSummary:
    grid_index: int
    n: int
    p: float
    q: float
    stats: SummaryStats

    def to_dict(self) -> dict:
        return {"grid_index": self.grid_index, "n": self.n, "p": self.p, "q": self.q, "stats": self.stats.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "GridSummary":
        return cls(d["grid_index"], d["n"], d["p"], d["q"], SummaryStats.from_dict(d["stats"]))


@dataclass
class ResultSet:
    config: dict
    rows: list[ResultRow]
    summaries: list[GridSummary]
    tool_version: str = __version__
    wall_clock_s: float | None = None
    records: list[RunRecord] | None = field(default=None, repr=False, compare=False)


def summarize_rows(rows: list[ResultRow]) -> list[GridSummary]:
    groups: dict[int, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault(r.grid_index, []).append(r)
    out = []
    for gi in sorted(groups):
        grp = groups[gi]
        out.append(GridSummary(gi, grp[0].n, grp[0].p, grp[0].q, summarize(grp)))
    return out


def execute(config: ExperimentConfig, parallelism: int | None = None, keep_records: bool = True) -> ResultSet:
    """Run every task; output depends only on (config, master_seed), never on scheduling."""
    config.validate()
    tasks = expand_grid(config)
    if parallelism is None:
        parallelism = int(os.environ.get("DYNPUSH_THREADS", 0)) or os.cpu_count() or 1
    start = time.perf_counter()
    if parallelism <= 1 or len(tasks) <= 1:
        records = [run_task(config, t) for t in tasks]
    else:
        chunk = max(1, len(tasks) // (4 * parallelism))
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            records = list(pool.map(_run_packed, [(config, t) for t in tasks], chunksize=chunk))
    elapsed = time.perf_counter() - start
    rows = [ResultRow.from_record(config.experiment_id, t, r) for t, r in zip(tasks, records)]
    log.info("experiment %s: %d runs in %.2fs", config.experiment_id, len(rows), elapsed)
    return ResultSet(
        config=config.to_dict(),
        rows=rows,
        summaries=summarize_rows(rows) if rows else [],
        wall_clock_s=elapsed,
        records=records if keep_records else None,
    )


# --------------------------------------------------------------------------
# Persistence


def _paths(base) -> tuple[Path, Path, Path]:
    base = Path(base)
    if base.suffix == ".csv":
        stem = base.with_suffix("")
    else:
        stem = base
    return stem.with_suffix(".csv"), stem.with_suffix(".json"), stem.with_suffix(".timing.json")


def persist(result: ResultSet, path) -> Path:
    """Write ``<path>.csv`` and the ``<path>.json`` sidecar; returns the CSV path.

    Wall-clock time goes to a separate ``.timing.json`` so the CSV and the
    sidecar are byte-identical across reruns.
    """
    csv_path, meta_path, timing_path = _paths(path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in result.rows:
        w.writerow(row.to_csv_fields())
    csv_path.write_text(buf.getvalue())
    meta = {
        "schema_version": SCHEMA_VERSION,
        "tool_version": result.tool_version,
        "config": result.config,
        "row_count": len(result.rows),
        "summaries": [s.to_dict() for s in result.summaries],
    }
    meta_path.write_text(json.dumps(meta, indent=2, sort_keys=True, allow_nan=True) + "\n")
    if result.wall_clock_s is not None:
        timing_path.write_text(json.dumps({"wall_clock_s": result.wall_clock_s}) + "\n")
    return csv_path


def read_rows(csv_path) -> list[ResultRow]:
    rows = []
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CSV_COLUMNS:
            raise ParseError(f"{csv_path}: line 1: unexpected header")
        for values in reader:
            line = reader.line_num
            if len(values) != len(CSV_COLUMNS):
                raise ParseError(f"{csv_path}: line {line}: expected {len(CSV_COLUMNS)} fields, got {len(values)}")
            try:
                rows.append(ResultRow.from_csv_fields(values))
            except ValueError as exc:
                raise ParseError(f"{csv_path}: line {line}: {exc}") from exc
    return rows


def load(path) -> ResultSet:
    csv_path, meta_path, timing_path = _paths(path)
    rows = read_rows(csv_path)
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else None
    if meta is None:
        return ResultSet({}, rows, summarize_rows(rows) if rows else [], tool_version="unknown")
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise MigrationError(f"{meta_path}: schema_version {meta.get('schema_version')!r}, expected {SCHEMA_VERSION}")
    wall = None
    if timing_path.exists():
        wall = json.loads(timing_path.read_text()).get("wall_clock_s")
    return ResultSet(
        config=meta["config"],
        rows=rows,
        summaries=[GridSummary.from_dict(s) for s in meta["summaries"]],
        tool_version=meta["tool_version"],
        wall_clock_s=wall,
    )
