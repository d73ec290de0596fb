"""Experiment runner: seeded trials, ground-truth checks, JSON-lines records, aggregate tables."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable, Iterator, Optional

import numpy as np

from .core import BitString, SubsetSpec, apply_errors, chi, entropy_H, hamming_distance, sample_spec_instance
from .edit_de import EditParams, alice_edit_sketch, bob_edit_recover, edit_adversary
from .expander import EnumerationBudgetExceeded, graph_from_seed, verify_expansion_exact
from .hamming_de import (
    Recovery,
    Stage,
    Tuning,
    alice_chi,
    alice_general,
    alice_special,
    bob_chi,
    bob_general,
    bob_special,
    ecc_decode,
    ecc_encode,
    ecc_plan,
    two_sided_wrap,
)
from .seeding import ADVERSARY, SHARED, derive_seed, rng_for

__all__ = [
    "THREADS_ENV",
    "ConfigError",
    "ExperimentConfig",
    "TrialRecord",
    "run",
    "run_hamming",
    "run_edit",
    "run_ecc",
    "verify_expanders",
    "report",
    "write_jsonl",
    "read_jsonl",
]

THREADS_ENV = "ASYMDE_THREADS"
HAMMING_PROTOCOLS = ("one-set", "general", "chi", "special", "two-sided")
PROTOCOLS = HAMMING_PROTOCOLS + ("edit", "ecc", "expander")
_MASK63 = (1 << 63) - 1


class ConfigError(ValueError):
    pass


# key -> (accepted types, default); the file is a flat JSON object
_SCHEMA: dict[str, tuple[tuple, Any]] = {
    "protocol": ((str,), None),
    "n": ((int, list), None),
    "sizes": ((list,), None),  # one list of sizes per cell
    "bounds": ((list,), None),
    "k": ((int, list), None),  # edit and expander cells
    "trials": ((int,), 100),
    "layouts": ((list,), ["random"]),
    "styles": ((list,), ["random"]),
    "errors": ((str,), "exact"),  # exact | uniform | none
    "ecc_pattern": ((str,), "random"),  # random | tail
    "k_a": ((int,), 0),
    "mode": ((str,), "tuned"),
    "c_d": ((int, float), 2.0),
    "c_m": ((int, float), 4.0),
    "c_s": ((int, float), 2.0),
    "c": ((int,), 8),
    "c_prime": ((int, float), 1.0),
    "chi_base": ((int,), 10),
    "alpha": ((int, float), 0.9),
    "allow_small_k": ((bool,), False),
    "record_time": ((bool,), True),
    "seed": ((int,), 0),
    "threads": ((int,), None),
    "output": ((str,), None),
}


@dataclass
class ExperimentConfig:
    protocol: str
    n: Any = None
    sizes: Optional[list] = None
    bounds: Optional[list] = None
    k: Any = None
    trials: int = 100
    layouts: list = field(default_factory=lambda: ["random"])
    styles: list = field(default_factory=lambda: ["random"])
    errors: str = "exact"
    ecc_pattern: str = "random"
    k_a: int = 0
    mode: str = "tuned"
    c_d: float = 2.0
    c_m: float = 4.0
    c_s: float = 2.0
    c: int = 8
    c_prime: float = 1.0
    chi_base: int = 10
    alpha: float = 0.9
    allow_small_k: bool = False
    record_time: bool = True
    seed: int = 0
    threads: Optional[int] = None
    output: Optional[str] = None

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        unknown = sorted(set(data) - set(_SCHEMA))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key, value in data.items():
            types, _ = _SCHEMA[key]
            if value is None:
                continue
            if isinstance(value, bool) and bool not in types:
                raise ConfigError(f"{key} must be {'/'.join(t.__name__ for t in types)}")
            if not isinstance(value, types):
                raise ConfigError(f"{key} must be {'/'.join(t.__name__ for t in types)}, got {type(value).__name__}")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str, overrides: Optional[dict] = None) -> "ExperimentConfig":
        with open(path) as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError("config file must hold one JSON object")
        data.update(overrides or {})
        return cls.from_dict(data)

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {', '.join(PROTOCOLS)}")
        if self.trials < 1:
            raise ConfigError("trials must be positive")
        if self.n is None:
            raise ConfigError("n is required")
        if any(not isinstance(v, int) or v < 1 for v in self.n_values):
            raise ConfigError("n must be positive integers")
        if self.errors not in ("exact", "uniform", "none"):
            raise ConfigError("errors must be exact, uniform or none")
        if self.ecc_pattern not in ("random", "tail"):
            raise ConfigError("ecc_pattern must be random or tail")
        if self.mode not in ("tuned", "conservative"):
            raise ConfigError("mode must be tuned or conservative")
        for lay in self.layouts:
            if lay not in ("random", "contiguous", "interleaved"):
                raise ConfigError(f"unknown layout {lay!r}")
        for st in self.styles:
            if st not in ("random", "clustered", "prefix"):
                raise ConfigError(f"unknown style {st!r}")
        if self.protocol in HAMMING_PROTOCOLS + ("ecc",):
            if self.sizes is None or self.bounds is None:
                raise ConfigError("sizes and bounds are required")
            if len(self.sizes) != len(self.bounds):
                raise ConfigError("sizes and bounds need one entry per cell")
            for s, b in zip(self.sizes, self.bounds):
                if not isinstance(s, list) or not isinstance(b, list) or len(s) != len(b) or not s:
                    raise ConfigError("each cell needs equal-length size and bound lists")
            if self.protocol == "one-set" and any(len(s) != 1 for s in self.sizes):
                raise ConfigError("one-set cells take a single subset")
        if self.protocol in ("edit", "expander"):
            if self.k is None:
                raise ConfigError("k is required")
            if any(not isinstance(v, int) or v < 1 for v in self.k_values):
                raise ConfigError("k must be positive integers")
        if self.protocol == "expander" and self.sizes is None:
            raise ConfigError("expander cells need sizes (the verified set size)")
        if not 4 <= self.c <= 64:
            raise ConfigError("c must be in [4, 64]")

    @property
    def n_values(self) -> list:
        return self.n if isinstance(self.n, list) else [self.n]

    @property
    def k_values(self) -> list:
        return self.k if isinstance(self.k, list) else [self.k]

    @property
    def tuning(self) -> Tuning:
        return Tuning(self.c_d, self.c_m, self.c_s, self.mode)

    @property
    def edit_params(self) -> EditParams:
        return EditParams(self.c, self.c_prime, self.tuning, self.allow_small_k)

    def worker_count(self) -> int:
        if self.threads is not None:
            return max(1, self.threads)
        return max(1, int(os.environ.get(THREADS_ENV, "1")))


@dataclass
class TrialRecord:
    protocol: str
    cell: int
    trial: int
    shared_seed: int
    adversary_seed: int
    n: int
    sizes: Optional[list]
    bounds: Optional[list]
    k: Optional[int]
    layout: Optional[str]
    success: bool
    sketch_bits: int
    wire_bits: int
    baseline_bits: float
    overhead: float
    wall_ns: int
    failure_stage: Optional[str] = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "TrialRecord":
        data = json.loads(line)
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def trial_seeds(master: int, cell: int, trial: int) -> tuple[int, int]:
    return (
        derive_seed(master, "cell", cell, "trial", trial, SHARED) & _MASK63,
        derive_seed(master, "cell", cell, "trial", trial, ADVERSARY) & _MASK63,
    )


def _overhead(bits: int, baseline: float) -> float:
    return bits / baseline if baseline > 0 else math.inf


def _stage_of(rec: Recovery, truth: BitString) -> tuple[bool, Optional[str]]:
    if not rec.ok:
        return False, rec.stage.value if rec.stage else Stage.DECODE_INCOMPLETE.value
    if rec.x != truth:
        return False, Stage.WRONG_OUTPUT.value
    return True, None


def _timed(cfg: ExperimentConfig, fn):
    t0 = time.perf_counter_ns()
    out = fn()
    return out, (time.perf_counter_ns() - t0) if cfg.record_time else 0


def _apply_error_policy(cfg: ExperimentConfig, spec: SubsetSpec, rng, layout: str):
    inst, pat = sample_spec_instance(spec, layout, rng, uniform_count=cfg.errors == "uniform")
    if cfg.errors == "none":
        pat = type(pat)(())
    return inst, pat


# -- Hamming ----------------------------------------------------------------------------


def _hamming_cells(cfg: ExperimentConfig) -> list[dict]:
    cells = []
    for n, (sizes, bounds), layout in itertools.product(cfg.n_values, zip(cfg.sizes, cfg.bounds), cfg.layouts):
        cells.append({"n": n, "sizes": list(sizes), "bounds": list(bounds), "layout": layout})
    return cells


def _hamming_trial(cfg: ExperimentConfig, cell_idx: int, cell: dict, trial: int) -> TrialRecord:
    shared, adv = trial_seeds(cfg.seed, cell_idx, trial)
    rng = rng_for(adv, "instance")
    n, sizes, bounds = cell["n"], tuple(cell["sizes"]), tuple(cell["bounds"])
    tuning = cfg.tuning
    x = BitString.random(n, rng)
    spec = SubsetSpec(n, sizes, bounds)
    if cfg.protocol == "two-sided":
        full, pat = _apply_error_policy(cfg, two_sided_wrap(spec, cfg.k_a) if cfg.k_a else spec, rng, cell["layout"])
        spec_run = full
    else:
        spec_run, pat = _apply_error_policy(cfg, spec, rng, cell["layout"])
    y = apply_errors(x, pat)
    p = cfg.protocol

    def go():
        if p in ("one-set", "general", "two-sided"):
            sk = alice_general(x, spec_run.sizes, spec_run.bounds, shared, tuning)
            return sk, bob_general(y, spec_run, sk, shared, tuning)
        if p == "chi":
            sk = alice_chi(x, sizes, bounds, shared, cfg.chi_base, tuning)
            return sk, bob_chi(y, spec_run, sk, shared, cfg.chi_base, tuning)
        sk = alice_special(x, sizes, bounds, shared, tuning=tuning)
        return sk, bob_special(y, spec_run, sk, shared, tuning=tuning)

    (sk, rec), wall = _timed(cfg, go)
    ok, stage = _stage_of(rec, x)
    baseline = entropy_H(spec_run.sizes, spec_run.bounds)
    extra = {"errors": len(pat)}
    if p == "chi":
        extra["groups"] = chi(sizes, bounds, cfg.chi_base)
    if "stage1_residual" in rec.detail:
        extra["stage1_residual"] = rec.detail["stage1_residual"]
    elif "stage1_output" in rec.detail:
        extra["stage1_residual"] = hamming_distance(rec.detail["stage1_output"], x)
    return TrialRecord(
        p, cell_idx, trial, shared, adv, n, list(sizes), list(bounds), None, cell["layout"],
        ok, sk.payload_bits, sk.size(), baseline, _overhead(sk.payload_bits, baseline), wall, stage, extra,
    )


def _pool_map(cfg: ExperimentConfig, fn, jobs: list) -> Iterator:
    workers = cfg.worker_count()
    if workers == 1:
        for job in jobs:
            yield fn(*job)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        # map yields in submission order, so output order is by (cell, trial)
        yield from pool.map(lambda job: fn(*job), jobs)


def run_hamming(cfg: ExperimentConfig) -> Iterator[TrialRecord]:
    if cfg.protocol not in HAMMING_PROTOCOLS:
        raise ConfigError(f"{cfg.protocol} is not a Hamming protocol")
    cells = _hamming_cells(cfg)
    jobs = [(cfg, ci, cell, t) for ci, cell in enumerate(cells) for t in range(cfg.trials)]
    yield from _pool_map(cfg, _hamming_trial, jobs)


# -- edit -------------------------------------------------------------------------------


def _edit_trial(cfg: ExperimentConfig, cell_idx: int, cell: dict, trial: int) -> TrialRecord:
    shared, adv = trial_seeds(cfg.seed, cell_idx, trial)
    rng = rng_for(adv, "instance")
    n, k, style = cell["n"], cell["k"], cell["style"]
    x = BitString.random(n, rng)
    y = edit_adversary(x, k, style, rng)
    params = cfg.edit_params

    def go():
        sk = alice_edit_sketch(x, k, shared, params)
        return sk, bob_edit_recover(y, k, sk.to_bytes(), shared, params)

    (sk, rec), wall = _timed(cfg, go)
    ok, stage = _stage_of(rec, x)
    baseline = k * math.log2(n / k)
    bits = sk.payload_bits
    extra = {k2: v for k2, v in rec.detail.items() if isinstance(v, (int, str))}
    return TrialRecord(
        "edit", cell_idx, trial, shared, adv, n, None, None, k, style,
        ok, bits, sk.size(), baseline, _overhead(bits, baseline), wall, stage, extra,
    )


def run_edit(cfg: ExperimentConfig) -> Iterator[TrialRecord]:
    cells = [{"n": n, "k": k, "style": s} for n, k, s in itertools.product(cfg.n_values, cfg.k_values, cfg.styles)]
    jobs = [(cfg, ci, cell, t) for ci, cell in enumerate(cells) for t in range(cfg.trials)]
    yield from _pool_map(cfg, _edit_trial, jobs)


# -- ECC --------------------------------------------------------------------------------


def _tail_pattern(spec: SubsetSpec, msg_len: int, rng) -> tuple[SubsetSpec, list]:
    """Subsets that each place their k_i errors inside the redundancy tail."""
    n = spec.n
    tail = rng.permutation(np.arange(msg_len, n))
    need = sum(spec.bounds)
    if need > tail.size:
        raise ConfigError("tail too short for the requested error count")
    head = rng.permutation(np.setdiff1d(np.arange(n), tail[:need]))
    subsets, flips, pos_t, pos_h = [], [], 0, 0
    for s, k in zip(spec.sizes, spec.bounds):
        mine = tail[pos_t : pos_t + k]
        pos_t += k
        rest = head[pos_h : pos_h + s - k]
        pos_h += s - k
        subsets.append(np.concatenate([mine, rest]))
        flips.extend(mine.tolist())
    return SubsetSpec(n, spec.sizes, spec.bounds, tuple(subsets)), flips


def _ecc_trial(cfg: ExperimentConfig, cell_idx: int, cell: dict, trial: int) -> TrialRecord:
    shared, adv = trial_seeds(cfg.seed, cell_idx, trial)
    rng = rng_for(adv, "instance")
    n, sizes, bounds = cell["n"], tuple(cell["sizes"]), tuple(cell["bounds"])
    tuning = cfg.tuning
    plan = ecc_plan(n, sizes, bounds, cfg.chi_base, tuning)
    msg = BitString.random(plan.msg_len, rng)
    spec = SubsetSpec(n, sizes, bounds)
    if cfg.ecc_pattern == "tail":
        inst, flips = _tail_pattern(spec, plan.msg_len, rng)
    else:
        inst, pat = _apply_error_policy(cfg, spec, rng, cell["layout"])
        flips = list(pat.flips)

    def go():
        cw = ecc_encode(msg, sizes, bounds, shared, n=n, base=cfg.chi_base, tuning=tuning)
        return ecc_decode(apply_errors(cw, flips), inst, shared, cfg.chi_base, tuning)

    rec, wall = _timed(cfg, go)
    ok, stage = _stage_of(rec, msg)
    groups = chi(sizes, bounds, cfg.chi_base)
    baseline = groups**2 * entropy_H(sizes, bounds)
    return TrialRecord(
        "ecc", cell_idx, trial, shared, adv, n, list(sizes), list(bounds), None, cell["layout"],
        ok, plan.r, plan.r, baseline, _overhead(plan.r, baseline), wall, stage,
        {"msg_len": plan.msg_len, "rate": plan.msg_len / n, "baseline_rate": (n - baseline) / n, "pattern": cfg.ecc_pattern},
    )


def run_ecc(cfg: ExperimentConfig) -> Iterator[TrialRecord]:
    cells = _hamming_cells(cfg)
    jobs = [(cfg, ci, cell, t) for ci, cell in enumerate(cells) for t in range(cfg.trials)]
    yield from _pool_map(cfg, _ecc_trial, jobs)


# -- expander verification --------------------------------------------------------------


def verify_expanders(cfg: ExperimentConfig) -> list[dict]:
    """Empirical failure rate of the expansion property per (n, s, k) cell.

    For each trial a graph is drawn from the plan and a random set of s left
    vertices is checked over subset sizes [1, 2k] against alpha * d.
    """
    out = []
    cell_idx = 0
    for n in cfg.n_values:
        for s_list in cfg.sizes:
            for k in cfg.k_values:
                s = s_list[0] if isinstance(s_list, list) else s_list
                if k > s or s > n:
                    continue
                plan = cfg.tuning.one_set(s, k)
                failures = 0
                for trial in range(cfg.trials):
                    shared, adv = trial_seeds(cfg.seed, cell_idx, trial)
                    g = graph_from_seed(n, plan.m, plan.d, shared, "verify")
                    S = rng_for(adv, "set").choice(n, size=s, replace=False)
                    try:
                        good = verify_expansion_exact(g, S, 1, 2 * k, cfg.alpha * plan.d, budget=None)
                    except EnumerationBudgetExceeded:  # pragma: no cover - budget disabled above
                        good = False
                    failures += not good
                out.append({
                    "cell": cell_idx, "n": n, "s": s, "k": k, "d": plan.d, "m": plan.m, "mode": plan.mode,
                    "trials": cfg.trials, "failures": failures, "failure_rate": failures / cfg.trials,
                })
                cell_idx += 1
    return out


# -- dispatch and I/O -------------------------------------------------------------------


def run(cfg: ExperimentConfig) -> Iterator[TrialRecord]:
    if cfg.protocol in HAMMING_PROTOCOLS:
        return run_hamming(cfg)
    if cfg.protocol == "edit":
        return run_edit(cfg)
    if cfg.protocol == "ecc":
        return run_ecc(cfg)
    raise ConfigError(f"{cfg.protocol} does not produce trial records")


def write_jsonl(records: Iterable[TrialRecord], fh) -> int:
    count = 0
    for rec in records:
        fh.write(rec.to_json() + "\n")
        count += 1
    return count


def read_jsonl(fh) -> list[TrialRecord]:
    return [TrialRecord.from_json(line) for line in fh if line.strip()]


REPORT_COLUMNS = ["protocol", "cell", "n", "params", "layout", "trials", "success_rate", "mean_overhead", "max_overhead", "p50_ns", "p95_ns"]


def _params(rec: TrialRecord) -> str:
    if rec.k is not None:
        return f"k={rec.k}"
    return f"s={'/'.join(map(str, rec.sizes))};k={'/'.join(map(str, rec.bounds))}"


def report(records: Iterable[TrialRecord]) -> tuple[str, str]:
    """Per-cell aggregate as (CSV text, aligned text)."""
    groups: dict = {}
    for rec in records:
        key = (rec.protocol, rec.cell, rec.n, _params(rec), rec.layout or "")
        groups.setdefault(key, []).append(rec)
    rows = []
    for key in sorted(groups):
        recs = groups[key]
        over = [r.overhead for r in recs]
        times = np.array([r.wall_ns for r in recs], dtype=np.float64)
        rows.append([
            *key, len(recs),
            f"{sum(r.success for r in recs) / len(recs):.4f}",
            f"{float(np.mean(over)):.4f}",
            f"{float(np.max(over)):.4f}",
            f"{float(np.percentile(times, 50)):.0f}",
            f"{float(np.percentile(times, 95)):.0f}",
        ])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    writer.writerows(rows)
    table = [REPORT_COLUMNS] + [[str(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in table) for i in range(len(REPORT_COLUMNS))]
    text = "\n".join("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in table) + "\n"
    return buf.getvalue(), text
