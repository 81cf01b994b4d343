"""Experiment sweeps: seeded case grids, per-case reports, and summaries.

A sweep runs every solver on every (axis value, case) pair and writes one
CSV row per run. Case seeds derive from the master seed and the case index
only, so sweeping the GPU axis reuses the same user populations at every
axis point (common random numbers); the alpha sampling is pinned to the
base GPU count for the same reason.

Wall-clock solve times are recorded only when timing is enabled; with it
disabled the column is zero so that repeated runs of the same sweep are
byte-identical.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import baselines
from .dqn import TrainedPolicy, greedy_solve
from .qoe import Decision, e2e_latency, fitted_pai, objective
from .scenario import EdgeConfig, GeneratorConfig, PaiParams, Scenario, ValidationError, generate_scenario

REPORT_HEADER = ["solver", "axis", "axis_value", "case_seed", "objective",
                 "mean_pai_term", "mean_e2e_latency_s", "decision_time_s",
                 "grant_count"]

SUMMARY_HEADER = ["solver", "axis", "axis_value", "cases", "mean_objective",
                  "ci95_halfwidth"]

DEFAULT_USER_GRID = (10, 20, 30, 40, 50, 60)
DEFAULT_GPU_GRID = (2, 4, 8, 16)


@dataclass(frozen=True)
class ExperimentConfig:
    axis: str                      # "user_count" | "gpus"
    values: tuple[int, ...]
    solvers: tuple[str, ...]
    cases: int = 100
    generator: GeneratorConfig | None = None
    edge: EdgeConfig | None = None
    pai: PaiParams | None = None
    policy: TrainedPolicy | None = None
    master_seed: int = 0
    timing: bool = False

    def __post_init__(self):
        if self.axis not in ("user_count", "gpus"):
            raise ValidationError(f"axis: must be user_count or gpus, got {self.axis!r}")
        if not self.values:
            raise ValidationError("values: axis grid must be non-empty")
        if self.cases < 1:
            raise ValidationError(f"cases: must be >= 1, got {self.cases}")
        if not self.solvers:
            raise ValidationError("solvers: must name at least one solver")
        for s in self.solvers:
            if s != "dqn" and s not in baselines.SOLVERS:
                raise ValidationError(f"solvers: unknown solver {s!r}")
        if "dqn" in self.solvers and self.policy is None:
            raise ValidationError("solvers: dqn requires a policy")


@dataclass
class ReportRow:
    solver: str
    axis: str
    axis_value: int
    case_seed: int
    objective: float
    mean_pai_term: float
    mean_e2e_latency_s: float
    decision_time_s: float
    grant_count: int

    def as_list(self) -> list:
        return [self.solver, self.axis, self.axis_value, self.case_seed,
                repr(self.objective), repr(self.mean_pai_term),
                repr(self.mean_e2e_latency_s), repr(self.decision_time_s),
                self.grant_count]


def case_seed(master_seed: int, case_index: int) -> int:
    return int(np.random.SeedSequence((master_seed, case_index)).generate_state(1)[0])


def scenario_for_case(cfg: ExperimentConfig, axis_value: int, case_index: int) -> Scenario:
    generator = cfg.generator
    edge = cfg.edge if cfg.edge is not None else None
    from .scenario import default_edge  # local import avoids a cycle at module load
    edge = edge if edge is not None else default_edge()
    pai = cfg.pai if cfg.pai is not None else PaiParams()
    if generator is None:
        generator = GeneratorConfig(user_count=20)
    if cfg.axis == "user_count":
        generator = replace(generator, user_count=axis_value)
    else:
        # Pin the alpha band to the base GPU count so the user population is
        # identical at every point of the GPU axis.
        generator = replace(generator, alpha_ref_gpus=edge.gpus)
        edge = replace(edge, gpus=axis_value)
    return generate_scenario(case_seed(cfg.master_seed, case_index), generator, edge, pai)


def decision_summary(scenario: Scenario, decision: Decision) -> tuple[float, float, float]:
    """(objective, mean accuracy term, mean end-to-end latency)."""
    m = decision.grant_count
    pai_sum = 0.0
    lat_sum = 0.0
    for user, entry in zip(scenario.users, decision.entries):
        pai_sum += user.alpha * fitted_pai(entry.split, scenario.pai)
        lat_sum += e2e_latency(user, entry, m, scenario.edge, scenario.pai.n_total).total
    n = scenario.user_count
    return pai_sum - lat_sum, pai_sum / n, lat_sum / n


def _solve(solver: str, scenario: Scenario, cfg: ExperimentConfig,
           seed: int) -> Decision:
    if solver == "dqn":
        return greedy_solve(cfg.policy, scenario)
    return baselines.SOLVERS[solver](scenario, rng=np.random.default_rng(seed))


def run_sweep(cfg: ExperimentConfig) -> list[ReportRow]:
    rows: list[ReportRow] = []
    for solver in cfg.solvers:
        for axis_value in cfg.values:
            for case in range(cfg.cases):
                scenario = scenario_for_case(cfg, axis_value, case)
                seed = scenario.seed
                started = time.perf_counter() if cfg.timing else 0.0
                decision = _solve(solver, scenario, cfg, seed)
                elapsed = time.perf_counter() - started if cfg.timing else 0.0
                obj, mean_pai, mean_lat = decision_summary(scenario, decision)
                check = objective(scenario, decision)  # feasibility + value trap
                if not math.isclose(obj, check, rel_tol=1e-9, abs_tol=1e-9):
                    raise RuntimeError(
                        f"inconsistent objective for {solver} on case seed {seed}")
                rows.append(ReportRow(
                    solver=solver, axis=cfg.axis, axis_value=axis_value,
                    case_seed=seed, objective=obj, mean_pai_term=mean_pai,
                    mean_e2e_latency_s=mean_lat, decision_time_s=elapsed,
                    grant_count=decision.grant_count))
    return rows


def summarize(rows: list[ReportRow]) -> list[list]:
    """Per (solver, axis value) mean objective with a normal 95% interval."""
    grouped: dict[tuple[str, str, int], list[float]] = {}
    order: list[tuple[str, str, int]] = []
    for row in rows:
        key = (row.solver, row.axis, row.axis_value)
        if key not in grouped:
            grouped[key] = []
            order.append(key)
        grouped[key].append(row.objective)
    out = []
    for key in order:
        values = grouped[key]
        n = len(values)
        mean = sum(values) / n
        if n > 1:
            var = sum((v - mean) ** 2 for v in values) / (n - 1)
            half = 1.96 * math.sqrt(var / n)
        else:
            half = 0.0
        out.append([key[0], key[1], key[2], n, repr(mean), repr(half)])
    return out


def write_report(rows: list[ReportRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for row in rows:
            writer.writerow(row.as_list())


def write_summary(rows: list[ReportRow], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for record in summarize(rows):
            writer.writerow(record)


def read_report(path: str | Path) -> list[ReportRow]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for rec in reader:
            rows.append(ReportRow(
                solver=rec["solver"], axis=rec["axis"],
                axis_value=int(rec["axis_value"]), case_seed=int(rec["case_seed"]),
                objective=float(rec["objective"]),
                mean_pai_term=float(rec["mean_pai_term"]),
                mean_e2e_latency_s=float(rec["mean_e2e_latency_s"]),
                decision_time_s=float(rec["decision_time_s"]),
                grant_count=int(rec["grant_count"])))
    return rows
