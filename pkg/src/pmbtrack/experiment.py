"""Monte-Carlo benchmark driver.

Runs one of five filters (pmbm, m-pmb, bp-pmb, gnn-pmb, v-pmb) over the
shared four-target scenario, scores every step with GOSPA (p=2, c=10,
positions only), and aggregates RMS-GOSPA per step and across steps.

Ground truth is fixed across the Monte-Carlo runs of an experiment (one
truth seed); each run draws fresh measurements from seed + run index, so
results are independent of scheduling order when runs execute in parallel.
The worker count is controlled solely by the PMBTRACK_WORKERS environment
variable.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractViolationError, TrackingError
from .filtering import BirthModel, FilterThresholds, SensorModel, predict, update
from .gaussian import GaussianDensity
from .gospa import gospa, rms_gospa
from .pmbm import PppTerm, empty_pmbm, estimate_targets, prune_and_cap
from .projections import ProjectionReport, bp_pmb_update, gnn_pmb, to_pmb, vpmb_project
from .scenario import REGION_AREA, ScenarioTruth, generate_scenario, make_cv_model, simulate_measurements

__all__ = [
    "FILTER_KINDS",
    "DEFAULT_TRUTH_SEED",
    "TABLE1_DETECTION_PROBS",
    "ExperimentConfig",
    "ExperimentResult",
    "run_experiment",
    "run_table1",
]

FILTER_KINDS = ("pmbm", "m-pmb", "bp-pmb", "gnn-pmb", "v-pmb")

# Canonical trajectory seed shipped with the benchmark (the scenario itself
# is not part of any public dataset, so one fixed draw is the reference).
DEFAULT_TRUTH_SEED = 3

# Table row order of the benchmark summary.
TABLE1_DETECTION_PROBS = (0.9, 0.99, 0.8, 0.7)

_POSITION_IDX = (0, 2)  # [px, vx, py, vy] -> (px, py)

_BIRTH_MEAN = np.array([100.0, 0.0, 100.0, 0.0])
_BIRTH_COV = np.diag([150.0**2, 1.0, 150.0**2, 1.0])
_BIRTH_WEIGHT_FIRST = 3.0
_BIRTH_WEIGHT_LATER = 5e-3


@dataclass(frozen=True)
class ExperimentConfig:
    filter_kind: str
    p_detect: float = 0.9
    clutter_rate: float = 10.0
    n_runs: int = 100
    max_hyp: int = 200
    ppp_prune: float = 1e-5
    bern_prune: float = 1e-5
    estimate_threshold: float = 0.4
    gate_threshold: float = 20.0
    survival_prob: float = 0.99
    vpmb_gamma: float = 0.1
    vpmb_max_iter: int = 100
    gospa_order: float = 2.0
    gospa_cutoff: float = 10.0
    rng_seed: int = 0
    truth_seed: int = DEFAULT_TRUTH_SEED

    def __post_init__(self):
        if self.filter_kind not in FILTER_KINDS:
            raise ContractViolationError(
                f"unknown filter {self.filter_kind!r}; expected one of {FILTER_KINDS}"
            )
        if self.n_runs < 1 or self.max_hyp < 1:
            raise ContractViolationError("n_runs and max_hyp must be at least 1")
        if min(self.ppp_prune, self.bern_prune, self.vpmb_gamma, self.gate_threshold) < 0:
            raise ContractViolationError("thresholds must be non-negative")


@dataclass
class RunRecord:
    totals: np.ndarray
    loc_costs: np.ndarray
    missed_costs: np.ndarray
    false_costs: np.ndarray
    runtime: float
    vpmb_reports: list[ProjectionReport] = field(default_factory=list)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    totals: np.ndarray  # (n_runs, horizon)
    loc_costs: np.ndarray
    missed_costs: np.ndarray
    false_costs: np.ndarray
    runtimes: np.ndarray  # (n_runs,)
    vpmb_reports: list[list[ProjectionReport]]

    @property
    def horizon(self) -> int:
        return self.totals.shape[1]

    @property
    def per_step_rms_total(self) -> np.ndarray:
        return np.sqrt(np.mean(self.totals**2, axis=0))

    @property
    def per_step_rms_loc(self) -> np.ndarray:
        return np.sqrt(np.mean(self.loc_costs, axis=0))

    @property
    def per_step_rms_missed(self) -> np.ndarray:
        return np.sqrt(np.mean(self.missed_costs, axis=0))

    @property
    def per_step_rms_false(self) -> np.ndarray:
        return np.sqrt(np.mean(self.false_costs, axis=0))

    @property
    def summary_rms(self) -> float:
        return rms_gospa(self.totals.reshape(-1))

    @property
    def mean_runtime(self) -> float:
        return float(np.mean(self.runtimes))


def make_birth(step: int) -> BirthModel:
    weight = _BIRTH_WEIGHT_FIRST if step == 1 else _BIRTH_WEIGHT_LATER
    return BirthModel(terms=(PppTerm(weight, GaussianDensity(_BIRTH_MEAN, _BIRTH_COV)),))


def make_sensor(cfg: ExperimentConfig) -> SensorModel:
    model = make_cv_model()
    return SensorModel(
        detection_prob=cfg.p_detect,
        clutter_rate=cfg.clutter_rate,
        clutter_region_area=REGION_AREA,
        obs=model.obs,
        obs_noise=model.obs_noise,
        gate_threshold=cfg.gate_threshold,
    )


def filter_step(kind, density, step_idx, measurements, dyn, sensor, cfg, reports=None):
    """Advance one filter kind by one time step; returns the posterior density."""
    thresholds = FilterThresholds(cfg.ppp_prune, cfg.bern_prune, cfg.max_hyp)
    density = predict(density, dyn, cfg.survival_prob, make_birth(step_idx))
    if kind == "bp-pmb":
        density = bp_pmb_update(density, sensor, measurements)
        return prune_and_cap(density, cfg.ppp_prune, cfg.bern_prune, 1)
    if kind == "gnn-pmb":
        density = update(density, sensor, measurements, max_hyp=1)
        density = gnn_pmb(density)
        return prune_and_cap(density, cfg.ppp_prune, cfg.bern_prune, 1)
    density = update(density, sensor, measurements, cfg.max_hyp)
    density = prune_and_cap(density, cfg.ppp_prune, cfg.bern_prune, cfg.max_hyp)
    if kind == "m-pmb":
        density = to_pmb(density)
        density = prune_and_cap(density, cfg.ppp_prune, cfg.bern_prune, 1)
    elif kind == "v-pmb":
        density, report = vpmb_project(density, cfg.vpmb_gamma, cfg.vpmb_max_iter)
        if reports is not None:
            reports.append(report)
        density = prune_and_cap(density, cfg.ppp_prune, cfg.bern_prune, 1)
    return density


def run_single(cfg: ExperimentConfig, run_idx: int, truth: ScenarioTruth) -> RunRecord:
    dyn = make_cv_model()
    sensor = make_sensor(cfg)
    measurements = simulate_measurements(truth, sensor, cfg.rng_seed + run_idx)
    density = empty_pmbm()
    horizon = truth.horizon
    totals = np.zeros(horizon)
    loc = np.zeros(horizon)
    missed = np.zeros(horizon)
    false_ = np.zeros(horizon)
    reports: list[ProjectionReport] = []
    runtime = 0.0
    for step_idx in range(1, horizon + 1):
        tic = time.perf_counter()
        try:
            density = filter_step(
                cfg.filter_kind, density, step_idx, measurements[step_idx - 1],
                dyn, sensor, cfg, reports,
            )
            estimates = estimate_targets(density, cfg.estimate_threshold)
        except TrackingError as exc:
            raise TrackingError(
                f"filter {cfg.filter_kind} failed at run {run_idx}, step {step_idx} "
                f"(seed {cfg.rng_seed + run_idx}): {exc}"
            ) from exc
        runtime += time.perf_counter() - tic
        truth_pos = [x[list(_POSITION_IDX)] for x in truth.alive_states(step_idx)]
        est_pos = [x[list(_POSITION_IDX)] for x in estimates]
        result = gospa(truth_pos, est_pos, cfg.gospa_order, cfg.gospa_cutoff)
        t = step_idx - 1
        totals[t] = result.total
        loc[t] = result.localisation
        missed[t] = result.missed_cost
        false_[t] = result.false_cost
    return RunRecord(totals, loc, missed, false_, runtime, reports)


def _run_job(args):
    cfg, run_idx, truth = args
    return run_single(cfg, run_idx, truth)


def worker_count() -> int:
    return max(1, int(os.environ.get("PMBTRACK_WORKERS", "1")))


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    truth = generate_scenario(cfg.truth_seed)
    workers = worker_count()
    jobs = [(cfg, i, truth) for i in range(cfg.n_runs)]
    if workers > 1 and cfg.n_runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_job, jobs, chunksize=max(1, cfg.n_runs // (4 * workers))))
    else:
        records = [_run_job(job) for job in jobs]
    return ExperimentResult(
        config=cfg,
        totals=np.stack([r.totals for r in records]),
        loc_costs=np.stack([r.loc_costs for r in records]),
        missed_costs=np.stack([r.missed_costs for r in records]),
        false_costs=np.stack([r.false_costs for r in records]),
        runtimes=np.array([r.runtime for r in records]),
        vpmb_reports=[r.vpmb_reports for r in records],
    )


def run_table1(
    n_runs: int,
    seed: int,
    detection_probs=None,
    filters=None,
    base_config: ExperimentConfig | None = None,
) -> dict[tuple[float, str], ExperimentResult]:
    """All requested filters at every detection probability (shared truth)."""
    detection_probs = TABLE1_DETECTION_PROBS if detection_probs is None else detection_probs
    filters = FILTER_KINDS if filters is None else filters
    base = base_config or ExperimentConfig(filter_kind="pmbm")
    out = {}
    for pd in detection_probs:
        for kind in filters:
            cfg = replace(base, filter_kind=kind, p_detect=pd, n_runs=n_runs, rng_seed=seed)
            out[(pd, kind)] = run_experiment(cfg)
    return out


# ---------------------------------------------------------------------------
# CSV emission (6 significant digits; deterministic given config and seed)
# ---------------------------------------------------------------------------

def _g6(x: float) -> str:
    return f"{x:.6g}"


def per_step_csv(results: dict[str, ExperimentResult]) -> str:
    lines = ["step,filter,rms_total,rms_loc,rms_missed,rms_false"]
    for kind, res in results.items():
        tot, loc = res.per_step_rms_total, res.per_step_rms_loc
        mis, fal = res.per_step_rms_missed, res.per_step_rms_false
        for t in range(res.horizon):
            lines.append(
                f"{t + 1},{kind},{_g6(tot[t])},{_g6(loc[t])},{_g6(mis[t])},{_g6(fal[t])}"
            )
    return "\n".join(lines) + "\n"


def summary_csv(results: dict[str, ExperimentResult]) -> str:
    lines = ["filter,p_detect,n_runs,rms_gospa"]
    for kind, res in results.items():
        lines.append(
            f"{kind},{_g6(res.config.p_detect)},{res.config.n_runs},{_g6(res.summary_rms)}"
        )
    return "\n".join(lines) + "\n"


def table1_csv(results: dict[tuple[float, str], ExperimentResult], filters=None) -> str:
    filters = FILTER_KINDS if filters is None else filters
    lines = ["p_detect," + ",".join(filters)]
    pds = []
    for pd, _ in results:
        if pd not in pds:
            pds.append(pd)
    for pd in pds:
        cells = [_g6(results[(pd, kind)].summary_rms) for kind in filters]
        lines.append(f"{_g6(pd)}," + ",".join(cells))
    return "\n".join(lines) + "\n"


def timings_csv(results: dict[tuple[float, str], ExperimentResult]) -> str:
    lines = ["p_detect,filter,mean_runtime_s"]
    for (pd, kind), res in results.items():
        lines.append(f"{_g6(pd)},{kind},{res.mean_runtime:.4f}")
    return "\n".join(lines) + "\n"


def vpmb_diagnostics_csv(res: ExperimentResult) -> str:
    lines = ["run,step,iterations,converged,cost_trace"]
    for run_idx, reports in enumerate(res.vpmb_reports):
        for step_idx, report in enumerate(reports, start=1):
            trace = ";".join(f"{c:.17g}" for c in report.cost_trace)
            lines.append(
                f"{run_idx},{step_idx},{report.iterations_run},{int(report.converged)},{trace}"
            )
    return "\n".join(lines) + "\n"
