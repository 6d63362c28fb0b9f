"""Run orchestration: execute a config, score it, persist CSV rows.

The results CSV schema is fixed and every row self-describes:

    method,seed,N,steps,c,mmd,swd,mean_l2,cov_frob,runtime_ms,resamples

``c`` records the resample policy as a number: the ESS threshold, 1.0
for every-step, 0.0 for never. Runtime covers the sampler only, not
metric computation.
"""

from __future__ import annotations

import fcntl
import time
from concurrent.futures import ProcessPoolExecutor

from . import rng
from .config import METRIC_SEED_OFFSET, ConfigError, RunConfig
from .engine import RunDiagnostics, multinomial_resample, run_sampler
from .metrics import MetricsReport, mmd_rbf, moment_errors, sliced_wasserstein
from .reward import tilt_posterior

RESULT_COLUMNS = (
    "method",
    "seed",
    "N",
    "steps",
    "c",
    "mmd",
    "swd",
    "mean_l2",
    "cov_frob",
    "runtime_ms",
    "resamples",
)


def policy_as_number(cfg: RunConfig) -> float:
    policy = cfg.build_resample_policy()
    if policy.mode == "ess_threshold":
        return policy.threshold
    return 1.0 if policy.mode == "every_step" else 0.0


def score_ensemble(cfg: RunConfig, ensemble) -> MetricsReport:
    """Compare a terminal ensemble against the analytic posterior.

    The weighted cloud is first resampled multinomially to unweighted
    points (MMD/SWD assume unweighted clouds); moment errors use the
    weights directly.
    """
    settings = cfg.metrics_settings()
    target = cfg.build_target()
    reward = cfg.build_reward(target.dim, cfg.build_schedule().horizon)
    oracle = tilt_posterior(target, reward.base)

    mean_l2, cov_frob = moment_errors(
        ensemble.states, ensemble.normalized_weights(), oracle
    )

    flat = multinomial_resample(ensemble, rng.stream(cfg.seed, rng.METRICS))
    reference = oracle.sample(
        settings["n_reference"], rng.stream(cfg.seed + METRIC_SEED_OFFSET, rng.REFERENCE)
    )
    metric_gen = rng.stream(cfg.seed + METRIC_SEED_OFFSET, rng.METRICS)
    mmd = mmd_rbf(flat.states, reference, bandwidth=settings["bandwidth"])
    swd = sliced_wasserstein(
        flat.states, reference, n_proj=settings["n_projections"], gen=metric_gen
    )
    return MetricsReport(
        mmd=mmd,
        swd=swd,
        mean_l2=mean_l2,
        cov_frob=cov_frob,
        n_samples=ensemble.n,
        seed=cfg.seed,
    )


def execute_run(cfg: RunConfig) -> tuple[dict, RunDiagnostics]:
    """Run the sampler, score it, and return one results row."""
    start = time.perf_counter()
    ensemble, diag = run_sampler(cfg)
    runtime_ms = (time.perf_counter() - start) * 1e3
    report = score_ensemble(cfg, ensemble)
    row = {
        "method": cfg.method,
        "seed": cfg.seed,
        "N": cfg.n_particles,
        "steps": cfg.steps,
        "c": policy_as_number(cfg),
        "mmd": report.mmd,
        "swd": report.swd,
        "mean_l2": report.mean_l2,
        "cov_frob": report.cov_frob,
        "runtime_ms": runtime_ms,
        "resamples": diag.resample_total,
    }
    return row, diag


def format_row(row: dict) -> str:
    parts = []
    for col in RESULT_COLUMNS:
        value = row[col]
        if isinstance(value, float):
            parts.append(f"{value:.10g}")
        else:
            parts.append(str(value))
    return ",".join(parts)


def append_rows(path: str, rows: list[dict]) -> None:
    """Append rows under an exclusive lock, writing the header if new."""
    with open(path, "a") as fh:
        fcntl.flock(fh, fcntl.LOCK_EX)
        try:
            if fh.tell() == 0:
                fh.write(",".join(RESULT_COLUMNS) + "\n")
            for row in rows:
                fh.write(format_row(row) + "\n")
        finally:
            fcntl.flock(fh, fcntl.LOCK_UN)


def sweep_configs(cfg: RunConfig, axis: str, values: list) -> list[RunConfig]:
    """Expand a base config along one sweep axis."""
    if not values:
        raise ConfigError("sweep: empty value list")
    if axis == "particles":
        if any(int(v) < 1 for v in values):
            raise ConfigError("sweep: particle counts must be positive")
        return [cfg.replace(n_particles=int(v)) for v in values]
    if axis == "steps":
        if any(int(v) < 1 for v in values):
            raise ConfigError("sweep: step counts must be positive")
        return [cfg.replace(steps=int(v)) for v in values]
    if axis == "methods":
        return [cfg.replace(method=str(v)) for v in values]
    raise ConfigError(f"sweep: unknown axis {axis!r} (use particles, steps, or methods)")


def _execute_row(cfg: RunConfig) -> dict:
    return execute_run(cfg)[0]


def run_sweep(cfg: RunConfig, axis: str, values: list, jobs: int = 1) -> list[dict]:
    """One row per axis value, in axis order regardless of parallelism."""
    configs = sweep_configs(cfg, axis, values)
    if jobs <= 1 or len(configs) == 1:
        return [_execute_row(c) for c in configs]
    with ProcessPoolExecutor(max_workers=min(jobs, len(configs))) as pool:
        return list(pool.map(_execute_row, configs))
