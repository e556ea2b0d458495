"""Experiment runners that emit self-describing rows.

Every row carries the configuration that produced it. Per-trial randomness
is keyed by ``(seed, trial)`` only, never by a row's position in a grid, so
re-running a single row's configuration reproduces it.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Any, Sequence

import numpy as np

from puregauss.bounds import (
    AtNoise,
    BoundedQueryParams,
    DpGuarantee,
    RnmNoise,
    at_epsilon_max,
    at_expost_epsilon,
    classical_rnm_epsilon,
    rnm_pure_epsilon,
)
from puregauss.composition import (
    filtered_composition_baseline,
    fsrc_run,
)
from puregauss.harness.datasets import SeriesDataset
from puregauss.harness.metrics import accuracy_metric, f1_score, ground_truth_vector
from puregauss.mechanisms import (
    QueryVector,
    exponential_mechanism,
    make_rng,
    permute_and_flip,
    run_rnm_gaussian,
    run_rnm_laplace,
    simulate_worst_case_stopping,
)
from puregauss.numerics import log_gaussian_cdf, mc_expectation_std_normal

OFFLINE_ARMS = ("gaussian_pure", "gaussian_classical", "exponential",
                "permute_and_flip", "laplace")
ONLINE_ARMS = ("fsrc", "filter")


@dataclasses.dataclass(frozen=True)
class ExperimentRow:
    arm: str
    epsilon_spent: float
    accuracy_or_f1: float | None = None
    dataset: str | None = None
    sigma: float | None = None
    sigma_x: float | None = None
    sigma_z: float | None = None
    rho: float | None = None
    delta_sens: float | None = None
    delta: float | None = None
    length: int | None = None
    t: int | None = None
    seed: int | None = None
    trials: int | None = None
    budget_epsilon: float | None = None
    runs: int | None = None
    halted: bool | None = None
    publishable_spend: bool | None = None
    baseline_epsilon: float | None = None
    expost_epsilon: float | None = None
    improvement: float | None = None
    stop_median: int | None = None
    stop_p80: int | None = None

    def as_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


ROW_COLUMNS = tuple(f.name for f in dataclasses.fields(ExperimentRow))


def trial_seed(seed: int, trial: int) -> int:
    """Integer seed for trial ``trial`` of a run seeded with ``seed``."""
    return int(np.random.SeedSequence([seed, trial]).generate_state(1)[0])


def _select(arm: str, qv: QueryVector, sigma: float, epsilon: float, rng):
    if arm in ("gaussian_pure", "gaussian_classical"):
        return run_rnm_gaussian(qv, sigma, rng)
    if arm == "exponential":
        return exponential_mechanism(qv, epsilon, rng)
    if arm == "permute_and_flip":
        return permute_and_flip(qv, epsilon, rng)
    if arm == "laplace":
        return run_rnm_laplace(qv, epsilon, rng)
    raise ValueError(f"unknown offline arm {arm!r}")


def run_offline_experiment(dataset: SeriesDataset,
                           sigma_grid: Sequence[float],
                           mechanisms: Sequence[str] = OFFLINE_ARMS,
                           trials: int = 1000,
                           delta: float = 1e-5,
                           seed: int = 0) -> list[ExperimentRow]:
    """Report Noisy Max accuracy versus privacy over a noise grid.

    Both Gaussian arms share samples; they differ only in the epsilon
    attached (pure bound vs RDP conversion at ``delta``). The exponential
    mechanism, permute-and-flip and Laplace noisy max run at the Gaussian
    pure epsilon, so each row compares accuracy at matched privacy.
    """
    unknown = set(mechanisms) - set(OFFLINE_ARMS)
    if unknown:
        raise ValueError(f"unknown offline arms: {sorted(unknown)}")
    params = BoundedQueryParams(0.0, 1.0, dataset.delta_sens)
    qv = QueryVector(dataset.normalized, params)
    rows = []
    for sigma in sigma_grid:
        eps = {
            "gaussian_pure": rnm_pure_epsilon(qv.d, params, RnmNoise(sigma)),
            "gaussian_classical": classical_rnm_epsilon(
                qv.d, dataset.delta_sens, sigma, delta).epsilon,
        }
        for arm in mechanisms:
            arm_eps = eps.get(arm, eps["gaussian_pure"])
            acc = [
                accuracy_metric(qv, _select(arm, qv, sigma, arm_eps,
                                            make_rng(seed, trial)))
                for trial in range(trials)
            ]
            rows.append(
                ExperimentRow(arm=arm,
                              epsilon_spent=arm_eps,
                              accuracy_or_f1=math.fsum(acc) / trials,
                              dataset=dataset.name,
                              sigma=sigma,
                              delta_sens=dataset.delta_sens,
                              delta=delta if arm == "gaussian_classical" else
                              0.0,
                              length=qv.d,
                              seed=seed,
                              trials=trials))
    return rows


def run_online_experiment(dataset: SeriesDataset,
                          rho: float,
                          sigma_x_grid: Sequence[float],
                          budget: DpGuarantee,
                          trials: int = 50,
                          seed: int = 0,
                          per_mechanism_delta: float | None = None,
                          arms: Sequence[str] = ONLINE_ARMS
                         ) -> list[ExperimentRow]:
    """FSRC against the filtered baseline over a threshold-noise grid.

    Query noise is fixed at ``sqrt(3) * sigma_x``. Trial ``i`` uses the same
    seed for both arms. ``epsilon_spent`` is the arm's own accounting: the
    ex-post sum for FSRC and the composed filter bound for the baseline.
    """
    params = BoundedQueryParams(0.0, 1.0, dataset.delta_sens)
    truth = ground_truth_vector(dataset.normalized, rho)
    rows = []
    for sigma_x in sigma_x_grid:
        noise = AtNoise.standard(sigma_x, rho)
        for trial in range(trials):
            s = trial_seed(seed, trial)
            for arm in arms:
                run = fsrc_run if arm == "fsrc" else filtered_composition_baseline
                report = run(dataset.normalized, params, noise, budget,
                             per_mechanism_delta, s)
                f1 = f1_score(report.predicted_vector(len(dataset)), truth)
                rows.append(
                    ExperimentRow(arm=arm,
                                  epsilon_spent=report.accounted_epsilon,
                                  accuracy_or_f1=f1,
                                  dataset=dataset.name,
                                  sigma_x=sigma_x,
                                  sigma_z=noise.sigma_z,
                                  rho=rho,
                                  delta_sens=dataset.delta_sens,
                                  delta=budget.delta,
                                  length=len(dataset),
                                  seed=s,
                                  budget_epsilon=budget.epsilon,
                                  runs=len(report.outcomes),
                                  halted=report.halted,
                                  publishable_spend=report.publishable_spend))
    return rows


def run_heatmap(delta_sens: float,
                delta: float,
                sigma_x_grid: Sequence[float],
                t_grid: Sequence[int],
                rho: float,
                trials: int = 10_000,
                seed: int = 0,
                max_steps: int = 10**6) -> list[ExperimentRow]:
    """Ex-ante (RDP to pDP) minus ex-post loss on a ``(sigma_x, t)`` grid.

    Positive ``improvement`` marks cells where the ex-post charge is
    smaller. Each row also carries the worst-case stopping-time median and
    80th percentile at its ``sigma_x``; queries live in ``[0, 1]``.
    """
    params = BoundedQueryParams(0.0, 1.0, delta_sens)
    rows = []
    for sigma_x in sigma_x_grid:
        noise = AtNoise.standard(sigma_x, rho)
        baseline = at_epsilon_max(delta_sens, noise, delta).epsilon
        stops = simulate_worst_case_stopping(noise, max_steps, trials, seed)
        for t in t_grid:
            expost = at_expost_epsilon(t, params, noise)
            rows.append(
                ExperimentRow(arm="heatmap",
                              epsilon_spent=expost,
                              sigma_x=sigma_x,
                              sigma_z=noise.sigma_z,
                              rho=rho,
                              delta_sens=delta_sens,
                              delta=delta,
                              t=int(t),
                              seed=seed,
                              trials=trials,
                              baseline_epsilon=baseline,
                              expost_epsilon=expost,
                              improvement=baseline - expost,
                              stop_median=stops.median,
                              stop_p80=stops.p80))
    return rows


def stopping_overlay(sigma_x: float,
                     rho_grid: Sequence[float],
                     trials: int = 10_000,
                     seed: int = 0,
                     max_steps: int = 10**6) -> list[ExperimentRow]:
    """Worst-case stopping quantiles along a threshold sweep (one seed, so
    every trial moves monotonically with ``rho``)."""
    rows = []
    for rho in rho_grid:
        noise = AtNoise.standard(sigma_x, rho)
        stops = simulate_worst_case_stopping(noise, max_steps, trials, seed)
        rows.append(
            ExperimentRow(arm="stopping",
                          epsilon_spent=math.nan,
                          sigma_x=sigma_x,
                          sigma_z=noise.sigma_z,
                          rho=rho,
                          seed=seed,
                          trials=trials,
                          stop_median=stops.median,
                          stop_p80=stops.p80))
    return rows


def run_mc_spread(d: int,
                  delta_sens: float,
                  sigma_grid: Sequence[float],
                  n_samples: int,
                  trials: int,
                  seed: int = 0) -> list[ExperimentRow]:
    """Monte Carlo estimates of the Report Noisy Max epsilon, one row per
    ``(sigma, trial)``, to show how estimator spread grows as sigma falls.
    Trials whose denominator estimate is zero give ``inf``."""
    params = BoundedQueryParams(0.0, 1.0, delta_sens)
    rows = []
    for sigma in sigma_grid:
        shift_num = (params.c - 2 * delta_sens) / sigma
        shift_den = params.c / sigma

        def num(z, shift=shift_num):
            return np.exp((d - 1) * log_gaussian_cdf(z - shift))

        def den(z, shift=shift_den):
            return np.exp((d - 1) * log_gaussian_cdf(z - shift))

        for trial in range(trials):
            s = trial_seed(seed, trial)
            # same samples for both expectations, as a paired estimator
            n_est = mc_expectation_std_normal(num, n_samples, s).mean
            d_est = mc_expectation_std_normal(den, n_samples, s).mean
            if d_est > 0 and n_est > 0:
                eps = math.log(n_est) - math.log(d_est)
            else:
                eps = math.inf
            rows.append(
                ExperimentRow(arm="monte_carlo",
                              epsilon_spent=eps,
                              sigma=sigma,
                              delta_sens=delta_sens,
                              length=d,
                              seed=s,
                              trials=n_samples))
    return rows


def summarize(rows: Sequence[ExperimentRow], by: Sequence[str],
              field: str) -> dict[tuple, tuple[float, float, int]]:
    """Mean, standard error and count of ``field`` grouped by ``by``."""
    groups: dict[tuple, list[float]] = {}
    for row in rows:
        key = tuple(getattr(row, k) for k in by)
        groups.setdefault(key, []).append(getattr(row, field))
    out = {}
    for key, vals in groups.items():
        arr = np.asarray(vals, dtype=float)
        se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        out[key] = (float(arr.mean()), se, int(arr.size))
    return out
