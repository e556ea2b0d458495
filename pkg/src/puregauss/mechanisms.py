"""Samplers for the selection mechanisms.

Indices returned by the offline selectors are 1-based (``1..d``). Ties are
broken towards the lowest index, which only matters on noiseless paths.

Randomness comes from ``numpy.random.Generator`` instances built from a
``SeedSequence``; anything that takes a ``seed`` is a pure function of its
inputs and that seed.
"""

from __future__ import annotations

import dataclasses
import math
from typing import Sequence

import numpy as np
from scipy import special

from puregauss.bounds import AtNoise, BoundedQueryParams
from puregauss.errors import DomainError

_AT_BLOCK = 256


def make_rng(seed, *stream: int) -> np.random.Generator:
    """Generator keyed by ``seed`` and an optional stream path."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(np.random.SeedSequence([int(seed), *stream]))


@dataclasses.dataclass(frozen=True)
class QueryVector:
    """Offline query answers, each inside ``[params.a, params.b]``."""

    values: np.ndarray
    params: BoundedQueryParams

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size == 0:
            raise DomainError("query vector must be a non-empty 1-d sequence")
        if (vals < self.params.a).any() or (vals > self.params.b).any():
            raise DomainError(
                f"query values must lie in [{self.params.a}, {self.params.b}]")
        object.__setattr__(self, "values", vals)

    @property
    def d(self) -> int:
        return self.values.size


def _check_epsilon(epsilon: float) -> None:
    if not epsilon > 0:
        raise DomainError(f"epsilon must be > 0, got {epsilon}")


def _utility_scale(qv: QueryVector, epsilon: float) -> float:
    _check_epsilon(epsilon)
    sens = qv.params.delta_sens
    if not sens > 0:
        raise DomainError("exponential-family selectors need delta_sens > 0")
    return epsilon / (2.0 * sens)


def run_rnm_gaussian(qv: QueryVector, sigma: float, seed) -> int:
    """Report Noisy Max with N(0, sigma^2) noise on each query."""
    if sigma < 0:
        raise DomainError(f"sigma must be >= 0, got {sigma}")
    noisy = qv.values + sigma * make_rng(seed).standard_normal(qv.d)
    return int(np.argmax(noisy)) + 1


def run_rnm_laplace(qv: QueryVector, epsilon: float, seed) -> int:
    """Report Noisy Max with Laplace noise of scale ``2*delta/epsilon``."""
    _check_epsilon(epsilon)
    scale = 2.0 * qv.params.delta_sens / epsilon
    noisy = qv.values + scale * make_rng(seed).laplace(size=qv.d)
    return int(np.argmax(noisy)) + 1


def exponential_mechanism_probs(qv: QueryVector,
                                epsilon: float) -> np.ndarray:
    """Selection probabilities proportional to ``exp(epsilon q_i / (2 delta))``."""
    logits = _utility_scale(qv, epsilon) * qv.values
    logits -= logits.max()
    w = np.exp(logits)
    return w / w.sum()


def exponential_mechanism(qv: QueryVector, epsilon: float, seed) -> int:
    probs = exponential_mechanism_probs(qv, epsilon)
    u = make_rng(seed).random()
    i = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    return min(i, qv.d - 1) + 1


def permute_and_flip(qv: QueryVector, epsilon: float, seed) -> int:
    """Visit indices in random order; accept ``i`` with probability
    ``exp(epsilon (q_i - q_max) / (2 delta))``. The maximiser is accepted
    with probability one, so the loop always terminates."""
    scale = _utility_scale(qv, epsilon)
    rng = make_rng(seed)
    q_max = qv.values.max()
    for i in rng.permutation(qv.d):
        if rng.random() <= math.exp(scale * (qv.values[i] - q_max)):
            return int(i) + 1
    raise AssertionError("unreachable: the maximiser is always accepted")


@dataclasses.dataclass(frozen=True)
class AtOutcome:
    """Transcript of one Above Threshold run.

    ``stop_time`` is the 1-based step that fired, or None when the stream ran
    out first. ``transcript_len`` counts emitted symbols.
    """

    stop_time: int | None
    fired: bool
    transcript_len: int

    def __post_init__(self):
        if self.fired != (self.stop_time is not None):
            raise DomainError("fired must hold exactly when stop_time is set")
        if self.fired and self.transcript_len != self.stop_time:
            raise DomainError("a fired transcript ends at its stop time")

    @property
    def below_count(self) -> int:
        """Number of below-threshold symbols emitted."""
        return self.transcript_len - 1 if self.fired else self.transcript_len


def run_above_threshold(stream: Sequence[float], params: BoundedQueryParams,
                        noise: AtNoise, seed) -> AtOutcome:
    """Gaussian Above Threshold on a finite stream.

    The first normal draw perturbs the threshold; query noise follows in
    stream order. Noise is drawn in fixed-size blocks, which leaves the draw
    sequence identical to drawing one value per step.
    """
    values = np.asarray(stream, dtype=float)
    if values.size and ((values < params.a).any()
                        or (values > params.b).any()):
        raise DomainError(f"stream values must lie in [{params.a}, {params.b}]")
    rng = make_rng(seed)
    noisy_threshold = noise.rho + noise.sigma_x * rng.standard_normal()
    for start in range(0, values.size, _AT_BLOCK):
        block = values[start:start + _AT_BLOCK]
        noisy = block + noise.sigma_z * rng.standard_normal(block.size)
        hits = np.flatnonzero(noisy >= noisy_threshold)
        if hits.size:
            t = start + int(hits[0]) + 1
            return AtOutcome(stop_time=t, fired=True, transcript_len=t)
    return AtOutcome(stop_time=None, fired=False, transcript_len=values.size)


def above_threshold_stop_times(stream: Sequence[float] | None,
                               noise: AtNoise, trials: int, seed,
                               max_steps: int) -> np.ndarray:
    """Stop times of many independent Above Threshold runs at once.

    ``stream`` of None means the all-zero stream. Runs that have not fired
    within ``max_steps`` steps (or by the end of a finite stream) get 0.
    """
    if trials < 1 or max_steps < 1:
        raise DomainError("trials and max_steps must be >= 1")
    rng = make_rng(seed)
    thresholds = noise.rho + noise.sigma_x * rng.standard_normal(trials)
    stops = np.zeros(trials, dtype=np.int64)
    active = np.arange(trials)
    values = None if stream is None else np.asarray(stream, dtype=float)
    horizon = max_steps if values is None else min(max_steps, values.size)
    for step in range(horizon):
        if active.size == 0:
            break
        q = 0.0 if values is None else values[step]
        noisy = q + noise.sigma_z * rng.standard_normal(active.size)
        fired = noisy >= thresholds[active]
        stops[active[fired]] = step + 1
        active = active[~fired]
    return stops


@dataclasses.dataclass(frozen=True)
class StoppingQuantiles:
    median: int
    p80: int
    trials: int


def worst_case_stop_times(noise: AtNoise, trials: int, seed,
                          max_steps: int) -> np.ndarray:
    """Stop times on the all-zero stream, sampled exactly.

    Given the noisy threshold ``r``, each step fires independently with
    probability ``p = Phi(-r / sigma_z)``, so the stop time is geometric and
    is drawn by inversion from one uniform per trial. Each trial consumes a
    fixed pair of draws, so sweeping ``rho`` under one seed moves every trial
    monotonically (common random numbers). Capped at ``max_steps``.
    """
    if trials < 1 or max_steps < 1:
        raise DomainError("trials and max_steps must be >= 1")
    rng = make_rng(seed)
    thresholds = noise.rho + noise.sigma_x * rng.standard_normal(trials)
    u = rng.random(trials)
    log_p = special.log_ndtr(-thresholds / noise.sigma_z)
    log_miss = np.log1p(-np.exp(log_p))  # log(1 - p)
    with np.errstate(divide="ignore", invalid="ignore"):
        steps = np.ceil(np.log1p(-u) / log_miss)
    steps = np.where(np.isfinite(steps), steps, max_steps)
    return np.clip(steps, 1, max_steps).astype(np.int64)


def simulate_worst_case_stopping(noise: AtNoise, max_steps: int, trials: int,
                                 seed) -> StoppingQuantiles:
    """Median and 80th percentile of the Above Threshold stopping time on the
    all-zero stream, the slowest-halting input for non-negative queries."""
    if trials < 100:
        raise DomainError(f"trials must be >= 100, got {trials}")
    stops = worst_case_stop_times(noise, trials, seed, max_steps)
    median = int(np.quantile(stops, 0.5, method="inverted_cdf"))
    p80 = int(np.quantile(stops, 0.8, method="inverted_cdf"))
    return StoppingQuantiles(median=median, p80=p80, trials=trials)
