"""Log-domain Gaussian expectations.

Every bound in this package is a ratio of expectations of products of
Gaussian CDFs under a standard normal variable. Those products underflow
quickly (a CDF raised to the 364th power is a typical case), so all values
here are carried as natural logs and combined with log-sum-exp.

Two routes are provided:

* :func:`log_expectation_std_normal`: deterministic composite
  Gauss-Legendre quadrature with panel doubling.
* :func:`mc_expectation_std_normal`: plain Monte Carlo with a 99%
  confidence interval. This is an *oracle* for cross-checking the
  quadrature; it cannot resolve means below roughly 1e-300 and its relative
  error explodes long before that.
"""

from __future__ import annotations

import dataclasses
import functools
import math
from typing import Callable, Sequence

import numpy as np
from scipy import special

from puregauss.errors import DomainError, QuadratureNotConverged

LogIntegrand = Callable[[np.ndarray], np.ndarray]

_EPS_MACHINE = float(np.finfo(float).eps)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_Z99 = 2.5758293035489004  # two-sided 99% standard normal quantile
_MC_CHUNK = 1 << 20
_MAX_EXACT_COUNT = 1 << 53
_SCAN_POINTS = 2049
_SCAN_LIMIT = 1e6


@dataclasses.dataclass(frozen=True)
class QuadratureConfig:
    """Controls for :func:`log_expectation_std_normal`.

    Attributes:
        half_width: the integration window is ``mode +/- half_width`` in
            standard-normal units, centred on the mode of the full integrand.
        refinement_tol: stop when two consecutive levels differ by less than
            this (relative to ``max(1, |value|)``) in the log value.
        max_levels: maximum number of panel doublings.
        order: Gauss-Legendre nodes per panel.
        initial_panels: number of panels at the first level.
    """

    half_width: float = 12.0
    refinement_tol: float = 1e-10
    max_levels: int = 10
    order: int = 24
    initial_panels: int = 4

    def __post_init__(self):
        if not self.half_width >= 8:
            raise DomainError(f"half_width must be >= 8, got {self.half_width}")
        if not self.refinement_tol > 0:
            raise DomainError(
                f"refinement_tol must be > 0, got {self.refinement_tol}")
        if self.max_levels < 2:
            raise DomainError(f"max_levels must be >= 2, got {self.max_levels}")
        if self.order < 2 or self.initial_panels < 1:
            raise DomainError("order must be >= 2 and initial_panels >= 1")


DEFAULT_QUADRATURE = QuadratureConfig()


@dataclasses.dataclass(frozen=True)
class McEstimate:
    """Monte Carlo mean with standard error and a normal-theory 99% CI."""

    mean: float
    std_error: float
    n_samples: int
    ci99_low: float
    ci99_high: float

    def contains(self, value: float) -> bool:
        return self.ci99_low <= value <= self.ci99_high


def log_gaussian_cdf(z):
    """Natural log of the standard normal CDF, accurate deep into the left tail.

    Accepts a scalar or an array. Scalars come back as ``float``.

    Raises:
        DomainError: if any input is NaN.
    """
    arr = np.asarray(z, dtype=float)
    if np.isnan(arr).any():
        raise DomainError("log_gaussian_cdf is undefined for NaN")
    out = special.log_ndtr(arr)
    if out.ndim == 0:
        return float(out)
    return out


@functools.lru_cache(maxsize=16)
def _legendre(order: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(order)


def _composite_grid(lo: float, hi: float, panels: int, order: int):
    x, w = _legendre(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * (edges[1:] - edges[:-1])
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _log_density_mode(log_integrand: LogIntegrand) -> float | None:
    """Location of the maximum of ``g(z) - z**2/2``, to within ~1e-2.

    Scans a widening symmetric window until the maximum is interior, then
    zooms in around it. Returns None when the integrand is -inf everywhere.
    """

    def scan(lo, hi):
        zs = np.linspace(lo, hi, _SCAN_POINTS)
        vals = np.asarray(log_integrand(zs), dtype=float) - 0.5 * zs * zs
        if np.isnan(vals).any():
            raise DomainError("log-integrand returned NaN")
        return zs, vals

    limit = 64.0
    while True:
        zs, vals = scan(-limit, limit)
        if not np.isfinite(vals).any():
            if limit >= _SCAN_LIMIT:
                return None
        else:
            i = int(np.argmax(vals))
            if 0 < i < len(zs) - 1 or limit >= _SCAN_LIMIT:
                break
        limit *= 8
    while zs[1] - zs[0] > 1e-2 and 0 < i < len(zs) - 1:
        zs, vals = scan(zs[i - 1], zs[i + 1])
        i = int(np.argmax(vals))
    return float(zs[i])


def _is_close(a: float, b: float, tol: float) -> bool:
    if a == b:  # covers both -inf
        return True
    return abs(a - b) <= tol * max(1.0, abs(b))


def _log_mean_on_grid(log_integrand, nodes, weights) -> float:
    logf = np.asarray(log_integrand(nodes), dtype=float) - 0.5 * nodes * nodes
    if np.isnan(logf).any():
        raise DomainError("log-integrand returned NaN")
    if not np.isfinite(logf).any():
        return -math.inf
    return float(special.logsumexp(logf, b=weights)) - _LOG_SQRT_2PI


def _refine(log_integrands, evaluate, cfg: QuadratureConfig,
            converged=None) -> list[float]:
    """Doubles panels on one shared window until ``evaluate`` settles."""
    if converged is None:
        def converged(prev, cur):
            return all(_is_close(p, c, cfg.refinement_tol)
                       for p, c in zip(prev, cur))
    modes = [_log_density_mode(g) for g in log_integrands]
    live = [m for m in modes if m is not None]
    if not live:
        return None
    lo = min(live) - cfg.half_width
    hi = max(live) + cfg.half_width
    panels = cfg.initial_panels * math.ceil((hi - lo) / (2 * cfg.half_width))
    previous = None
    current = None
    for _ in range(cfg.max_levels):
        nodes, weights = _composite_grid(lo, hi, panels, cfg.order)
        current = evaluate(nodes, weights)
        if previous is not None and converged(previous, current):
            return current
        previous = current
        panels *= 2
    worst = max(range(len(current)),
                key=lambda i: abs(current[i] - previous[i])
                if math.isfinite(current[i]) else 0.0)
    raise QuadratureNotConverged(previous[worst], current[worst],
                                 cfg.max_levels)


def log_expectations_std_normal(
    log_integrands: Sequence[LogIntegrand],
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> list[float]:
    """Evaluates several log-expectations on one shared quadrature grid.

    The window spans every integrand's mode plus ``half_width`` on each side,
    and refinement continues until all of them have converged. Sharing nodes
    means an integrand that dominates another pointwise also dominates it
    after quadrature, so log-ratios of ordered integrands are never negative.
    """

    def evaluate(nodes, weights):
        return [_log_mean_on_grid(g, nodes, weights) for g in log_integrands]

    out = _refine(log_integrands, evaluate, cfg)
    return [-math.inf] * len(log_integrands) if out is None else out


def _log_abs_diff(log_f: np.ndarray, log_g: np.ndarray):
    """Sign and ``log|f - g|`` pointwise, from ``log f`` and ``log g``."""
    hi = np.maximum(log_f, log_g)
    lo = np.minimum(log_f, log_g)
    with np.errstate(invalid="ignore", divide="ignore"):
        mag = hi + np.log(-np.expm1(lo - hi))
    mag = np.where(np.isneginf(hi) | (lo == hi), -np.inf, mag)
    return np.where(log_f >= log_g, 1.0, -1.0), mag


def log_ratio_std_normal(
    log_num: LogIntegrand,
    log_den: LogIntegrand,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> float:
    """Returns ``log(E[exp(f(Z))] / E[exp(g(Z))])`` without cancellation.

    The difference of the two expectations is integrated directly, so a
    ratio within rounding of 1 (both expectations near 1) keeps its relative
    accuracy instead of collapsing to 0.
    """

    def evaluate(nodes, weights):
        gauss = -0.5 * nodes * nodes
        lf = np.asarray(log_num(nodes), dtype=float)
        lg = np.asarray(log_den(nodes), dtype=float)
        if np.isnan(lf).any() or np.isnan(lg).any():
            raise DomainError("log-integrand returned NaN")
        if not np.isfinite(lg).any():
            raise DomainError("denominator expectation is zero")
        log_den_mean = float(special.logsumexp(lg + gauss, b=weights))
        # difference before the density factor, which would swamp it
        sign, mag = _log_abs_diff(lf, lg)
        if np.isfinite(mag).any():
            log_diff, diff_sign = special.logsumexp(mag + gauss,
                                                    b=weights * sign,
                                                    return_sign=True)
            x = float(log_diff) - log_den_mean
            if diff_sign > 0:
                eps = float(np.logaddexp(0.0, x))
            else:
                eps = math.log1p(-math.exp(x)) if x < 0 else -math.inf
        else:
            eps = 0.0
        # rounding in log f and log g bounds how well the gap is resolved
        both = np.isfinite(lf) & np.isfinite(lg)
        scale = np.where(both, np.abs(lf) + np.abs(lg), 0.0)
        with np.errstate(divide="ignore"):
            log_noise = special.logsumexp(lg + gauss + np.log(scale),
                                          b=weights)
        noise = _EPS_MACHINE * math.exp(float(log_noise) - log_den_mean)
        return [eps, noise]

    def converged(prev, cur):
        return prev[0] == cur[0] or (abs(prev[0] - cur[0])
                <= cfg.refinement_tol * abs(cur[0]) + 64.0 * cur[1])

    def log_gap(z):
        return _log_abs_diff(np.asarray(log_num(z), dtype=float),
                             np.asarray(log_den(z), dtype=float))[1]

    # the gap can peak far from either integrand, so its mode widens the window
    out = _refine([log_num, log_den, log_gap], evaluate, cfg, converged)
    if out is None:
        raise DomainError("denominator expectation is zero")
    return out[0]


def log_expectation_std_normal(
    log_integrand: LogIntegrand,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> float:
    """Returns ``log E[exp(g(Z))]`` for ``Z ~ N(0, 1)``.

    ``log_integrand`` must be vectorised: it is called with a 1-d array of
    abscissae and must return an array of the same shape, with ``-inf``
    allowed where the integrand vanishes.

    The window is centred on the mode of ``g(z) - z**2/2`` so integrands whose
    mass sits far in a tail (large query ranges relative to the noise) are
    still resolved. Log-concave integrands, which all bounds here are, decay
    at least as fast as a Gaussian away from that mode.

    Raises:
        QuadratureNotConverged: if the last two levels still disagree.
    """
    return log_expectations_std_normal([log_integrand], cfg)[0]


def _shard_generator(seed: int, shard: int) -> np.random.Generator:
    # Philox is counter-based; keying by (seed, shard) makes shards independent
    # of how they are scheduled.
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([seed, shard])))


def mc_expectation_std_normal(
    integrand: Callable[[np.ndarray], np.ndarray],
    n_samples: int,
    seed: int,
    chunk_size: int = _MC_CHUNK,
) -> McEstimate:
    """Monte Carlo estimate of ``E[f(Z)]`` for ``Z ~ N(0, 1)``.

    Samples are drawn in chunks; chunk ``k`` uses its own Philox stream keyed
    by ``(seed, k)``, so the estimate depends only on ``(seed, n_samples,
    chunk_size)``. Chunk statistics are merged with the pairwise
    mean/variance update, which keeps the accumulation stable at 1e9 samples.
    """
    n_samples = int(n_samples)
    if n_samples < 1000:
        raise DomainError(f"n_samples must be >= 1000, got {n_samples}")
    if n_samples > _MAX_EXACT_COUNT:
        raise OverflowError("n_samples exceeds exactly representable count")
    count = 0
    mean = 0.0
    m2 = 0.0
    for shard, start in enumerate(range(0, n_samples, chunk_size)):
        size = min(chunk_size, n_samples - start)
        z = _shard_generator(seed, shard).standard_normal(size)
        vals = np.asarray(integrand(z), dtype=float)
        c_mean = float(np.mean(vals))
        c_m2 = float(np.sum((vals - c_mean)**2))
        total = count + size
        delta = c_mean - mean
        mean += delta * size / total
        m2 += c_m2 + delta * delta * count * size / total
        count = total
    variance = m2 / (count - 1)
    se = math.sqrt(max(variance, 0.0) / count)
    return McEstimate(
        mean=mean,
        std_error=se,
        n_samples=count,
        ci99_low=mean - _Z99 * se,
        ci99_high=mean + _Z99 * se,
    )
