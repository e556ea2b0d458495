"""Privacy-loss bounds for Gaussian selection mechanisms.

Pure bounds (Report Noisy Max) and ex-post bounds (Above Threshold) are both
log-ratios of standard-normal expectations of products of Gaussian CDFs,
evaluated at the worst-case pair of neighbouring query answers. Returned
values are privacy losses, i.e. the log of the probability ratio.

RDP curves and their conversion to probabilistic DP provide the classical
baselines the pure/ex-post bounds are compared against.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import math
from typing import Callable

import numpy as np

from puregauss.errors import DomainError
from puregauss.numerics import (
    DEFAULT_QUADRATURE,
    QuadratureConfig,
    log_expectations_std_normal,
    log_ratio_std_normal,
    log_gaussian_cdf,
)

_SQRT3 = math.sqrt(3.0)


@dataclasses.dataclass(frozen=True)
class BoundedQueryParams:
    """Queries take values in ``[a, b]`` and change by at most ``delta_sens``
    between neighbouring datasets."""

    a: float = 0.0
    b: float = 1.0
    delta_sens: float = 0.0

    def __post_init__(self):
        if not self.a < self.b:
            raise DomainError(f"need a < b, got a={self.a}, b={self.b}")
        if not 0 <= self.delta_sens <= self.b - self.a:
            raise DomainError(
                f"delta_sens must lie in [0, b - a], got {self.delta_sens}")

    @property
    def c(self) -> float:
        return self.b - self.a

    def with_delta(self, delta_sens: float) -> BoundedQueryParams:
        return dataclasses.replace(self, delta_sens=delta_sens)


@dataclasses.dataclass(frozen=True)
class RnmNoise:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise DomainError(f"sigma must be > 0, got {self.sigma}")


@dataclasses.dataclass(frozen=True)
class AtNoise:
    """Above Threshold noise: threshold std, per-query std, public threshold."""

    sigma_x: float
    sigma_z: float
    rho: float

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_z > 0):
            raise DomainError(
                f"sigma_x and sigma_z must be > 0, got {self.sigma_x}, "
                f"{self.sigma_z}")
        if not math.isfinite(self.rho):
            raise DomainError(f"rho must be finite, got {self.rho}")

    @classmethod
    def standard(cls, sigma_x: float, rho: float) -> AtNoise:
        """The usual calibration with query noise ``sqrt(3)`` times larger."""
        return cls(sigma_x=sigma_x, sigma_z=_SQRT3 * sigma_x, rho=rho)


@dataclasses.dataclass(frozen=True)
class RdpCurve:
    """Renyi-DP curve ``alpha -> epsilon(alpha)`` for ``alpha > 1``.

    ``eval`` must accept a float or a numpy array of orders.
    """

    eval: Callable[[np.ndarray], np.ndarray]
    description: str = ""

    def __call__(self, alpha):
        return self.eval(alpha)


class GuaranteeKind(str, enum.Enum):
    PURE = "pure"
    APPROXIMATE = "approximate"
    PDP = "pdp"
    EX_POST = "ex_post"


@dataclasses.dataclass(frozen=True)
class DpGuarantee:
    """An ``(epsilon, delta)`` statement; ``alpha`` is set when it came from
    an RDP conversion and records the optimising order."""

    epsilon: float
    delta: float = 0.0
    kind: GuaranteeKind = GuaranteeKind.PURE
    alpha: float | None = None

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise DomainError(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0 <= self.delta <= 1:
            raise DomainError(f"delta must lie in [0, 1], got {self.delta}")
        if (self.kind == GuaranteeKind.PURE) != (self.delta == 0):
            raise DomainError("kind 'pure' holds exactly when delta == 0")


# -- Report Noisy Max -------------------------------------------------------


def _rnm_log_integrand(shift: float, d: int):
    power = d - 1

    def g(z):
        return power * log_gaussian_cdf(z - shift)

    return g


def rnm_log_expectations(
    d: int,
    q: BoundedQueryParams,
    noise: RnmNoise,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> tuple[float, float]:
    """Log numerator and log denominator of the Report Noisy Max bound.

    Numerator: ``E[Phi(Z - (c - 2*delta)/sigma)**(d-1)]``;
    denominator: the same with ``delta = 0``.
    """
    if d < 2:
        raise DomainError(f"Report Noisy Max bound needs d >= 2, got {d}")
    num = _rnm_log_integrand((q.c - 2 * q.delta_sens) / noise.sigma, d)
    den = _rnm_log_integrand(q.c / noise.sigma, d)
    log_num, log_den = log_expectations_std_normal([num, den], cfg)
    return log_num, log_den


def rnm_pure_epsilon(
    d: int,
    q: BoundedQueryParams,
    noise: RnmNoise,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> float:
    """Pure-DP epsilon of Gaussian Report Noisy Max over ``d`` bounded queries.

    The worst case puts ``d - 1`` queries at ``b - delta`` and one at
    ``a + delta`` on one dataset, and at ``b``/``a`` on its neighbour.
    """
    if d < 2:
        raise DomainError(f"Report Noisy Max bound needs d >= 2, got {d}")
    num = _rnm_log_integrand((q.c - 2 * q.delta_sens) / noise.sigma, d)
    den = _rnm_log_integrand(q.c / noise.sigma, d)
    return log_ratio_std_normal(num, den, cfg)


def rnm_pure_epsilon_d2(q: BoundedQueryParams, noise: RnmNoise) -> float:
    """Closed form for two queries: ``E[Phi(Z - u)] = Phi(-u / sqrt(2))``."""
    s = noise.sigma * math.sqrt(2.0)
    return (log_gaussian_cdf(-(q.c - 2 * q.delta_sens) / s)
            - log_gaussian_cdf(-q.c / s))


# -- Above Threshold, ex-post ------------------------------------------------


def _at_log_integrand(t: int, q: BoundedQueryParams, noise: AtNoise,
                      shift: float, mirrored: bool):
    sign = -1.0 if mirrored else 1.0
    below = noise.rho - q.b + shift
    above = -noise.rho + q.a + shift
    sx, sz = noise.sigma_x, noise.sigma_z

    def g(x):
        x = sign * x
        out = log_gaussian_cdf((-sx * x + above) / sz)
        if t > 1:
            out = out + (t - 1) * log_gaussian_cdf((sx * x + below) / sz)
        return out

    return g


def at_log_expectations(
    t: int,
    q: BoundedQueryParams,
    noise: AtNoise,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    mirrored: bool = False,
) -> tuple[float, float]:
    """Log numerator and log denominator of the ex-post Above Threshold bound.

    Worst case: the ``t - 1`` below-threshold answers sit at ``b`` and the
    halting answer at ``a`` on the neighbouring dataset. ``mirrored``
    evaluates the integrand at ``-x``; by symmetry of the normal it must give
    the same values and exists for checking that.
    """
    if t < 1:
        raise DomainError(f"stopping time must be >= 1, got {t}")
    num = _at_log_integrand(t, q, noise, q.delta_sens, mirrored)
    den = _at_log_integrand(t, q, noise, 0.0, mirrored)
    log_num, log_den = log_expectations_std_normal([num, den], cfg)
    return log_num, log_den


def at_expost_epsilon(
    t: int,
    q: BoundedQueryParams,
    noise: AtNoise,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
    mirrored: bool = False,
) -> float:
    """Ex-post privacy loss of Gaussian Above Threshold halting at step ``t``
    (transcript of ``t - 1`` below-threshold answers then one above)."""
    if t < 1:
        raise DomainError(f"stopping time must be >= 1, got {t}")
    num = _at_log_integrand(t, q, noise, q.delta_sens, mirrored)
    den = _at_log_integrand(t, q, noise, 0.0, mirrored)
    return log_ratio_std_normal(num, den, cfg)


def at_expost_epsilon_t1(q: BoundedQueryParams, noise: AtNoise) -> float:
    """Closed form for ``t = 1`` via ``E[Phi((u - s_x X)/s_z)] = Phi(u/s)``."""
    s = math.hypot(noise.sigma_x, noise.sigma_z)
    return (log_gaussian_cdf((q.a + q.delta_sens - noise.rho) / s)
            - log_gaussian_cdf((q.a - noise.rho) / s))


# -- RDP curves and conversion -----------------------------------------------


def _check_alpha(alpha):
    if np.any(np.asarray(alpha) <= 1):
        raise DomainError(f"RDP order must be > 1, got {alpha}")


def rdp_gaussian(alpha, delta_q: float, sigma: float):
    """RDP of the Gaussian mechanism: ``alpha * delta_q**2 / (2 sigma**2)``."""
    _check_alpha(alpha)
    if not sigma > 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    if delta_q < 0:
        raise DomainError(f"delta_q must be >= 0, got {delta_q}")
    return alpha * delta_q**2 / (2.0 * sigma**2)


def _check_at_rdp_conditions(noise: AtNoise) -> None:
    if noise.sigma_z < _SQRT3 * noise.sigma_x * (1 - 1e-12):
        raise DomainError(
            "Above Threshold RDP bound requires sigma_z >= sqrt(3) * sigma_x "
            f"(got sigma_x={noise.sigma_x}, sigma_z={noise.sigma_z})")
    if noise.rho < 0:
        raise DomainError(
            f"Above Threshold RDP bound requires rho >= 0 (got {noise.rho})")


def _at_rdp_log_term(noise: AtNoise) -> float:
    # log(1 + K e^r) without forming e^r, which overflows once rho/sigma_x > 26
    r = (noise.rho / noise.sigma_x)**2
    log_k = math.log(2 * _SQRT3 * math.pi * (1 + 9 * r))
    return float(np.logaddexp(0.0, log_k + r))


def rdp_gaussian_at(alpha, delta_sens: float, noise: AtNoise):
    """RDP of Gaussian Above Threshold on non-negative queries.

    Valid only for ``sigma_z >= sqrt(3) sigma_x`` and ``rho >= 0``.
    """
    _check_alpha(alpha)
    _check_at_rdp_conditions(noise)
    if delta_sens < 0:
        raise DomainError(f"delta_sens must be >= 0, got {delta_sens}")
    d2 = delta_sens**2
    linear = alpha * d2 / noise.sigma_x**2 + 2 * alpha * d2 / noise.sigma_z**2
    return linear + _at_rdp_log_term(noise) / (2.0 * (alpha - 1.0))


def gaussian_rdp_curve(delta_q: float, sigma: float) -> RdpCurve:
    rdp_gaussian(2.0, delta_q, sigma)  # validate eagerly
    return RdpCurve(
        functools.partial(_gaussian_curve_eval, delta_q=delta_q, sigma=sigma),
        f"gaussian(delta_q={delta_q!r}, sigma={sigma!r})")


def _gaussian_curve_eval(alpha, delta_q, sigma):
    return rdp_gaussian(alpha, delta_q, sigma)


def at_rdp_curve(delta_sens: float, noise: AtNoise) -> RdpCurve:
    rdp_gaussian_at(2.0, delta_sens, noise)
    return RdpCurve(
        functools.partial(rdp_gaussian_at, delta_sens=delta_sens, noise=noise),
        f"gaussian_above_threshold(delta={delta_sens!r}, {noise!r})")


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _golden_section(f, lo: float, hi: float, tol: float = 1e-12,
                    max_iter: int = 200) -> tuple[float, float]:
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        if hi - lo <= tol * max(1.0, abs(lo) + abs(hi)):
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _eval_curve(curve: RdpCurve, alphas: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(curve(alphas), dtype=float)
        if out.shape == alphas.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([float(curve(float(a))) for a in alphas])


def rdp_to_pdp(
    curve: RdpCurve,
    delta: float,
    alpha_max: float = 1e6,
    grid_points: int = 2000,
) -> DpGuarantee:
    """Converts an RDP curve to an ``(epsilon, delta)``-pDP guarantee.

    Minimises ``curve(alpha) + log(1/delta)/(alpha - 1)`` over
    ``1 + 1e-6 <= alpha <= alpha_max``: a grid log-spaced in ``alpha - 1``
    locates the basin, golden-section search on ``log(alpha - 1)`` refines it.
    """
    if not 0 < delta < 1:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")
    if not alpha_max > 1 + 1e-6:
        raise DomainError(f"alpha_max must exceed 1 + 1e-6, got {alpha_max}")
    log_inv_delta = math.log(1.0 / delta)
    u = np.linspace(math.log(1e-6), math.log(alpha_max - 1.0), grid_points)
    alphas = 1.0 + np.exp(u)
    values = _eval_curve(curve, alphas) + log_inv_delta / (alphas - 1.0)
    values[~np.isfinite(values)] = np.inf
    if not np.isfinite(values).any():
        raise DomainError(f"RDP curve {curve.description!r} is undefined "
                          "everywhere on the search grid")
    i = int(np.argmin(values))

    def objective(log_am1: float) -> float:
        a = 1.0 + math.exp(log_am1)
        v = float(curve(a)) + log_inv_delta / (a - 1.0)
        return v if math.isfinite(v) else math.inf

    best_u, best = float(u[i]), float(values[i])
    lo, hi = u[max(i - 1, 0)], u[min(i + 1, grid_points - 1)]
    ref_u, ref = _golden_section(objective, float(lo), float(hi))
    if ref < best:
        best_u, best = ref_u, ref
    return DpGuarantee(epsilon=max(best, 0.0), delta=delta,
                       kind=GuaranteeKind.PDP, alpha=1.0 + math.exp(best_u))


def classical_rnm_epsilon(d: int, delta_sens: float, sigma: float,
                          delta: float) -> DpGuarantee:
    """Baseline for Gaussian Report Noisy Max: treat the argmax as
    post-processing of a d-dimensional Gaussian mechanism with L2 sensitivity
    ``delta_sens * sqrt(d)`` and convert its RDP curve."""
    if d < 1:
        raise DomainError(f"d must be >= 1, got {d}")
    delta_q = delta_sens * math.sqrt(d)
    if delta_q == 0:
        # identical output distributions: divergence is 0 at every order
        return DpGuarantee(epsilon=0.0, delta=delta,
                           kind=GuaranteeKind.APPROXIMATE, alpha=math.inf)
    pdp = rdp_to_pdp(gaussian_rdp_curve(delta_q, sigma), delta)
    return dataclasses.replace(pdp, kind=GuaranteeKind.APPROXIMATE)


@functools.lru_cache(maxsize=256)
def at_epsilon_max(delta_sens: float, noise: AtNoise,
                   delta: float) -> DpGuarantee:
    """pDP guarantee of one Above Threshold run, from its RDP curve."""
    return rdp_to_pdp(at_rdp_curve(delta_sens, noise), delta)
