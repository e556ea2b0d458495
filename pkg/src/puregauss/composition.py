"""Fully adaptive composition of Gaussian Above Threshold runs.

Two accountants drive the same restart loop over a stream:

* FSRC (filtered self-reporting composition) charges each run its ex-post
  loss and stops before a run whose worst-case pDP charge would cross the
  budget. Its spend is a function of released outputs, so it can be
  published.
* The filtered baseline charges every run the same RDP-derived
  ``(eps_t, delta_t)`` and stops via an advanced-composition style privacy
  filter. Its spend must stay internal.

Run ``k`` of either arm draws its noise from ``make_rng(seed, k)`` and starts
right after the previous run's halting step, so as long as both arms are
still running they produce identical transcripts.
"""

from __future__ import annotations

import dataclasses
import enum
import functools
import math
from typing import Any, Callable, Sequence

import numpy as np

from puregauss.bounds import (
    DEFAULT_QUADRATURE,
    AtNoise,
    BoundedQueryParams,
    DpGuarantee,
    QuadratureConfig,
    at_epsilon_max,
    at_expost_epsilon,
)
from puregauss.errors import DomainError
from puregauss.mechanisms import AtOutcome, make_rng, run_above_threshold


@dataclasses.dataclass
class PrivacyLedger:
    """Running record of released ex-post charges against a budget."""

    budget_epsilon: float
    budget_delta: float
    spent: list[float] = dataclasses.field(default_factory=list)
    halted: bool = False

    @property
    def total(self) -> float:
        return math.fsum(self.spent)

    def would_exceed(self, next_max: float) -> bool:
        return self.total + next_max >= self.budget_epsilon


@dataclasses.dataclass(frozen=True)
class GateRecord:
    """One pre-run budget check: inputs and whether it allowed the run."""

    spent_before: float
    next_charge: float
    proceed: bool


@dataclasses.dataclass
class FsrcReport:
    """Result of one composition run (either arm).

    ``starts[i]`` is the stream offset where run ``i`` began; a fired run's
    above-threshold position is ``starts[i] + stop_time - 1``.
    ``accounted_epsilon`` is what the accountant itself charges: the sum of
    ex-post losses for FSRC, the composed filter bound for the baseline.
    """

    arm: str
    outcomes: list[AtOutcome]
    starts: list[int]
    spent: list[float]
    total_spent: float
    accounted_epsilon: float
    budget: DpGuarantee
    epsilon_max: float
    halted: bool
    publishable_spend: bool
    gate_log: list[GateRecord]
    config: dict[str, Any] = dataclasses.field(default_factory=dict)
    conservative_terminal_charge: bool = False

    @property
    def restarts(self) -> int:
        return max(len(self.outcomes) - 1, 0)

    def detections(self) -> list[int]:
        """0-based stream positions reported above threshold."""
        return [s + o.stop_time - 1
                for s, o in zip(self.starts, self.outcomes) if o.fired]

    def predicted_vector(self, length: int) -> np.ndarray:
        out = np.zeros(length, dtype=np.int8)
        out[self.detections()] = 1
        return out

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "config": dict(self.config,
                           arm=self.arm,
                           budget_epsilon=self.budget.epsilon,
                           budget_delta=self.budget.delta,
                           epsilon_max=self.epsilon_max),
            "outcomes": [{
                "start": s,
                "stop_time": o.stop_time,
                "fired": o.fired,
                "transcript_len": o.transcript_len,
            } for s, o in zip(self.starts, self.outcomes)],
            "spent": list(self.spent),
            "total_spent": self.total_spent,
            "accounted_epsilon": self.accounted_epsilon,
            "halted": self.halted,
            "restarts": self.restarts,
            "publishable_spend": self.publishable_spend,
            "conservative_terminal_charge": self.conservative_terminal_charge,
        }


def _load_stream(stream: Sequence[float],
                 params: BoundedQueryParams) -> np.ndarray:
    values = np.asarray(stream, dtype=float)
    if values.ndim != 1:
        raise DomainError("stream must be one-dimensional")
    if values.size and ((values < params.a).any() or
                        (values > params.b).any()):
        raise DomainError(f"stream values must lie in [{params.a}, {params.b}]")
    return values


def _check_budget(budget: DpGuarantee, per_mechanism_delta: float) -> None:
    if not 0 < per_mechanism_delta < 1:
        raise DomainError(
            f"per_mechanism_delta must lie in (0, 1), got {per_mechanism_delta}")
    if per_mechanism_delta > budget.delta:
        raise DomainError("per_mechanism_delta cannot exceed the budget delta "
                          f"({per_mechanism_delta} > {budget.delta})")


def _expost_charge(params: BoundedQueryParams, noise: AtNoise,
                   cfg: QuadratureConfig) -> Callable[[int], float]:

    @functools.lru_cache(maxsize=None)
    def charge(t: int) -> float:
        return at_expost_epsilon(t, params, noise, cfg)

    return charge


def _compose(stream, params, noise, seed, gate, charge_of,
             on_release) -> tuple[list, list, list, bool, bool]:
    """Shared restart loop. ``gate()`` returns (proceed, record)."""
    outcomes, starts, gate_log = [], [], []
    conservative = False
    values = None
    pos = 0
    while True:
        if values is not None and pos >= values.size:
            return outcomes, starts, gate_log, False, conservative
        proceed, record = gate()
        gate_log.append(record)
        if not proceed:
            return outcomes, starts, gate_log, True, conservative
        if values is None:
            values = _load_stream(stream, params)
            if values.size == 0:
                return outcomes, starts, gate_log, False, conservative
        outcome = run_above_threshold(values[pos:], params, noise,
                                      make_rng(seed, len(outcomes)))
        if not outcome.fired:
            conservative = True
        on_release(charge_of(outcome))
        outcomes.append(outcome)
        starts.append(pos)
        pos += outcome.transcript_len


def fsrc_run(
    stream: Sequence[float],
    params: BoundedQueryParams,
    noise: AtNoise,
    budget: DpGuarantee,
    per_mechanism_delta: float | None = None,
    seed: int = 0,
    cfg: QuadratureConfig = DEFAULT_QUADRATURE,
) -> FsrcReport:
    """Filtered self-reporting composition over Above Threshold restarts.

    Before each run: halt if ``sum(spent) + eps_max >= budget.epsilon``,
    where ``eps_max`` is the run's pDP bound at ``per_mechanism_delta``
    (defaults to ``budget.delta``). After each run the ex-post loss of its
    transcript is charged. A run that exhausts the stream after ``k``
    below-threshold answers is charged as if it had fired at step ``k + 1``.

    The stream is not read until the first gate check passes.
    """
    if per_mechanism_delta is None:
        per_mechanism_delta = budget.delta
    _check_budget(budget, per_mechanism_delta)
    eps_max = at_epsilon_max(params.delta_sens, noise,
                             per_mechanism_delta).epsilon
    ledger = PrivacyLedger(budget.epsilon, budget.delta)
    expost = _expost_charge(params, noise, cfg)

    def gate():
        spent = ledger.total
        proceed = not ledger.would_exceed(eps_max)
        ledger.halted = not proceed
        return proceed, GateRecord(spent, eps_max, proceed)

    def charge_of(outcome: AtOutcome) -> float:
        return expost(outcome.below_count + 1)

    outcomes, starts, gate_log, halted, conservative = _compose(
        stream, params, noise, seed, gate, charge_of, ledger.spent.append)
    total = ledger.total
    return FsrcReport(
        arm="fsrc",
        outcomes=outcomes,
        starts=starts,
        spent=list(ledger.spent),
        total_spent=total,
        accounted_epsilon=total,
        budget=budget,
        epsilon_max=eps_max,
        halted=halted,
        publishable_spend=True,
        gate_log=gate_log,
        config=_config_echo(params, noise, per_mechanism_delta, seed),
        conservative_terminal_charge=conservative,
    )


def replay_fsrc_gate(spent: Sequence[float], epsilon_max: float,
                     budget_epsilon: float, halted: bool) -> list[bool]:
    """Recomputes FSRC gate decisions from released charges alone."""
    decisions = []
    for k in range(len(spent) + (1 if halted else 0)):
        decisions.append(math.fsum(spent[:k]) + epsilon_max < budget_epsilon)
    return decisions


def _config_echo(params, noise, per_mechanism_delta, seed) -> dict[str, Any]:
    return {
        "a": params.a,
        "b": params.b,
        "delta_sens": params.delta_sens,
        "sigma_x": noise.sigma_x,
        "sigma_z": noise.sigma_z,
        "rho": noise.rho,
        "per_mechanism_delta": per_mechanism_delta,
        "seed": seed,
    }


# -- privacy filter baseline --------------------------------------------------


class FilterDecision(enum.Enum):
    CONTINUE = "continue"
    HALT = "halt"


@dataclasses.dataclass
class FilterState:
    """History of approved ``(eps_t, delta_t)`` plus the filter's budget.

    The overall delta is split as ``delta_prime + delta_double_prime``.
    """

    budget_epsilon: float
    delta_prime: float
    delta_double_prime: float = 0.0
    eps_history: list[float] = dataclasses.field(default_factory=list)
    delta_history: list[float] = dataclasses.field(default_factory=list)

    def __post_init__(self):
        if not self.delta_prime > 0:
            raise DomainError(f"delta_prime must be > 0, got {self.delta_prime}")
        if self.delta_double_prime < 0:
            raise DomainError("delta_double_prime must be >= 0")


def filter_epsilon(eps: Sequence[float], delta_prime: float) -> float:
    """``sqrt(2 log(1/delta') sum eps^2) + sum(eps^2)/2``."""
    sq = math.fsum(e * e for e in eps)
    return math.sqrt(2.0 * math.log(1.0 / delta_prime) * sq) + 0.5 * sq


def whitehouse_continue(state: FilterState, next_eps: float,
                        next_delta: float) -> FilterDecision:
    """Whether the filter admits one more ``(next_eps, next_delta)``
    mechanism on top of ``state``'s history."""
    if next_eps < 0 or next_delta < 0:
        raise DomainError("per-mechanism epsilon and delta must be >= 0")
    eps = [*state.eps_history, next_eps]
    if state.budget_epsilon < filter_epsilon(eps, state.delta_prime):
        return FilterDecision.HALT
    if state.delta_double_prime < math.fsum([*state.delta_history,
                                             next_delta]):
        return FilterDecision.HALT
    return FilterDecision.CONTINUE


def filtered_composition_baseline(
    stream: Sequence[float],
    params: BoundedQueryParams,
    noise: AtNoise,
    budget: DpGuarantee,
    per_mechanism_delta: float | None = None,
    seed: int = 0,
    delta_double_prime: float = 0.0,
    per_run_epsilon: float | None = None,
) -> FsrcReport:
    """Above Threshold restarts gated by the ``(eps, delta)`` privacy filter.

    Each run is charged ``per_run_epsilon``, by default the run's pDP
    epsilon at ``per_mechanism_delta``. With ``delta_double_prime == 0`` the
    whole budget delta goes to ``delta'`` and per-run deltas are folded into
    it (charged as 0 to the filter); otherwise per-run deltas count against
    ``delta''``. Outputs after the filter halts are suppressed, so the loop
    stops there.
    """
    if per_mechanism_delta is None:
        per_mechanism_delta = budget.delta
    _check_budget(budget, per_mechanism_delta)
    if not 0 <= delta_double_prime < budget.delta:
        raise DomainError("delta_double_prime must lie in [0, budget.delta)")
    if per_run_epsilon is None:
        per_run_epsilon = at_epsilon_max(params.delta_sens, noise,
                                         per_mechanism_delta).epsilon
    if per_run_epsilon < 0:
        raise DomainError("per_run_epsilon must be >= 0")
    run_delta = per_mechanism_delta if delta_double_prime > 0 else 0.0
    state = FilterState(budget.epsilon, budget.delta - delta_double_prime,
                        delta_double_prime)

    def gate():
        spent = filter_epsilon(state.eps_history, state.delta_prime)
        decision = whitehouse_continue(state, per_run_epsilon, run_delta)
        proceed = decision is FilterDecision.CONTINUE
        return proceed, GateRecord(spent, per_run_epsilon, proceed)

    def on_release(charge: float) -> None:
        state.eps_history.append(charge)
        state.delta_history.append(run_delta)

    outcomes, starts, gate_log, halted, conservative = _compose(
        stream, params, noise, seed, gate, lambda _: per_run_epsilon,
        on_release)
    return FsrcReport(
        arm="filter",
        outcomes=outcomes,
        starts=starts,
        spent=list(state.eps_history),
        total_spent=math.fsum(state.eps_history),
        accounted_epsilon=filter_epsilon(state.eps_history, state.delta_prime),
        budget=budget,
        epsilon_max=per_run_epsilon,
        halted=halted,
        publishable_spend=False,
        gate_log=gate_log,
        config=dict(_config_echo(params, noise, per_mechanism_delta, seed),
                    delta_double_prime=delta_double_prime),
        conservative_terminal_charge=conservative,
    )


def max_filter_runs(eps0: float, budget_epsilon: float,
                    delta_prime: float) -> int:
    """Closed-form count of equal-epsilon runs the filter admits.

    With ``s = eps0 * sqrt(n)`` the admission condition
    ``sqrt(2L) s + s^2/2 <= budget`` solves to
    ``s <= sqrt(2L + 2 budget) - sqrt(2L)``, ``L = log(1/delta')``.
    """
    if not eps0 > 0:
        raise DomainError("eps0 must be > 0")
    two_l = 2.0 * math.log(1.0 / delta_prime)
    s_max = math.sqrt(two_l + 2.0 * budget_epsilon) - math.sqrt(two_l)
    n = math.floor((s_max / eps0)**2)
    # settle rounding at the boundary with the filter's own test
    state = FilterState(budget_epsilon, delta_prime)
    state.eps_history = [eps0] * n
    while n > 0 and filter_epsilon(state.eps_history, delta_prime) > \
            budget_epsilon:
        state.eps_history.pop()
        n -= 1
    while whitehouse_continue(state, eps0, 0.0) is FilterDecision.CONTINUE:
        state.eps_history.append(eps0)
        n += 1
    return n
