"""Acceptance suite: one test per criterion, each recording a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v``; the per-criterion summary is
printed at the end of the session.
"""

import math
import time

import numpy as np
import pytest

from puregauss.bounds import (
    AtNoise,
    BoundedQueryParams,
    DpGuarantee,
    GuaranteeKind,
    RnmNoise,
    at_log_expectations,
    at_expost_epsilon,
    rnm_log_expectations,
    rnm_pure_epsilon,
)
from puregauss.composition import (
    filtered_composition_baseline,
    fsrc_run,
    replay_fsrc_gate,
)
from puregauss.harness.datasets import generate_synthetic_series
from puregauss.harness.experiments import run_heatmap, run_online_experiment
from puregauss.mechanisms import make_rng, simulate_worst_case_stopping
from puregauss.numerics import log_gaussian_cdf, mc_expectation_std_normal

SQRT3 = math.sqrt(3.0)


def rel_err(got, ref):
    if got == ref:
        return 0.0
    return abs(got - ref) / abs(ref)


def rnm_grid(n=100, seed=101):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0.2, 5.0, n)
    delta = c * rng.uniform(0.0, 0.5, n)
    sigma = 10**rng.uniform(-2, 0.7, n)
    return list(zip(delta, sigma, c))


def at_grid(n=100, seed=202):
    rng = np.random.default_rng(seed)
    a = rng.uniform(-1.0, 0.5, n)
    b = a + rng.uniform(0.5, 3.0, n)
    delta = (b - a) * rng.uniform(0.0, 0.2, n)
    sx = 10**rng.uniform(-2, 0, n)
    sz = sx * rng.uniform(1.0, 3.0, n)
    rho = rng.uniform(a - 0.5, b + 0.5)
    return list(zip(a, b, delta, sx, sz, rho))


def closed_rnm_d2(delta, sigma, c):
    s = sigma * math.sqrt(2)
    return log_gaussian_cdf(-(c - 2 * delta) / s) - log_gaussian_cdf(-c / s)


def closed_at_t1(a, delta, sx, sz, rho):
    s = math.hypot(sx, sz)
    return log_gaussian_cdf((a + delta - rho) / s) - log_gaussian_cdf(
        (a - rho) / s)


def test_01_rnm_two_query_closed_form(acceptance):
    start = time.perf_counter()
    worst, cell = 0.0, None
    for delta, sigma, c in rnm_grid():
        got = rnm_pure_epsilon(2, BoundedQueryParams(0.0, c, delta),
                               RnmNoise(sigma))
        err = rel_err(got, closed_rnm_d2(delta, sigma, c))
        if err > worst:
            worst, cell = err, (delta, sigma, c)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 5
    acceptance(1, ok, f"max rel err {worst:.2e} at (delta, sigma, c)={cell}, "
               f"{elapsed:.2f}s")
    assert ok


def test_02_at_first_step_closed_form(acceptance):
    start = time.perf_counter()
    worst, cell = 0.0, None
    for a, b, delta, sx, sz, rho in at_grid():
        got = at_expost_epsilon(1, BoundedQueryParams(a, b, delta),
                                AtNoise(sx, sz, rho))
        err = rel_err(got, closed_at_t1(a, delta, sx, sz, rho))
        if err > worst:
            worst, cell = err, (a, b, delta, sx, sz, rho)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-8 and elapsed < 5
    acceptance(2, ok, f"max rel err {worst:.2e} at {cell}, {elapsed:.2f}s")
    assert ok


def test_03_zero_sensitivity(acceptance):
    worst = 0.0
    for _, sigma, c in rnm_grid():
        for d in (2, 10, 500):
            eps = rnm_pure_epsilon(d, BoundedQueryParams(0.0, c, 0.0),
                                   RnmNoise(sigma))
            worst = max(worst, abs(eps))
    for a, b, _, sx, sz, rho in at_grid():
        for t in (1, 7, 100):
            eps = at_expost_epsilon(t, BoundedQueryParams(a, b, 0.0),
                                    AtNoise(sx, sz, rho))
            worst = max(worst, abs(eps))
    ok = worst <= 1e-12
    acceptance(3, ok, f"max |eps| at delta=0: {worst:.1e}")
    assert ok


@pytest.mark.slow
def test_04_monte_carlo_agreement(acceptance):
    start = time.perf_counter()
    n = 10**8
    lines, ok = [], True

    q = BoundedQueryParams(0.0, 1.0, 0.01)
    sigma, d = 0.3, 50
    log_num, log_den = rnm_log_expectations(d, q, RnmNoise(sigma))
    for label, shift, log_val, seed in (
            ("rnm num", (1 - 0.02) / sigma, log_num, 41),
            ("rnm den", 1 / sigma, log_den, 42)):
        est = mc_expectation_std_normal(
            lambda z, s=shift: np.exp((d - 1) * log_gaussian_cdf(z - s)), n,
            seed)
        inside = est.contains(math.exp(log_val))
        ok &= inside
        lines.append(f"{label} {'in' if inside else 'OUT'} "
                     f"[{est.ci99_low:.4g}, {est.ci99_high:.4g}]")

    q = BoundedQueryParams(0.0, 1.0, 1e-3)
    noise = AtNoise.standard(0.15, 0.6)
    t = 10
    log_num, log_den = at_log_expectations(t, q, noise)
    sx, sz, rho = noise.sigma_x, noise.sigma_z, noise.rho
    for label, shift, log_val, seed in (("at num", 1e-3, log_num, 43),
                                        ("at den", 0.0, log_den, 44)):

        def f(x, s=shift):
            g = (t - 1) * log_gaussian_cdf((sx * x + rho - 1 + s) / sz)
            g = g + log_gaussian_cdf((-sx * x - rho + s) / sz)
            return np.exp(g)

        est = mc_expectation_std_normal(f, n, seed)
        inside = est.contains(math.exp(log_val))
        ok &= inside
        lines.append(f"{label} {'in' if inside else 'OUT'} "
                     f"[{est.ci99_low:.4g}, {est.ci99_high:.4g}]")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 300
    acceptance(4, ok, "; ".join(lines) + f"; {elapsed:.0f}s")
    assert ok


def test_05_mirrored_integrand(acceptance):
    rng = np.random.default_rng(505)
    worst, cell = 0.0, None
    for _ in range(50):
        t = int(rng.integers(1, 200))
        delta = float(rng.uniform(0, 0.1))
        sx = float(10**rng.uniform(-1.5, 0))
        rho = float(rng.uniform(-0.5, 1.5))
        q = BoundedQueryParams(0.0, 1.0, delta)
        noise = AtNoise.standard(sx, rho)
        a = at_expost_epsilon(t, q, noise)
        b = at_expost_epsilon(t, q, noise, mirrored=True)
        err = rel_err(b, a) if a != 0 else abs(b)
        if err > worst:
            worst, cell = err, (t, delta, sx, rho)
    ok = worst <= 1e-10
    acceptance(5, ok, f"max rel diff {worst:.1e} at (t, delta, sx, rho)="
               f"{cell}")
    assert ok


def test_06_threshold_sweep_shape(acceptance):
    q = BoundedQueryParams(0.0, 1.0, 0.001)
    rhos = np.round(np.arange(0.0, 1.0001, 0.05), 10)
    eps2 = [at_expost_epsilon(2, q, AtNoise.standard(0.15, r)) for r in rhos]
    best = float(rhos[int(np.argmin(eps2))])
    tail = [r for r in rhos if r >= 0.6 - 1e-9]
    eps32 = [at_expost_epsilon(32, q, AtNoise.standard(0.15, r)) for r in tail]
    rises = [(tail[i], tail[i + 1]) for i in range(len(tail) - 1)
             if eps32[i + 1] > eps32[i]]
    ok = abs(best - 0.5) <= 0.05 + 1e-9 and not rises
    acceptance(6, ok, f"t=2 argmin rho={best}; t=32 increases on {rises}")
    assert ok


def test_07_stopping_and_improvement_region(acceptance):
    start = time.perf_counter()
    rhos = [round(0.1 * k, 1) for k in range(1, 10)]
    medians = [simulate_worst_case_stopping(AtNoise.standard(0.15, r), 10**7,
                                            10_000, 7).median for r in rhos]
    monotone = all(a <= b for a, b in zip(medians, medians[1:]))

    rows = run_heatmap(1e-3, 1e-5, [0.05, 0.1, 0.15, 0.2, 0.3],
                       [1, 2, 4, 8, 16, 64, 256, 1024], 0.5, trials=1000,
                       seed=7)
    better = [(r.sigma_x, r.t) for r in rows if r.improvement > 0]
    elapsed = time.perf_counter() - start
    ok = monotone and bool(better) and elapsed < 120
    acceptance(7, ok, f"medians {medians}; {len(better)}/{len(rows)} cells "
               f"with ex-post < baseline, e.g. {better[:3]}; {elapsed:.1f}s")
    assert ok


def _monotone_failures(xs, ys, increasing=True):
    bad = []
    for i in range(len(xs) - 1):
        step = ys[i + 1] - ys[i]
        if (step < 0) if increasing else (step > 0):
            bad.append((xs[i], xs[i + 1], ys[i], ys[i + 1]))
    return bad


def test_08_monotonicity(acceptance):
    failures = {}
    deltas = np.linspace(0.0, 0.5, 50)
    eps = [rnm_pure_epsilon(10, BoundedQueryParams(0, 1, x), RnmNoise(0.3))
           for x in deltas]
    failures["rnm vs delta"] = _monotone_failures(deltas, eps)

    ds = np.unique(np.geomspace(2, 5000, 50).astype(int))
    eps = [rnm_pure_epsilon(int(d), BoundedQueryParams(0, 1, 0.01),
                            RnmNoise(0.3)) for d in ds]
    failures["rnm vs d"] = _monotone_failures(ds, eps)

    sigmas = np.geomspace(0.01, 5.0, 50)
    eps = [rnm_pure_epsilon(10, BoundedQueryParams(0, 1, 0.05), RnmNoise(s))
           for s in sigmas]
    failures["rnm vs sigma"] = _monotone_failures(sigmas, eps, False)

    noise = AtNoise.standard(0.15, 0.5)
    deltas = np.linspace(0.0, 0.2, 50)
    eps = [at_expost_epsilon(5, BoundedQueryParams(0, 1, x), noise)
           for x in deltas]
    failures["at vs delta"] = _monotone_failures(deltas, eps)

    ts = np.arange(1, 51)
    for rho in (1.0, 1.3):
        noise = AtNoise.standard(0.15, rho)
        eps = [at_expost_epsilon(int(t), BoundedQueryParams(0, 1, 0.01),
                                 noise) for t in ts]
        failures[f"at vs t (rho={rho})"] = _monotone_failures(ts, eps)

    bad = {k: v[:3] for k, v in failures.items() if v}
    ok = not bad
    acceptance(8, ok, "all suites monotone" if ok else f"violations {bad}")
    assert ok, bad


def test_09_statistical_audit(acceptance):
    start = time.perf_counter()
    sigma, delta = 0.5, 0.3
    data = np.array([0.7, 0.7, 0.3])
    neighbour = np.array([1.0, 1.0, 0.0])
    eps = rnm_pure_epsilon(3, BoundedQueryParams(0, 1, delta),
                           RnmNoise(sigma))
    n, chunk = 10**7, 10**6
    hits = np.zeros((2, 3))
    both = np.zeros(3)
    for k in range(n // chunk):
        z = sigma * make_rng(909, k).standard_normal((chunk, 3))
        a = np.argmax(data + z, axis=1)
        b = np.argmax(neighbour + z, axis=1)
        for i in range(3):
            hits[0, i] += np.count_nonzero(a == i)
            hits[1, i] += np.count_nonzero(b == i)
            both[i] += np.count_nonzero((a == i) & (b == i))
    worst, lines, ok = -math.inf, [], True
    for i in range(3):
        pa, pb, pab = hits[0, i] / n, hits[1, i] / n, both[i] / n
        for num, den, tag in ((pa, pb, "D/D'"), (pb, pa, "D'/D")):
            # delta method for a ratio of paired proportions
            cov = pab - pa * pb
            rel_var = ((1 - num) / (n * num) + (1 - den) / (n * den)
                       - 2 * cov / (n * pa * pb))
            se = math.sqrt(max(rel_var, 0.0))
            ratio = num / den
            limit = math.exp(eps) * (1 + 3 * se)
            ok &= ratio <= limit
            worst = max(worst, math.log(ratio))
            lines.append(f"o={i + 1} {tag} {ratio:.4f}<= {limit:.4f}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 120
    acceptance(9, ok, f"eps={eps:.4f}, max empirical log-ratio "
               f"{worst:.4f}; {elapsed:.1f}s")
    assert ok, lines


def test_10_fsrc_budget_safety(acceptance):
    rng = np.random.default_rng(1010)
    violations, final_over, halts, releases = [], 0, 0, 0
    for i in range(1000):
        n_users = int(rng.integers(20, 5001))
        ds = generate_synthetic_series(int(rng.integers(10, 121)),
                                       float(rng.uniform(3, 30)),
                                       float(rng.uniform(0, 0.4)), n_users,
                                       int(rng.integers(2**31)))
        noise = AtNoise.standard(float(rng.uniform(0.03, 0.3)),
                                 float(rng.uniform(0.0, 1.0)))
        eps = float(10**rng.uniform(-1.5, 0.7))
        budget = DpGuarantee(eps, float(10**rng.uniform(-8, -3)),
                             GuaranteeKind.PDP)
        rep = fsrc_run(ds.normalized, BoundedQueryParams(0, 1, ds.delta_sens),
                       noise, budget, seed=i)
        for k in range(len(rep.outcomes)):
            before = math.fsum(rep.spent[:k])
            if before >= eps or before + rep.epsilon_max >= eps:
                violations.append((i, "release", k))
        if rep.halted:
            halts += 1
            if rep.total_spent + rep.epsilon_max < eps:
                violations.append((i, "halt", len(rep.outcomes)))
        replay = replay_fsrc_gate(rep.spent, rep.epsilon_max, eps, rep.halted)
        if replay != [g.proceed for g in rep.gate_log]:
            violations.append((i, "replay", None))
        releases += len(rep.outcomes)
        final_over += rep.total_spent >= eps
    ok = not violations
    acceptance(10, ok, f"1000 runs, {releases} releases, {halts} halts, "
               f"{len(violations)} violations; final totals >= budget after "
               f"the last ex-post charge: {final_over}")
    assert ok, violations[:5]


def test_11_filter_run_count(acceptance):
    rng = np.random.default_rng(1111)
    params = BoundedQueryParams(0.0, 1.0, 0.01)
    noise = AtNoise.standard(1e-3, 0.0)  # every step fires on a stream of ones
    mismatches, counts = [], []
    while len(counts) < 20:
        eps0 = float(10**rng.uniform(-1.7, -0.3))
        budget_eps = float(rng.uniform(0.2, 5.0))
        delta_prime = float(10**rng.uniform(-9, -3))
        two_l = 2 * math.log(1 / delta_prime)
        s_max = math.sqrt(two_l + 2 * budget_eps) - math.sqrt(two_l)
        expected = math.floor((s_max / eps0)**2)
        if expected > 1500:
            continue
        rep = filtered_composition_baseline(
            np.ones(expected + 10), params, noise,
            DpGuarantee(budget_eps, delta_prime, GuaranteeKind.PDP),
            per_run_epsilon=eps0)
        counts.append(expected)
        if len(rep.outcomes) != expected or not rep.halted:
            mismatches.append((eps0, budget_eps, delta_prime, expected,
                               len(rep.outcomes)))
    ok = not mismatches
    acceptance(11, ok, f"20 triples, admitted counts {counts}; mismatches "
               f"{mismatches}")
    assert ok


@pytest.mark.slow
def test_12_end_to_end_direction(acceptance):
    n_users = 6946
    ds = generate_synthetic_series(365, 365, 0.3, n_users, seed=2011,
                                   noise_scale=0.5)
    budget = DpGuarantee(2.0, 1 / n_users, GuaranteeKind.PDP)
    sigmas = (0.09, 0.12, 0.15)
    rows = run_online_experiment(ds, 0.575, sigmas, budget, trials=50,
                                 seed=12)
    wins, lines = 0, []
    for sx in sigmas:
        stats = {}
        for arm in ("fsrc", "filter"):
            sel = [r for r in rows if r.sigma_x == sx and r.arm == arm]
            stats[arm] = (np.mean([r.accuracy_or_f1 for r in sel]),
                          np.mean([r.epsilon_spent for r in sel]))
        matched = abs(stats["fsrc"][0] - stats["filter"][0]) <= 0.02
        win = matched and stats["fsrc"][1] <= stats["filter"][1]
        wins += win
        lines.append(f"sx={sx}: F1 {stats['fsrc'][0]:.3f}/"
                     f"{stats['filter'][0]:.3f}, eps {stats['fsrc'][1]:.3f}/"
                     f"{stats['filter'][1]:.3f} (fsrc/filter)")
    ok = wins >= 2
    acceptance(12, ok, f"{wins}/3 settings favour FSRC; " + "; ".join(lines))
    assert ok
