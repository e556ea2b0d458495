"""Command-line entry point.

Every subcommand reads an optional ``--config`` file of ``key = value`` lines;
flags given on the command line win over config values. Exit codes: 0 on
success, 2 for configuration or domain errors, 3 when quadrature fails to
converge, 4 for bad input data.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from typing import Any, Callable, Sequence

from puregauss import bounds
from puregauss.bounds import (
    AtNoise,
    BoundedQueryParams,
    DpGuarantee,
    GuaranteeKind,
    RnmNoise,
)
from puregauss.composition import filtered_composition_baseline, fsrc_run
from puregauss.errors import (
    ConfigError,
    DataError,
    DomainError,
    QuadratureNotConverged,
)
from puregauss.harness import experiments, io
from puregauss.harness.datasets import (
    generate_synthetic_series,
    ingest_series,
    series_csv_text,
)
from puregauss.mechanisms import simulate_worst_case_stopping

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_DATA = 4


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.replace(" ", "").split(",") if x]


def _int_list(text: str) -> list[int]:
    """``1,2,5`` or an inclusive range ``1:64``."""
    text = text.replace(" ", "")
    if ":" in text:
        lo, hi = text.split(":", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(x) for x in text.split(",") if x]


def _str_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


class Settings:
    """Flag values layered over config-file values."""

    def __init__(self, args: argparse.Namespace, config: dict[str, str]):
        self._args = args
        self._config = config

    def get(self, name: str, conv: Callable[[str], Any], default: Any = None,
            required: bool = False):
        value = getattr(self._args, name, None)
        if value is not None:
            return value
        if name in self._config:
            raw = self._config[name]
            try:
                return conv(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {name}: {raw!r}") from exc
        if required:
            flag = name.replace("_", "-")
            raise ConfigError(f"missing required setting --{flag}")
        return default

    def seed(self) -> int:
        return self.get("seed", int, required=True)


def _emit(text: str, output: str | None) -> None:
    if output:
        io.write_text(output, text)
    else:
        sys.stdout.write(text)


def _emit_json(payload: Any, output: str | None) -> None:
    _emit(json.dumps(payload, indent=2, sort_keys=True) + "\n", output)


def _emit_rows(rows, output: str | None) -> None:
    _emit(io.rows_to_csv((r.as_dict() for r in rows), experiments.ROW_COLUMNS),
          output)


def _query_params(s: Settings) -> BoundedQueryParams:
    return BoundedQueryParams(s.get("a", float, 0.0), s.get("b", float, 1.0),
                              s.get("delta_sens", float, required=True))


def _at_noise(s: Settings, rho: float | None = None) -> AtNoise:
    sigma_x = s.get("sigma_x", float, required=True)
    sigma_z = s.get("sigma_z", float, math.sqrt(3.0) * sigma_x)
    if rho is None:
        rho = s.get("rho", float, required=True)
    return AtNoise(sigma_x, sigma_z, rho)


def _dataset(s: Settings):
    return ingest_series(s.get("input", str, required=True),
                         s.get("n_users", int, required=True))


def _guarantee_json(g: DpGuarantee) -> dict[str, Any]:
    return {"epsilon": g.epsilon, "delta": g.delta, "kind": g.kind.value,
            "alpha": g.alpha}


# -- command handlers ----------------------------------------------------------


def cmd_bound_rnm(s: Settings) -> None:
    q = _query_params(s)
    sigma = s.get("sigma", float, required=True)
    d = s.get("d", int, required=True)
    out = {"d": d, "a": q.a, "b": q.b, "delta_sens": q.delta_sens,
           "sigma": sigma,
           "epsilon": bounds.rnm_pure_epsilon(d, q, RnmNoise(sigma))}
    delta = s.get("delta", float)
    if delta is not None:
        out["classical"] = _guarantee_json(
            bounds.classical_rnm_epsilon(d, q.delta_sens, sigma, delta))
    _emit_json(out, s.get("output", str))


def cmd_bound_at_expost(s: Settings) -> None:
    q = _query_params(s)
    noise = _at_noise(s)
    ts = s.get("t", _int_list, required=True)
    if isinstance(ts, int):
        ts = [ts]
    out = {"a": q.a, "b": q.b, "delta_sens": q.delta_sens,
           "sigma_x": noise.sigma_x, "sigma_z": noise.sigma_z, "rho": noise.rho,
           "epsilon": {str(t): bounds.at_expost_epsilon(t, q, noise)
                       for t in ts}}
    _emit_json(out, s.get("output", str))


def cmd_bound_at_rdp(s: Settings) -> None:
    delta_sens = s.get("delta_sens", float, required=True)
    noise = _at_noise(s)
    out: dict[str, Any] = {"delta_sens": delta_sens, "sigma_x": noise.sigma_x,
                           "sigma_z": noise.sigma_z, "rho": noise.rho}
    alpha = s.get("alpha", float)
    if alpha is not None:
        out["alpha"] = alpha
        out["rdp_epsilon"] = float(bounds.rdp_gaussian_at(alpha, delta_sens,
                                                          noise))
    delta = s.get("delta", float)
    if delta is not None:
        out["pdp"] = _guarantee_json(bounds.at_epsilon_max(delta_sens, noise,
                                                           delta))
    if alpha is None and delta is None:
        raise ConfigError("bound at-rdp needs --alpha and/or --delta")
    _emit_json(out, s.get("output", str))


def cmd_simulate_stopping(s: Settings) -> None:
    seed = s.seed()
    rhos = s.get("rho", _float_list, required=True)
    if isinstance(rhos, float):
        rhos = [rhos]
    rows = []
    for rho in rhos:
        noise = _at_noise(s, rho)
        st = simulate_worst_case_stopping(noise,
                                          s.get("max_steps", int, 10**6),
                                          s.get("trials", int, 10_000), seed)
        rows.append({"sigma_x": noise.sigma_x, "sigma_z": noise.sigma_z,
                     "rho": rho, "seed": seed, "trials": st.trials,
                     "stop_median": st.median, "stop_p80": st.p80})
    cols = ("sigma_x", "sigma_z", "rho", "seed", "trials", "stop_median",
            "stop_p80")
    _emit(io.rows_to_csv(rows, cols), s.get("output", str))


def _run_composition(s: Settings, runner) -> None:
    seed = s.seed()
    data = _dataset(s)
    params = BoundedQueryParams(0.0, 1.0, data.delta_sens)
    budget = DpGuarantee(s.get("epsilon", float, required=True),
                         s.get("delta", float, required=True),
                         GuaranteeKind.PDP)
    report = runner(data.normalized, params, _at_noise(s), budget,
                    s.get("per_mechanism_delta", float), seed)
    payload = report.to_json_dict()
    payload["config"]["input"] = s.get("input", str)
    payload["config"]["n_users"] = data.n_users
    _emit_json(payload, s.get("output", str))


def cmd_run_fsrc(s: Settings) -> None:
    _run_composition(s, fsrc_run)


def cmd_run_filter(s: Settings) -> None:
    _run_composition(s, filtered_composition_baseline)


def cmd_experiment_offline(s: Settings) -> None:
    seed = s.seed()
    rows = experiments.run_offline_experiment(
        _dataset(s),
        s.get("sigma_grid", _float_list, required=True),
        s.get("mechanisms", _str_list, list(experiments.OFFLINE_ARMS)),
        s.get("trials", int, 1000),
        s.get("delta", float, 1e-5),
        seed)
    _emit_rows(rows, s.get("output", str))


def cmd_experiment_online(s: Settings) -> None:
    seed = s.seed()
    budget = DpGuarantee(s.get("epsilon", float, required=True),
                         s.get("delta", float, required=True),
                         GuaranteeKind.PDP)
    rows = experiments.run_online_experiment(
        _dataset(s),
        s.get("rho", float, required=True),
        s.get("sigma_x_grid", _float_list, required=True),
        budget,
        s.get("trials", int, 50),
        seed,
        s.get("per_mechanism_delta", float))
    _emit_rows(rows, s.get("output", str))


def cmd_experiment_heatmap(s: Settings) -> None:
    seed = s.seed()
    rows = experiments.run_heatmap(
        s.get("delta_sens", float, required=True),
        s.get("delta", float, required=True),
        s.get("sigma_x_grid", _float_list, required=True),
        s.get("t_grid", _int_list, required=True),
        s.get("rho", float, required=True),
        s.get("trials", int, 10_000),
        seed,
        s.get("max_steps", int, 10**6))
    _emit_rows(rows, s.get("output", str))


def cmd_synth(s: Settings) -> None:
    data = generate_synthetic_series(
        s.get("length", int, required=True),
        s.get("period", float, 7.0),
        s.get("amplitude", float, 0.3),
        s.get("n_users", int, required=True),
        s.seed(),
        s.get("level", float, 0.5),
        s.get("noise_scale", float, 0.25))
    _emit(series_csv_text(data), s.get("output", str))


# -- parser ---------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, stochastic: bool = False) -> None:
    p.add_argument("--config", help="key = value settings file")
    p.add_argument("--output", "-o", help="write here instead of stdout")
    if stochastic:
        p.add_argument("--seed", type=int,
                       help="RNG seed (required, flag or config)")


def _at_flags(p: argparse.ArgumentParser, rho_type=float) -> None:
    p.add_argument("--sigma-x", dest="sigma_x", type=float)
    p.add_argument("--sigma-z", dest="sigma_z", type=float,
                   help="defaults to sqrt(3) * sigma-x")
    p.add_argument("--rho", type=rho_type)


def _data_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="CSV with one count per line")
    p.add_argument("--n-users", dest="n_users", type=int)


def _range_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--delta-sens", dest="delta_sens", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="puregauss",
        description="Pure and ex-post privacy bounds for Gaussian selection "
        "mechanisms, with fully adaptive composition.")
    groups = parser.add_subparsers(dest="group", required=True)

    bound = groups.add_parser("bound", help="evaluate privacy bounds")
    bsub = bound.add_subparsers(dest="command", required=True)
    p = bsub.add_parser("rnm", help="Report Noisy Max pure epsilon")
    _common(p)
    _range_flags(p)
    p.add_argument("--d", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--delta", type=float,
                   help="also report the classical (eps, delta) baseline")
    p.set_defaults(handler=cmd_bound_rnm)

    p = bsub.add_parser("at-expost", help="Above Threshold ex-post epsilon")
    _common(p)
    _range_flags(p)
    _at_flags(p)
    p.add_argument("--t", type=_int_list, help="stop time(s): 5, 1,2,3 or 1:64")
    p.set_defaults(handler=cmd_bound_at_expost)

    p = bsub.add_parser("at-rdp", help="Above Threshold RDP and pDP bound")
    _common(p)
    p.add_argument("--delta-sens", dest="delta_sens", type=float)
    _at_flags(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--delta", type=float)
    p.set_defaults(handler=cmd_bound_at_rdp)

    sim = groups.add_parser("simulate", help="stopping-time simulation")
    ssub = sim.add_subparsers(dest="command", required=True)
    p = ssub.add_parser("stopping", help="worst-case stopping quantiles")
    _common(p, stochastic=True)
    _at_flags(p, rho_type=_float_list)
    p.add_argument("--trials", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.set_defaults(handler=cmd_simulate_stopping)

    run = groups.add_parser("run", help="composed Above Threshold on a series")
    rsub = run.add_subparsers(dest="command", required=True)
    for name, handler in (("fsrc", cmd_run_fsrc),
                          ("filter-baseline", cmd_run_filter)):
        p = rsub.add_parser(name)
        _common(p, stochastic=True)
        _data_flags(p)
        _at_flags(p)
        p.add_argument("--epsilon", type=float, help="budget epsilon")
        p.add_argument("--delta", type=float, help="budget delta")
        p.add_argument("--per-mechanism-delta", dest="per_mechanism_delta",
                       type=float)
        p.set_defaults(handler=handler)

    exp = groups.add_parser("experiment", help="experiment grids to CSV")
    esub = exp.add_subparsers(dest="command", required=True)
    p = esub.add_parser("offline", help="Report Noisy Max accuracy vs privacy")
    _common(p, stochastic=True)
    _data_flags(p)
    p.add_argument("--sigma-grid", dest="sigma_grid", type=_float_list)
    p.add_argument("--mechanisms", type=_str_list)
    p.add_argument("--trials", type=int)
    p.add_argument("--delta", type=float)
    p.set_defaults(handler=cmd_experiment_offline)

    p = esub.add_parser("online", help="FSRC vs filtered baseline")
    _common(p, stochastic=True)
    _data_flags(p)
    p.add_argument("--rho", type=float)
    p.add_argument("--sigma-x-grid", dest="sigma_x_grid", type=_float_list)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--per-mechanism-delta", dest="per_mechanism_delta",
                   type=float)
    p.add_argument("--trials", type=int)
    p.set_defaults(handler=cmd_experiment_online)

    p = esub.add_parser("heatmap", help="ex-ante minus ex-post epsilon grid")
    _common(p, stochastic=True)
    p.add_argument("--delta-sens", dest="delta_sens", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--sigma-x-grid", dest="sigma_x_grid", type=_float_list)
    p.add_argument("--t-grid", dest="t_grid", type=_int_list)
    p.add_argument("--rho", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--max-steps", dest="max_steps", type=int)
    p.set_defaults(handler=cmd_experiment_heatmap)

    p = groups.add_parser("synth", help="write a synthetic count series")
    _common(p, stochastic=True)
    p.add_argument("--length", type=int)
    p.add_argument("--period", type=float)
    p.add_argument("--amplitude", type=float)
    p.add_argument("--n-users", dest="n_users", type=int)
    p.add_argument("--level", type=float)
    p.add_argument("--noise-scale", dest="noise_scale", type=float)
    p.set_defaults(handler=cmd_synth, command=None)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = io.read_config(args.config) if args.config else {}
        args.handler(Settings(args, config))
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except QuadratureNotConverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (DataError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
