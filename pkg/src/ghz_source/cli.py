"""Command-line front end.

Every command prints one document, JSON by default::

    {"command": ..., "config_effective": {...}, "results": {...}, "seed": ...}

With ``--format csv`` the scalar results become ``# key=value`` comment lines
followed by one columnar table with unit-suffixed column names.

Exit status: 0 on success, 2 for a bad configuration or command line, 3 when
the computation itself rejects the input (for example no threefold events).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import secrets
import sys
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .config import FORMATS, ConfigError, RunConfig, config_from_mapping, dump_config, load_config, tomllib
from .ghz import (
    MERMIN_TERMS,
    certify,
    fidelity_direct,
    fidelity_local,
    fidelity_settings,
    ghz_state,
    mermin_exact,
    mermin_from_counts,
    noisy_ghz,
)
from .montecarlo import SimConfig, best_mu, expected_settings, hom_scan, simulate_settings, sweep_mu
from .polarization import DensityMatrix, MeasurementSetting, as_density, outcome_probabilities
from .rates import (
    COMPONENT_LABELS,
    DESIRED,
    effective_state,
    optimal_mu,
    predicted_hv_visibility,
    ratio_R,
    singles_and_pairs,
    threefold_components,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_COMPUTE = 3

# the order of magnitude claimed for the desired threefold rate
REPORTED_RATE_BAND_HZ = (150.0, 260.0)


class CommandError(Exception):
    """A declared failure of a command; maps to exit status 3."""


@dataclass
class Output:
    results: dict[str, Any]
    table_name: str
    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)
    seed: int | None = None


def _state_for(config: RunConfig) -> DensityMatrix:
    if config.state == "source":
        return effective_state(config.source_params())
    if config.state == "ideal":
        return as_density(ghz_state(config.phase_rad))
    if config.state == "mixed":
        return DensityMatrix.maximally_mixed(3)
    return noisy_ghz(config.noise_spec())


def _sim(config: RunConfig) -> SimConfig:
    # expected-count mode draws no random numbers, so any seed will do
    seed = 0 if config.seed is None else config.seed
    return SimConfig(config.source_params(), config.n_pulses, seed)


def _records(config: RunConfig, settings: Sequence[MeasurementSetting]):
    if config.mode == "expected":
        records = expected_settings(_sim(config), settings)
    else:
        records = simulate_settings(_sim(config), settings)
    empty = [str(r.setting) for r in records if r.total <= 0]
    if empty:
        raise CommandError(
            f"no events: {config.n_pulses} pulses registered no threefold coincidence "
            f"for setting(s) {', '.join(empty)}"
        )
    return records


def _count_rows(records) -> list[list[Any]]:
    rows = []
    for record in records:
        rates = record.rates()
        for label, count, rate in zip(record.setting.outcome_labels(), record.counts, rates):
            rows.append([str(record.setting), label, float(count), float(rate)])
    return rows


def _is_randomized(config: RunConfig, command: str) -> bool:
    if command in ("hom", "sweep-mu"):
        return True
    return command in ("mermin", "certify") and config.mode == "sampled"


def cmd_rates(config: RunConfig) -> Output:
    params = config.source_params()
    table = threefold_components(params)
    pairs = singles_and_pairs(params)
    try:
        visibility = predicted_hv_visibility(params)
    except ValueError:
        visibility = None
    low, high = REPORTED_RATE_BAND_HZ
    results: dict[str, Any] = {
        "desired_total_hz": table.desired,
        "undesired_total_hz": table.undesired,
        "threefold_total_hz": table.total,
        "ratio_R": table.ratio,
        "predicted_visibility": visibility,
        "consistent_with_reported_rate_order": low <= table.desired <= high,
    }
    results.update({f"{name}_hz": value for name, value in pairs.as_dict().items()})
    rows = [
        [label, float(rate), index in DESIRED]
        for index, (label, rate) in enumerate(zip(COMPONENT_LABELS, table.rates))
    ]
    return Output(results, "components", ["component", "rate_hz", "desired"], rows)


def cmd_optimize(config: RunConfig) -> Output:
    params = config.source_params()
    try:
        mu_star = optimal_mu(params.p_e)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    eta_sps_path = float(params.eta_paths[2])
    grid = np.linspace(config.mu_min, config.mu_max, config.mu_points)
    curve = [ratio_R(float(mu), params.p_e) for mu in grid]
    argmax = int(np.argmax(curve))
    r_star = ratio_R(mu_star, params.p_e)
    results = {
        "mu_opt": mu_star,
        "mu_e_opt": mu_star * eta_sps_path,
        "ratio_R_max": r_star,
        "visibility_max": (r_star - 1) / (r_star + 1),
        "grid_argmax_mu": float(grid[argmax]),
        "grid_step": float(grid[1] - grid[0]) if len(grid) > 1 else 0.0,
    }
    rows = [[float(mu), r, min(max((r - 1) / (r + 1), 0.0), 1.0)] for mu, r in zip(grid, curve)]
    return Output(results, "curve", ["mu", "ratio_R", "visibility"], rows)


def cmd_mermin(config: RunConfig) -> Output:
    settings = [MeasurementSetting.parse(name) for name, _ in MERMIN_TERMS]
    if config.mode == "exact":
        try:
            rho = _state_for(config)
        except ValueError as exc:
            raise CommandError(str(exc)) from None
        result = mermin_exact(rho)
        rows = [
            [str(s), label, float(p)]
            for s in settings
            for label, p in zip(s.outcome_labels(), outcome_probabilities(rho, s))
        ]
        results = {"mode": "exact", "state": config.state, **result.as_dict()}
        results["violates_local_realism"] = result.violates_local_realism
        return Output(results, "outcomes", ["setting", "outcome", "probability"], rows)

    records = _records(config, settings)
    result = mermin_from_counts(records)
    results = {"mode": config.mode, **result.as_dict()}
    results["violates_local_realism"] = result.violates_local_realism
    results["threefold_events"] = float(sum(r.total for r in records))
    results["duration_s"] = records[0].duration
    columns = ["setting", "outcome", "counts", "rate_hz"]
    return Output(results, "outcomes", columns, _count_rows(records))


def cmd_certify(config: RunConfig) -> Output:
    phase = config.phase_rad
    if config.mode == "exact":
        try:
            rho = _state_for(config)
        except ValueError as exc:
            raise CommandError(str(exc)) from None
        cert = certify(fidelity_direct(rho, phase))
        results = {"mode": "exact", "state": config.state, **cert.as_dict()}
        settings = fidelity_settings(phase)
        rows = [
            [str(s), label, float(p)]
            for s in settings
            for label, p in zip(s.outcome_labels(), outcome_probabilities(rho, s))
        ]
        return Output(results, "outcomes", ["setting", "outcome", "probability"], rows)

    records = _records(config, fidelity_settings(phase))
    fidelity, sigma = fidelity_local(records, phase)
    cert = certify(fidelity, sigma)
    results = {"mode": config.mode, **cert.as_dict()}
    results["threefold_events"] = float(sum(r.total for r in records))
    results["duration_s"] = records[0].duration
    columns = ["setting", "outcome", "counts", "rate_hz"]
    return Output(results, "outcomes", columns, _count_rows(records))


def cmd_hom(config: RunConfig) -> Output:
    delays = np.linspace(config.delay_min_m, config.delay_max_m, config.delay_points)
    try:
        curve = hom_scan(_sim(config), delays, config.hom_outcome or None)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    if not np.any(curve.threefold_rate > 0):
        raise CommandError(f"no events: {config.n_pulses} pulses per delay registered no threefold coincidence")
    results = {
        "fitted_visibility": curve.fitted_visibility,
        "outcome": curve.outcome,
        "duration_per_delay_s": _sim(config).duration,
    }
    rows = [
        [float(d), float(r), float(e)]
        for d, r, e in zip(curve.delays, curve.threefold_rate, curve.rate_error)
    ]
    return Output(results, "curve", ["delay_m", "threefold_rate_hz", "rate_error_hz"], rows)


def cmd_sweep_mu(config: RunConfig) -> Output:
    grid = np.linspace(config.mu_min, config.mu_max, config.mu_points)
    if config.p_e == 0 and np.any(grid == 0):
        raise CommandError("the ratio is undefined at mu = 0 when p_e = 0")
    rows = sweep_mu(_sim(config), grid)
    if sum(r.desired_counts + r.undesired_counts for r in rows) == 0:
        raise CommandError(f"no events: {config.n_pulses} pulses per mu registered no threefold coincidence")
    best = best_mu(rows)
    results = {
        "best_mu": best.mu,
        "best_ratio_R": best.r_est,
        "mu_opt": optimal_mu(config.p_e) if config.p_e > 0 else None,
        "duration_per_mu_s": _sim(config).duration,
    }
    columns = ["mu", "ratio_R_est", "ratio_R_sigma", "visibility_est", "ratio_R_analytic",
               "desired_counts", "undesired_counts"]
    table = [
        [r.mu, r.r_est, r.r_sigma, r.visibility_est, r.r_analytic, r.desired_counts, r.undesired_counts]
        for r in rows
    ]
    return Output(results, "sweep", columns, table)


COMMANDS: dict[str, Callable[[RunConfig], Output]] = {
    "rates": cmd_rates,
    "optimize": cmd_optimize,
    "mermin": cmd_mermin,
    "hom": cmd_hom,
    "certify": cmd_certify,
    "sweep-mu": cmd_sweep_mu,
}


def _clean(value: Any) -> Any:
    """JSON-safe copy: numpy scalars become Python ones, inf and nan become null."""
    if isinstance(value, dict):
        return {k: _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def render_json(command: str, config: RunConfig, output: Output) -> str:
    results = dict(output.results)
    results[output.table_name] = [dict(zip(output.columns, row)) for row in output.rows]
    document = {
        "command": command,
        "config_effective": config.as_dict(),
        "results": results,
        "seed": output.seed,
    }
    return json.dumps(_clean(document), indent=2) + "\n"


def _csv_text(value: Any) -> str:
    value = _clean(value)
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def render_csv(command: str, config: RunConfig, output: Output) -> str:
    buffer = io.StringIO()
    buffer.write(f"# command={command}\n")
    buffer.write(f"# seed={_csv_text(output.seed)}\n")
    for key, value in output.results.items():
        buffer.write(f"# {key}={_csv_text(value)}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(output.columns)
    for row in output.rows:
        writer.writerow([_csv_text(v) for v in row])
    return buffer.getvalue()


def _parse_override(text: str) -> tuple[str, Any]:
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(text, "overrides look like KEY=VALUE")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat TOML configuration file")
    common.add_argument("--seed", type=int, metavar="U64", help="seed for Monte Carlo commands")
    common.add_argument("--format", choices=FORMATS, default="json", dest="fmt")
    common.add_argument("--out", metavar="PATH", help="write output here instead of stdout")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE",
        help="override one config key (TOML value syntax); repeatable",
    )
    common.add_argument("--save-config", metavar="PATH", help="also write the effective config as TOML")

    parser = argparse.ArgumentParser(prog="ghz-source", description="GHZ source rates, tests and simulations.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    helps = {
        "rates": "closed-form threefold components and singles/pairs rates",
        "optimize": "optimal laser mean photon number and the ratio curve",
        "mermin": "Mermin operator value (exact, expected or sampled)",
        "hom": "simulated two-photon interference scan and its visibility",
        "certify": "GHZ fidelity and entanglement witness",
        "sweep-mu": "simulated desired/undesired ratio over a mu grid",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    if args.set:
        values = config.as_dict()
        values.update(_parse_override(item) for item in args.set)
        config = config_from_mapping(values)
    if args.seed is not None:
        config = config_from_mapping({**config.as_dict(), "seed": args.seed})
    return config


def run(command: str, config: RunConfig) -> tuple[RunConfig, Output]:
    """Run one command; a randomized command without a seed gets a fresh one."""
    if _is_randomized(config, command) and config.seed is None:
        config = config.replace(seed=secrets.randbits(63))
    output = COMMANDS[command](config)
    if _is_randomized(config, command):
        output.seed = config.seed
    return config, output


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config, output = run(args.command, config)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE

    render = render_json if args.fmt == "json" else render_csv
    text = render(args.command, config, output)
    if args.save_config:
        with open(args.save_config, "w", encoding="utf-8") as fh:
            fh.write(dump_config(config))
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK
