"""Command-line front end: JSON scenario configs, experiment commands, and
trace serialization.

Exit codes: 0 success, 2 config error, 3 infeasible scenario, 1 internal
error. JSON is used for configs and summaries, CSV for long traces; floats are
written as shortest-round-trip decimals so replays are byte-identical.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from .prob import (
    Distribution,
    StochasticMatrix,
    X_GIVEN_Y,
    Y_GIVEN_X,
    mutual_information,
)
from .channels import CHANNEL_CONSTRUCTORS, blahut_arimoto_capacity
from .engine import (
    RunStatus,
    SystemState,
    check_arimoto_fixed_point,
    init_phi_from_channel,
    nts_run,
    nts_step,
    stall_level_identity,
    tail_rho,
)
from .exponents import error_exponent
from .sim import (
    DriftSchedule,
    GENIE,
    InfeasibleExperimentError,
    SimConfig,
    run_session,
    tune_threshold,
    verify_type_concentration,
)

EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3


class ConfigError(Exception):
    """Scenario file is malformed; message names the offending field."""


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return cfg


def parse_channel(obj, where: str = "channel") -> StochasticMatrix:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where}: expected an object with 'name' or 'matrix'")
    if "matrix" in obj:
        try:
            mat = np.array(obj["matrix"], dtype=float)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}.matrix: not a numeric matrix")
        if mat.ndim != 2:
            raise ConfigError(f"{where}.matrix: expected a 2-D matrix")
        for i, row in enumerate(mat):
            if row.min() < 0 or abs(row.sum() - 1.0) > 1e-9:
                raise ConfigError(
                    f"{where}.matrix row {i}: entries must be nonnegative and sum to 1 "
                    f"(sum = {row.sum()!r})"
                )
        return StochasticMatrix(mat, Y_GIVEN_X)
    name = obj.get("name")
    if name not in CHANNEL_CONSTRUCTORS:
        raise ConfigError(f"{where}.name: unknown channel {name!r} "
                          f"(choices: {sorted(CHANNEL_CONSTRUCTORS)})")
    ctor = CHANNEL_CONSTRUCTORS[name]
    try:
        if name == "identity":
            return ctor(int(obj["param"]))
        return ctor(float(obj["param"]))
    except KeyError:
        raise ConfigError(f"{where}.param: required for channel {name!r}")
    except ValueError as exc:
        raise ConfigError(f"{where}.param: {exc}")


def parse_state(cfg: dict, p: StochasticMatrix) -> SystemState:
    q0 = cfg.get("q0", "uniform")
    if q0 == "uniform":
        q = Distribution.uniform(p.num_inputs)
    else:
        try:
            q = Distribution(np.array(q0, dtype=float))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"q0: {exc}")
    phi0 = cfg.get("phi0", "from_channel")
    if phi0 == "from_channel":
        phi = init_phi_from_channel(q, p)
    else:
        try:
            phi = StochasticMatrix(np.array(phi0, dtype=float), X_GIVEN_Y)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"phi0: {exc}")
    return SystemState(q, phi)


def parse_drift(cfg: dict, p: StochasticMatrix) -> DriftSchedule:
    drift = cfg.get("drift")
    segments = [(0, p)]
    if drift is not None:
        if not isinstance(drift, list):
            raise ConfigError("drift: expected a list of {at_block, channel} objects")
        for i, entry in enumerate(drift):
            try:
                at = int(entry["at_block"])
            except (KeyError, TypeError, ValueError):
                raise ConfigError(f"drift[{i}].at_block: required integer")
            segments.append((at, parse_channel(entry.get("channel"), f"drift[{i}].channel")))
    try:
        return DriftSchedule(tuple(segments))
    except ValueError as exc:
        raise ConfigError(f"drift: {exc}")


def _require(cfg: dict, key: str, kind):
    if key not in cfg:
        raise ConfigError(f"{key}: required field is missing")
    try:
        return kind(cfg[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected {kind.__name__}, got {cfg[key]!r}")


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])


def outcome_summary(outcome, p) -> dict:
    summary = {
        "status": outcome.status.value,
        "final_e_hat": outcome.final_e_hat,
        "iterations": len(outcome.trace),
        "t": outcome.t,
        "final_q": outcome.final_state.q.probs.tolist(),
        "final_phi": outcome.final_state.phi.probs.tolist(),
        "final_mutual_information": mutual_information(outcome.final_state.q, p),
    }
    if outcome.conditions_report is not None:
        rep = outcome.conditions_report
        summary["conditions"] = {
            "tail_len": rep.tail_len,
            "max_rho": rep.max_rho,
            "min_q": rep.min_q,
            "min_phi_on_support": rep.min_phi_on_support,
            "rho_below_one": rep.rho_below_one,
            "q_bounded_away": rep.q_bounded_away,
            "phi_bounded_away": rep.phi_bounded_away,
        }
    if outcome.status is RunStatus.STALLED:
        ident = stall_level_identity(outcome, p)
        summary["stall_identity"] = ident
        rho_bar = ident["rho_bar"]
        if 0.0 < rho_bar < 1.0:
            summary["arimoto_fixed_point"] = check_arimoto_fixed_point(
                outcome.final_state.q, rho_bar, p)
    return summary


ITERATION_HEADER = ["l", "e_hat", "rho_star", "decrement", "q_decrement",
                    "min_q", "min_phi_on_support", "carried_columns"]


def iteration_rows(trace):
    for r in trace:
        yield [r.l, r.e_hat, r.rho_star, r.decrement, r.q_decrement,
               r.min_q, r.min_phi_on_support, ";".join(map(str, r.carried_columns))]


def figure2_data(initial: SystemState, t: float, p: StochasticMatrix,
                 rate_grid: np.ndarray, eps_zero: float = 1e-9,
                 max_iters: int = 100_000):
    """Per-iteration error-exponent curves and the update-exponent sequence.

    Returns (exponent_rows, curve_rows) where exponent_rows are
    (l, e_hat, mutual_information) and curve_rows are (l, r_prime, e_r).
    """
    state = initial
    exponent_rows = []
    curve_rows = []
    for _ in range(max_iters + 1):
        new_state, rec = nts_step(state, t, p)
        exponent_rows.append((state.l, rec.e_hat, mutual_information(state.q, p)))
        for rp in rate_grid:
            curve_rows.append((state.l, float(rp), error_exponent(float(rp), state.q, p).value))
        if rec.e_hat <= eps_zero:
            break
        state = new_state
    return exponent_rows, curve_rows


def _session_block_rows(trace):
    for r in trace.blocks:
        yield [r.block_index, r.sent_msg,
               -1 if r.decoded_msg is None else r.decoded_msg,
               int(r.decode_correct), r.statistic, r.feedback,
               int(r.state_updated)]


SESSION_HEADER = ["block", "sent_msg", "decoded_msg", "decode_correct",
                  "statistic", "feedback", "state_updated"]


def _segment_dict(s) -> dict:
    return {
        "start_block": s.start_block,
        "end_block": s.end_block,
        "blocks": s.blocks,
        "updates": s.updates,
        "update_frequency": s.update_frequency,
        "decode_errors": s.decode_errors,
        "mean_accepted_type": None if s.mean_accepted_type is None
        else s.mean_accepted_type.tolist(),
        "e_hat": s.e_hat,
        "e_r": s.e_r,
        "mutual_information": s.mutual_information,
    }


def _common_options(fn):
    fn = click.option("--config", "config_path", required=True,
                      type=click.Path(), help="Scenario JSON file.")(fn)
    fn = click.option("--out", "out_dir", default=".", type=click.Path(),
                      help="Output directory.")(fn)
    fn = click.option("--seed", type=int, default=None,
                      help="Override the config seed.")(fn)
    fn = click.option("--quiet", is_flag=True, default=False)(fn)
    return fn


def _prepare(config_path: str, out_dir: str, seed: int | None) -> tuple[dict, Path]:
    cfg = load_config(config_path)
    if seed is not None:
        cfg["seed"] = seed
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return cfg, out


def _dispatch(fn):
    """Map errors to the documented exit codes."""
    try:
        fn()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except InfeasibleExperimentError as exc:
        click.echo(f"infeasible scenario: {exc}", err=True)
        sys.exit(EXIT_INFEASIBLE)


@click.group()
def main():
    """Natural-type-selection channel-input adaptation experiments."""


@main.command()
@_common_options
def capacity(config_path, out_dir, seed, quiet):
    """Channel capacity by alternating maximization."""

    def run():
        cfg, out = _prepare(config_path, out_dir, seed)
        p = parse_channel(cfg.get("channel"))
        result = blahut_arimoto_capacity(p, tol=float(cfg.get("tol", 1e-9)))
        payload = {
            "capacity_nats": result.c,
            "q_star": result.q_star.probs.tolist(),
            "iterations": result.iterations,
            "gap_bound": result.gap_bound,
        }
        write_json(out / "capacity_summary.json", payload)
        if not quiet:
            click.echo(f"C = {result.c!r} nats ({result.iterations} iterations, "
                       f"gap {result.gap_bound:.2e})")

    _dispatch(run)


@main.command()
@_common_options
def iterate(config_path, out_dir, seed, quiet):
    """Deterministic exponent iteration until convergence or stall."""

    def run():
        cfg, out = _prepare(config_path, out_dir, seed)
        p = parse_channel(cfg.get("channel"))
        state = parse_state(cfg, p)
        t = _require(cfg, "t", float)
        outcome = nts_run(
            state, t, p,
            eps_zero=float(cfg.get("eps_zero", 1e-9)),
            eps_stall=float(cfg.get("eps_stall", 1e-12)),
            max_iters=int(cfg.get("max_iters", 100_000)),
        )
        write_csv(out / "iterations.csv", ITERATION_HEADER, iteration_rows(outcome.trace))
        write_json(out / "iterate_summary.json", outcome_summary(outcome, p))
        if not quiet:
            click.echo(f"{outcome.status.value}: E_hat = {outcome.final_e_hat!r} "
                       f"after {len(outcome.trace)} iterations")
        if outcome.status is RunStatus.INFEASIBLE:
            sys.exit(EXIT_INFEASIBLE)

    _dispatch(run)


@main.command()
@_common_options
def simulate(config_path, out_dir, seed, quiet):
    """Monte-Carlo feedback session over a (possibly drifting) channel."""

    def run():
        cfg, out = _prepare(config_path, out_dir, seed)
        p = parse_channel(cfg.get("channel"))
        state = parse_state(cfg, p)
        drift = parse_drift(cfg, p)
        try:
            config = SimConfig(
                n=_require(cfg, "n", int),
                rate=_require(cfg, "rate", float),
                t=_require(cfg, "t", float),
                seed=int(cfg.get("seed", 0)),
                blocks=_require(cfg, "blocks", int),
                decoder_mode=cfg.get("decoder_mode", "ml"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc))
        trace = run_session(state, config, drift)
        write_csv(out / "blocks.csv", SESSION_HEADER, _session_block_rows(trace))
        write_json(out / "simulate_summary.json", {
            "update_count": trace.update_count,
            "segments": [_segment_dict(s) for s in trace.segments],
            "final_q": trace.final_state.q.probs.tolist(),
            "final_phi": trace.final_state.phi.probs.tolist(),
        })
        if not quiet:
            click.echo(f"{config.blocks} blocks, {trace.update_count} updates")

    _dispatch(run)


@main.command()
@_common_options
def figure2(config_path, out_dir, seed, quiet):
    """Per-iteration error-exponent curves and the update-exponent sequence."""

    def run():
        cfg, out = _prepare(config_path, out_dir, seed)
        p = parse_channel(cfg.get("channel"))
        state = parse_state(cfg, p)
        rate = _require(cfg, "rate", float)
        delta = _require(cfg, "delta", float)
        t = rate + delta
        points = int(cfg.get("r_grid_points", 101))
        if points < 100:
            raise ConfigError("r_grid_points: need at least 100 grid points")
        r_max = float(cfg.get("r_max", mutual_information(
            Distribution.uniform(p.num_inputs), p) + delta + 0.2))
        grid = np.linspace(0.0, r_max, points)
        exponent_rows, curve_rows = figure2_data(
            state, t, p, grid,
            eps_zero=float(cfg.get("eps_zero", 1e-9)),
            max_iters=int(cfg.get("max_iters", 100_000)),
        )
        write_csv(out / "figure2_exponents.csv",
                  ["l", "e_hat", "mutual_information"], exponent_rows)
        write_csv(out / "figure2_curves.csv", ["l", "r_prime", "e_r"], curve_rows)
        write_json(out / "figure2_summary.json", {
            "t": t, "rate": rate, "delta": delta,
            "iterations": len(exponent_rows),
            "final_e_hat": exponent_rows[-1][1],
            "final_mutual_information": exponent_rows[-1][2],
        })
        if not quiet:
            click.echo(f"{len(exponent_rows)} iterations, final I = "
                       f"{exponent_rows[-1][2]!r} (T = {t!r})")

    _dispatch(run)


@main.command()
@_common_options
def concentration(config_path, out_dir, seed, quiet):
    """Type-concentration experiment: accepted types vs. the minimizer."""

    def run():
        cfg, out = _prepare(config_path, out_dir, seed)
        p = parse_channel(cfg.get("channel"))
        state = parse_state(cfg, p)
        n = _require(cfg, "n", int)
        t_cfg = cfg.get("t", "auto")
        if t_cfg == "auto":
            t = tune_threshold(state.q, state.phi, p, n,
                               float(cfg.get("target_n_e_hat", 3.0)))
        else:
            t = float(t_cfg)
        config = SimConfig(n=n, rate=float(cfg.get("rate", 0.0)), t=t,
                           seed=int(cfg.get("seed", 0)), blocks=0,
                           decoder_mode=GENIE)
        report = verify_type_concentration(
            state, config, p, int(cfg.get("num_accepted", 10_000)))
        payload = dict(report, mean_type=report["mean_type"].tolist(), t=t)
        write_json(out / "concentration_summary.json", payload)
        if not quiet:
            click.echo(f"accept rate {report['acceptance_rate']:.3g}, "
                       f"L1 to minimizer {report['l1_to_minimizer']:.3g}, "
                       f"empirical exponent {report['empirical_exponent']!r} "
                       f"vs E_hat {report['e_hat']!r}")

    _dispatch(run)


if __name__ == "__main__":
    main()
