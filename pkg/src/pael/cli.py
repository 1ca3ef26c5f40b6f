"""Command-line entry point: load an INI experiment, run it, write metrics."""

import argparse
import configparser
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from pael.agents import StepSchedule
from pael.data import GeneratorConfig, generate, pooled
from pael.errors import ConfigError, PaelError, RunFailure
from pael.model import HypothesisSpec, LocalObjective
from pael.orchestrator import BASELINE_ALIASES, RunConfig, run, run_baseline
from pael.smoothing import KernelSpec

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
DEFAULT_OUT = "pael-out"
REQUIRED = object()


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _names(text):
    return tuple(v for v in text.replace(",", " ").split())


# section -> key -> (parser, default)
SCHEMA = {
    "data": {
        "theta_star": (_floats, REQUIRED),
        "noise_std": (float, 0.1),
        "n": (int, 400),
        "k": (int, 4),
        "shard_mode": (str, "partition"),
        "heldout_size": (int, 200),
        "heldout_mode": (str, "fresh-each-round"),
        "signals": (str, "shard-summary"),
        "signal_dim": (int, 2),
        "box_low": (float, -2.0),
        "box_high": (float, 2.0),
        "seed": (int, 0),
    },
    "model": {
        "family": (str, "linear-basis"),
        "feature_map": (str, "raw"),
        "input_dim": (int, 1),
        "degree": (int, 2),
        "order": (int, 8),
        "hidden": (int, 4),
        "feature_seed": (int, 0),
        "theta0": (_floats, None),
    },
    "kernel": {
        "kernel": (str, "gaussian"),
        "bandwidth": (str, "fixed"),
        "h": (float, 1.0),
    },
    "schedule": {
        "T": (float, 10.0),
        "N": (int, 200),
    },
    "principal": {
        "tol": (float, 1e-10),
        "max_sweeps": (int, 100),
        "sweep_tol": (float, 1e-8),
        "abort_after": (int, 3),
        "outer": (str, "newton"),
    },
    "output": {
        "dir": (str, None),
        "baselines": (_names, ()),
    },
}


def _describe_defaults():
    lines = ["config sections and defaults:"]
    for section, keys in SCHEMA.items():
        lines.append(f"  [{section}]")
        for key, (_, default) in keys.items():
            if default is REQUIRED:
                shown = "(required)"
            elif default is None:
                shown = "(unset)"
            elif isinstance(default, tuple):
                shown = ", ".join(map(str, default)) or "(none)"
            else:
                shown = default
            lines.append(f"    {key} = {shown}")
    lines.append(f"output directory: --out, then [output] dir, then $PAEL_OUT, then ./{DEFAULT_OUT}")
    return "\n".join(lines)


def read_config(path) -> dict:
    """Parse an INI file into ``{section: {key: value}}`` with defaults filled in."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc

    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key in parser[section]:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")

    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (conv, default) in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    values[section][key] = conv(raw)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {key!r} in [{section}]: {raw!r}") from exc
            elif default is REQUIRED:
                raise ConfigError(f"missing required key {key!r} in [{section}]")
            else:
                values[section][key] = default
    return values


def build_config(values: dict, seed=None) -> RunConfig:
    d, m, kern, sched, prin = (values[s] for s in ("data", "model", "kernel", "schedule", "principal"))
    try:
        spec = HypothesisSpec(
            family=m["family"],
            feature_map=m["feature_map"],
            input_dim=m["input_dim"],
            degree=m["degree"],
            order=m["order"],
            hidden=m["hidden"],
            feature_seed=m["feature_seed"],
        )
        data = GeneratorConfig(
            theta_star=d["theta_star"],
            spec=spec,
            noise_std=d["noise_std"],
            n=d["n"],
            k=d["k"],
            shard_mode=d["shard_mode"],
            heldout_size=d["heldout_size"],
            heldout_mode=d["heldout_mode"],
            signals=d["signals"],
            signal_dim=d["signal_dim"],
            box=(d["box_low"], d["box_high"]),
            seed=d["seed"] if seed is None else seed,
        )
        return RunConfig(
            data=data,
            model=spec,
            kernel=KernelSpec(kern["kernel"], kern["bandwidth"], kern["h"]),
            schedule=StepSchedule(sched["T"], sched["N"]),
            theta0=m["theta0"],
            tol=prin["tol"],
            max_sweeps=prin["max_sweeps"],
            sweep_tol=prin["sweep_tol"],
            abort_after=prin["abort_after"],
            outer=prin["outer"],
            baselines=values["output"]["baselines"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path, seed=None):
    values = read_config(path)
    config = build_config(values, seed)
    values["data"]["seed"] = config.seed
    return config, values


def output_dir(flag, values) -> Path:
    chosen = flag or values["output"]["dir"] or os.environ.get("PAEL_OUT") or DEFAULT_OUT
    return Path(chosen)


# ---------------------------------------------------------------------------
# metrics


def _fmt(x) -> str:
    if x is None:
        return ""
    return format(float(x), ".17g")


def _json_value(x):
    if isinstance(x, np.ndarray):
        return _json_value(x.tolist())
    if isinstance(x, (list, tuple)):
        return [_json_value(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _json_value(v) for k, v in x.items()}
    if isinstance(x, (np.floating, float)):
        x = float(x)
        # repr round-trips exactly; non-finite values have no JSON literal
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def rounds_header(k):
    return (
        ["t", "loglik", "mu", "sigma2", "max_constraint_residual"]
        + [f"risk_{i + 1}" for i in range(k)]
        + [f"heldout_sqerr_{i + 1}" for i in range(k)]
        + ["n_degenerate"]
    )


def _round_row(rec):
    beta = rec.beta
    max_res = None if rec.constraint_residuals is None else float(np.max(rec.constraint_residuals))
    return (
        [str(rec.t), _fmt(rec.loglik), _fmt(beta.mu if beta else None), _fmt(beta.sigma2 if beta else None)]
        + [_fmt(max_res)]
        + [_fmt(v) for v in rec.local_risk]
        + [_fmt(v) for v in rec.heldout_sqerr]
        + [str(len(rec.degenerate_rows))]
    )


def summarize(result, values=None) -> dict:
    config = result.config
    out = {
        "kind": result.kind,
        "reason": result.reason,
        "rounds": len(result.records),
        "seed": config.seed,
        "theta_bar": result.theta_bar,
        "loglik": result.loglik,
        "heldout_mse": result.heldout_mse,
        "pooled_risk": result.pooled_risk,
        "degenerate_rounds": result.degenerate_rounds,
    }
    if result.records:
        last = result.records[-1]
        if last.beta is not None:
            out["beta"] = {"mu": last.beta.mu, "sigma2": last.beta.sigma2}
    if result.baselines:
        out["baselines"] = {
            kind: {"theta_bar": b.theta_bar, "heldout_mse": b.heldout_mse, "pooled_risk": b.pooled_risk}
            for kind, b in result.baselines.items()
        }
    if values is not None:
        out["config"] = values
    return _json_value(out)


def emit_metrics(result, out_dir, values=None) -> dict:
    """Write rounds.csv, summary.json, pij_final.csv and timing.json; return their paths.

    Wall-clock figures go only to timing.json so the other three files are
    byte-identical across repeated runs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    k = result.theta_bar.shape[0]
    paths = {"rounds": out / "rounds.csv", "summary": out / "summary.json", "timing": out / "timing.json"}

    with open(paths["rounds"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(rounds_header(k))
        for rec in result.records:
            writer.writerow(_round_row(rec))

    if result.records:
        paths["pij"] = out / "pij_final.csv"
        with open(paths["pij"], "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"p_{j + 1}" for j in range(k)])
            for row in result.records[-1].p_hat:
                writer.writerow([_fmt(v) for v in row])

    with open(paths["summary"], "w") as fh:
        json.dump(summarize(result, values), fh, indent=2, sort_keys=True)
        fh.write("\n")
    timing = {"wall_time": result.wall_time, "round_wall_time": [rec.wall_time for rec in result.records]}
    with open(paths["timing"], "w") as fh:
        json.dump(_json_value(timing), fh, indent=2)
        fh.write("\n")
    return paths


def read_rounds(path):
    """Parse rounds.csv back into ``(header, rows)`` with floats where present."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) if v else None for v in row] for row in reader]
    return header, rows


# ---------------------------------------------------------------------------
# oracle suite


def oracle_suite(config: RunConfig, instances: int = 20):
    """Compare the solvers with the brute-force references; returns ``[(name, ok, detail)]``."""
    from pael import oracle
    from pael.principal import _dual_value, solve_lambda_row, solve_principal_from_residuals

    rng = np.random.default_rng(config.seed)
    checks = []

    lam, status = solve_lambda_row(np.array([0.75, 0.25]), np.array([[1.0, 0.0], [-1.0, 0.0]]))
    ref = oracle.grid_lambda([0.75, 0.25], [[1.0, 0.0], [-1.0, 0.0]])
    err = max(abs(lam[0] - 0.5), abs(ref.lam[0] - 0.5))
    checks.append(("analytic dual", status == "converged" and err <= 1e-3, f"lam1 newton={lam[0]:.9g} grid={ref.lam[0]:.9g}"))

    _, status = solve_lambda_row(np.array([0.5, 0.5]), np.array([[1.0, 0.0], [1.0, 0.0]]))
    ref = oracle.grid_lambda([0.5, 0.5], [[1.0, 0.0], [1.0, 0.0]])
    checks.append(("identical moments unbounded", status == "unbounded" and not ref.feasible, status))

    lam_err = val_err = 0.0
    mismatches = tried = 0
    while tried < instances:
        m = int(rng.integers(2, 4))
        w = rng.dirichlet(np.ones(m))
        g = rng.normal(size=(m, 2))
        if tried % 2 == 0:
            g = g - w @ g
        if abs(oracle.hull_verdict(w, g)[1]) < 0.05:
            continue
        tried += 1
        lam, status = solve_lambda_row(w, g)
        ref = oracle.grid_lambda(w, g)
        if ref.feasible != (status == "converged"):
            mismatches += 1
        elif ref.feasible:
            lam_err = max(lam_err, float(np.abs(lam - ref.lam).max()))
            val_err = max(val_err, abs(_dual_value(w, g, lam) - ref.value))
    checks.append(
        (
            f"newton vs grid duals ({instances} rows)",
            mismatches == 0 and lam_err <= 1e-3 and val_err <= 1e-6,
            f"verdict mismatches={mismatches} max|dlam|={lam_err:.3g} max|dvalue|={val_err:.3g}",
        )
    )

    r = rng.normal(size=3)
    W = np.full((3, 3), 1.0 / 3.0)
    sol = solve_principal_from_residuals(W, r, method=config.outer)
    mu, s2, _, _ = oracle.grid_beta_from_residuals(W, r)
    dev = max(abs(sol.beta.mu - r.mean()), abs(sol.beta.sigma2 - r.var()))
    checks.append(
        ("uniform-weight beta", dev <= 1e-6 and abs(mu - r.mean()) <= 1e-2, f"solver dev={dev:.3g} grid mu={mu:.6g}")
    )

    data = generate(config.data)
    from pael.orchestrator import initialize
    from pael.principal import agent_residuals

    state = initialize(config, data)
    k = len(data.shards)
    if k <= 5:
        stream = data.heldout
        datum = (stream.X[0], stream.y[0])
        thetas = np.array([(rng.normal(size=config.model.n_params) * 0.1) + config.data.theta_star for _ in range(k)])
        r = agent_residuals(datum, config.model, thetas)
        sol = solve_principal_from_residuals(state.w, r, method=config.outer)
        mu, s2, _, bad = oracle.grid_beta_from_residuals(state.w, r)
        scale = max(float(np.ptp(r)), 1e-12)
        dev = max(abs(sol.beta.mu - mu), abs(sol.beta.sigma2 - s2) / scale) / scale
        checks.append(("config instance beta vs grid", bad == 0 and dev <= 1e-2, f"relative dev={dev:.3g}"))

    if config.model.family == "linear-basis":
        from pael.orchestrator import centralized_fit

        X, y = pooled(data.shards)
        ref = oracle.least_squares(X, y, config.model)
        ours = centralized_fit(config, data.shards)
        dev = float(np.abs(ref - ours).max())
        checks.append(("centralized vs normal equations", dev <= 1e-6, f"max|dtheta|={dev:.3g}"))

    theta = np.asarray(config.data.theta_star)
    devs = [
        abs(LocalObjective(sh, config.model).risk(theta) - oracle.naive_risk(sh.X, sh.y, config.model, theta))
        for sh in data.shards
    ]
    checks.append(("local risk vs naive sum", max(devs) <= 1e-10, f"max dev={max(devs):.3g}"))
    return checks


# ---------------------------------------------------------------------------
# entry point


def _parser():
    p = argparse.ArgumentParser(
        prog="pael",
        description="Kernel-smoothed empirical-likelihood aggregation of distributed learners.",
        epilog=_describe_defaults(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, text in (
        ("run", "run the principal-agent loop and write metrics"),
        ("baseline", "run a comparison baseline and write metrics"),
        ("validate", "check a config without running it"),
        ("oracle", "cross-check the solvers against brute-force references"),
    ):
        cmd = sub.add_parser(name, help=text, epilog=_describe_defaults(),
                             formatter_class=argparse.RawDescriptionHelpFormatter)
        cmd.add_argument("config", help="INI experiment file")
        cmd.add_argument("--seed", type=int, default=None, help="override [data] seed")
        if name in ("run", "baseline"):
            cmd.add_argument("--out", default=None, help="output directory")
        if name == "baseline":
            cmd.add_argument("--kind", required=True, choices=sorted(BASELINE_ALIASES))
    return p


def _fail(code, payload):
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config, values = load_config(args.config, args.seed)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, {"status": "config-error", "detail": str(exc)})

    try:
        if args.command == "validate":
            print(f"ok: {args.config}")
            return EXIT_OK
        if args.command == "oracle":
            checks = oracle_suite(config)
            width = max(len(name) for name, _, _ in checks)
            for name, ok, detail in checks:
                print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
            return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_RUNTIME
        out = output_dir(args.out, values)
        if args.command == "run":
            result = run(config)
        else:
            result = run_baseline(config, args.kind)
        emit_metrics(result, out, values)
        summary = summarize(result)
        if args.command == "baseline":
            print(json.dumps({k: summary[k] for k in ("kind", "reason", "theta_bar", "heldout_mse")}))
        else:
            print(json.dumps({k: summary[k] for k in ("kind", "reason", "rounds", "loglik")}))
        return EXIT_OK
    except RunFailure as exc:
        return _fail(EXIT_RUNTIME, exc.report())
    except (OSError, PaelError) as exc:
        return _fail(EXIT_RUNTIME, {"status": "failed", "cause": type(exc).__name__, "detail": str(exc)})


if __name__ == "__main__":
    sys.exit(main())
