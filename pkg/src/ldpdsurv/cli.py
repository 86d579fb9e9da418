"""Command-line front end: simulate, fit, summarize, diagnose.

Every command reads a flat ``key = value`` config file (``--config``), with
any key overridable by a same-named command-line flag; flags win.  The fully
resolved configuration is written back to ``<out>/config.resolved`` so a run
can be reproduced from its output directory alone.  Exit codes: 0 success,
2 usage (bad flags, unknown keys, bad enum values), 3 validation (missing or
invalid inputs), 4 runtime (failures after inputs validated).

Config grammar: one ``key = value`` pair per line; blank lines and lines
starting with ``#`` are ignored; keys may not repeat.  Booleans accept
true/false, yes/no, 1/0.  List values are comma-separated.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .data import CsvSchema, DataError, ingest_csv
from .diagnostics import (
    effective_sample_size,
    mann_kendall_pvalue,
    potential_scale_reduction,
)
from .functionals import (
    CovariateProfile,
    bayes_factor_spike,
    default_time_grid,
    log_scale_correlations,
    posterior_curves,
    posterior_scalars,
    hpd_interval,
    spike_probability,
)
from .mcmc import (
    ChainConfig,
    concatenate_runs,
    load_checkpoint,
    load_draws,
    resume_chain,
    run_chain,
    save_checkpoint,
    save_draws,
)
from .model import PriorSpec
from .simgen import VisitSchedule, generate

__all__ = ["main"]


class UsageError(Exception):
    """Bad invocation: unknown keys, malformed config, invalid enum values."""


class ValidationError(Exception):
    """Inputs failed validation before any work started."""


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def _parse_list(text: str) -> list:
    return [part.strip() for part in str(text).split(",") if part.strip()]


_REQUIRED = object()

# key -> (converter, default); _REQUIRED defaults must be supplied
_COMMON_KEYS = {
    "seed": (int, _REQUIRED),
    "out": (str, _REQUIRED),
}

_KEYSPEC = {
    "simulate": {
        **_COMMON_KEYS,
        "scenario": (str, "I"),
        "n_per_group": (int, 250),
        "n_visits": (int, 6),
        "first_visit_mean": (float, 7.0),
        "first_visit_sd": (float, 0.2),
        "gap_mean": (float, 1.0),
        "gap_sd": (float, 0.05),
    },
    "fit": {
        **_COMMON_KEYS,
        "data": (str, _REQUIRED),
        "onset_columns": (_parse_list, ["onset_x0", "onset_x1"]),
        "event_columns": (_parse_list, ["event_x0", "event_x1"]),
        "n_items": (int, 0),
        "iterations": (int, 2000),
        "burn_in": (int, 500),
        "thin": (int, 1),
        "n_chains": (int, 1),
        "truncation_level": (int, 50),
        "spike_weight": (float, 0.5),
        "slab_shape1": (float, 1.0),
        "slab_shape2": (float, 1.0),
        "strength_loc": (float, 10.0),
        "strength_scale": (float, 200.0),
        "kernel_cov_df": (float, 0.0),
        "base_cov_df": (float, 0.0),
        "resume": (_parse_bool, False),
    },
    "summarize": {
        **_COMMON_KEYS,
        "draws": (str, _REQUIRED),
        "profiles": (str, ""),
        "functionals": (_parse_list, ["survival", "cdf", "hazard"]),
        "grid_points": (int, 201),
        "grid_min": (float, 0.0),
        "grid_max": (float, 0.0),
        "level": (float, 0.95),
    },
    "diagnose": {
        **_COMMON_KEYS,
        "draws": (str, _REQUIRED),
    },
}

_PATH_KEYS = ("out", "data", "draws", "profiles")


def _read_config_file(path: Path) -> dict:
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in values:
            raise UsageError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, config-file values, and flags (in rising precedence)."""
    spec = _KEYSPEC[command]
    raw = {}
    if getattr(args, "config", None):
        raw = _read_config_file(Path(args.config))
    unknown = set(raw) - set(spec)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
    resolved = {}
    for key, (convert, default) in spec.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            resolved[key] = flag_value if not isinstance(flag_value, str) else convert(flag_value)
        elif key in raw:
            try:
                resolved[key] = convert(raw[key])
            except UsageError:
                raise
            except (TypeError, ValueError) as exc:
                raise UsageError(f"bad value for {key!r}: {raw[key]!r} ({exc})")
        elif default is _REQUIRED:
            raise UsageError(f"{command} requires {key!r} (flag --{key} or config file)")
        else:
            resolved[key] = default
    for key in _PATH_KEYS:
        if key in resolved and resolved[key]:
            resolved[key] = str(Path(resolved[key]).absolute())
    if command == "simulate" and resolved["scenario"].upper() not in ("I", "II"):
        raise UsageError(f"unknown scenario {resolved['scenario']!r}; choose I or II")
    return resolved


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_resolved_config(command: str, config: dict, out_dir: Path) -> None:
    lines = [f"# resolved configuration for 'ldpdsurv {command}'"]
    for key in sorted(config):
        lines.append(f"{key} = {_render_value(config[key])}")
    (out_dir / "config.resolved").write_text("\n".join(lines) + "\n")


def _write_csv(path: Path, header: list, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_simulate(config: dict) -> int:
    try:
        schedule = VisitSchedule(
            n_visits=config["n_visits"],
            first_visit_mean=config["first_visit_mean"],
            first_visit_sd=config["first_visit_sd"],
            gap_mean=config["gap_mean"],
            gap_sd=config["gap_sd"],
        )
        if config["n_per_group"] < 1:
            raise ValueError("n_per_group must be at least 1")
        out_dir = Path(config["out"])
        out_dir.mkdir(parents=True, exist_ok=True)
    except (ValueError, OSError) as exc:
        raise ValidationError(str(exc))

    sim = generate(
        truth=config["scenario"].upper(),
        n_per_group=config["n_per_group"],
        schedule=schedule,
        seed=config["seed"],
    )
    sim.write_data_csv(out_dir / "data.csv")
    sim.write_truth_csv(out_dir / "truth.csv")
    truth_params = {
        label: {
            "weights": group.weights.tolist(),
            "means": group.means.tolist(),
            "covariances": group.covariances.tolist(),
        }
        for label, group in sim.truth.groups.items()
    }
    manifest = {
        "command": "simulate",
        "version": __version__,
        "seed": config["seed"],
        "scenario": sim.truth.name,
        "n_per_group": config["n_per_group"],
        "schedule": {
            "n_visits": schedule.n_visits,
            "first_visit_mean": schedule.first_visit_mean,
            "first_visit_sd": schedule.first_visit_sd,
            "gap_mean": schedule.gap_mean,
            "gap_sd": schedule.gap_sd,
        },
        "truth": truth_params,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_resolved_config("simulate", config, out_dir)
    print(
        f"simulate: wrote {sim.dataset.n_units} units "
        f"(scenario {sim.truth.name}) to {out_dir}"
    )
    return 0


def _load_fit_inputs(config: dict):
    data_path = Path(config["data"])
    if not data_path.is_file():
        raise ValidationError(f"dataset not found: {data_path}")
    schema = CsvSchema(
        onset_covariates=list(config["onset_columns"]),
        event_covariates=list(config["event_columns"]),
    )
    try:
        dataset = ingest_csv(
            data_path, schema, n_items=config["n_items"] or None
        )
        prior = PriorSpec(
            n_items=dataset.n_items,
            n_onset_covariates=dataset.n_onset_covariates,
            n_event_covariates=dataset.n_event_covariates,
            spike_weight=config["spike_weight"],
            slab_shape1=config["slab_shape1"],
            slab_shape2=config["slab_shape2"],
            strength_loc=config["strength_loc"],
            strength_scale=config["strength_scale"],
            kernel_cov_df=config["kernel_cov_df"],
            base_cov_df=config["base_cov_df"],
            truncation_level=config["truncation_level"],
        )
        chain_config = ChainConfig(
            iterations=config["iterations"],
            burn_in=config["burn_in"],
            thin=config["thin"],
            n_chains=config["n_chains"],
            seed=config["seed"],
        )
    except (DataError, ValueError) as exc:
        raise ValidationError(str(exc))
    return dataset, prior, chain_config


def cmd_fit(config: dict) -> int:
    dataset, prior, chain_config = _load_fit_inputs(config)
    out_dir = Path(config["out"])
    checkpoint_dir = out_dir / "checkpoint"
    draws_dir = out_dir / "draws"
    if config["resume"]:
        if not checkpoint_dir.is_dir():
            raise ValidationError(f"no checkpoint to resume from in {out_dir}")
        if not draws_dir.is_dir():
            raise ValidationError(f"no previous draws found in {out_dir}")
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(str(exc))

    start = time.perf_counter()
    if config["resume"]:
        earlier = load_draws(draws_dir)
        later, finals = resume_chain(
            dataset, prior, chain_config, checkpoint_dir, collect_final=True
        )
        draws = concatenate_runs(earlier, later)
    else:
        draws, finals = run_chain(dataset, prior, chain_config, collect_final=True)
    elapsed = time.perf_counter() - start

    save_draws(draws, draws_dir)
    save_checkpoint(checkpoint_dir, finals, sweeps_done=chain_config.iterations)
    _write_resolved_config("fit", config, out_dir)

    rates = draws.acceptance_rates()
    occupied = draws.occupied_clusters
    lines = [
        f"fit report ({dataset.n_units} units, {dataset.n_items} item(s))",
        f"chains: {chain_config.n_chains}, sweeps: {chain_config.iterations}, "
        f"burn-in: {chain_config.burn_in}, thin: {chain_config.thin}",
        f"retained draws: {draws.n_draws}",
        f"wall clock: {elapsed:.2f} s",
        "acceptance rates:",
    ]
    for name in sorted(rates):
        counts = draws.acceptance[name]
        lines.append(
            f"  {name}: {rates[name]:.4f} "
            f"({counts['accepts']}/{counts['attempts']})"
        )
    lines.append("occupied clusters per chain (min / mean / max over sweeps):")
    for c in range(occupied.shape[0]):
        trace = occupied[c]
        lines.append(
            f"  chain {c}: {trace.min()} / {trace.mean():.2f} / {trace.max()}"
        )
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")
    print(f"fit: {draws.n_draws} draws in {elapsed:.2f} s -> {out_dir}")
    return 0


def _load_profiles(config: dict, meta: dict) -> list:
    n_items = int(meta["n_items"])
    p = int(meta["n_onset_covariates"])
    q = int(meta["n_event_covariates"])
    path = config.get("profiles", "")
    if not path:
        profiles = []
        onset_base = np.zeros(p)
        onset_base[0] = 1.0
        event_base = np.zeros(q)
        event_base[0] = 1.0
        for j in range(1, n_items + 1):
            for target in ("onset", "gap"):
                profiles.append(
                    CovariateProfile(
                        onset_covariates=onset_base,
                        event_covariates=event_base,
                        item_index=j,
                        target=target,
                        label=f"item{j}_{target}_baseline",
                    )
                )
        return profiles
    csv_path = Path(path)
    if not csv_path.is_file():
        raise ValidationError(f"profiles file not found: {csv_path}")
    onset_cols = [f"onset_x{k}" for k in range(p)]
    event_cols = [f"event_x{k}" for k in range(q)]
    profiles = []
    with open(csv_path, newline="") as fh:
        reader = csv.DictReader(fh)
        needed = {"label", "target", "item", *onset_cols, *event_cols}
        missing = needed - set(reader.fieldnames or [])
        if missing:
            raise ValidationError(
                f"profiles file lacks columns: {sorted(missing)}"
            )
        for row in reader:
            try:
                profiles.append(
                    CovariateProfile(
                        onset_covariates=[float(row[c]) for c in onset_cols],
                        event_covariates=[float(row[c]) for c in event_cols],
                        item_index=int(row["item"]),
                        target=row["target"].strip(),
                        label=row["label"].strip(),
                    )
                )
            except (ValueError, KeyError) as exc:
                raise ValidationError(f"bad profile row {row!r}: {exc}")
    if not profiles:
        raise ValidationError(f"profiles file {csv_path} contains no rows")
    return profiles


def cmd_summarize(config: dict) -> int:
    draws_dir = Path(config["draws"])
    if not (draws_dir / "manifest.json").is_file():
        raise ValidationError(f"no draw store at {draws_dir}")
    try:
        draws = load_draws(draws_dir)
    except (OSError, ValueError) as exc:
        raise ValidationError(str(exc))
    if draws.n_draws == 0:
        raise ValidationError("draw store is empty")
    if not 0.0 < config["level"] < 1.0:
        raise ValidationError("level must lie in (0, 1)")
    if config["grid_points"] < 2:
        raise ValidationError("grid_points must be at least 2")
    known = {"survival", "cdf", "hazard", "density"}
    bad = set(config["functionals"]) - known
    if bad:
        raise ValidationError(f"unknown functionals: {sorted(bad)}")
    profiles = _load_profiles(config, draws.meta)
    out_dir = Path(config["out"])
    (out_dir / "tables").mkdir(parents=True, exist_ok=True)
    (out_dir / "curves").mkdir(parents=True, exist_ok=True)

    if config["grid_min"] > 0.0 and config["grid_max"] > config["grid_min"]:
        grid = np.geomspace(
            config["grid_min"], config["grid_max"], config["grid_points"]
        )
    elif config["grid_min"] > 0.0 or config["grid_max"] > 0.0:
        raise ValidationError("grid_min and grid_max must both be set, with min < max")
    else:
        grid = default_time_grid(draws, profiles, n_points=config["grid_points"])

    for functional in config["functionals"]:
        rows = []
        for profile in profiles:
            curve = posterior_curves(
                draws, profile, grid, functional=functional, level=config["level"]
            )
            for t, mean, lo, hi in zip(
                curve.times, curve.mean, curve.hpd_lower, curve.hpd_upper
            ):
                rows.append([_fmt(t), _fmt(mean), _fmt(lo), _fmt(hi), profile.label])
        _write_csv(
            out_dir / "curves" / f"{functional}.csv",
            ["time", "mean", "hpd_lo", "hpd_hi", "profile_id"],
            rows,
        )

    median_rows = []
    for profile in profiles:
        med = posterior_scalars(draws, profile, "median")
        lo, hi = hpd_interval(med, config["level"])
        median_rows.append(
            [profile.label, profile.item_index, _fmt(np.mean(med)), _fmt(lo), _fmt(hi)]
        )
    _write_csv(
        out_dir / "tables" / "medians.csv",
        ["profile", "item", "mean", "hpd_lo", "hpd_hi"],
        median_rows,
    )

    corr_rows = [
        [row.first, row.second, _fmt(row.mean), _fmt(row.hpd_lower), _fmt(row.hpd_upper)]
        for row in log_scale_correlations(draws, level=config["level"])
    ]
    _write_csv(
        out_dir / "tables" / "correlations.csv",
        ["first", "second", "mean", "hpd_lo", "hpd_hi"],
        corr_rows,
    )

    pi0 = spike_probability(draws)
    spike_weight = draws.meta.get("spike_weight", 0.5)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        bf = bayes_factor_spike(draws, spike_weight)
    _write_csv(
        out_dir / "tables" / "bayes_factor.csv",
        ["spike_probability", "spike_weight", "bayes_factor"],
        [[_fmt(pi0), _fmt(spike_weight), _fmt(bf)]],
    )
    _write_resolved_config("summarize", config, out_dir)
    print(
        f"summarize: {len(profiles)} profile(s), "
        f"functionals {','.join(config['functionals'])}, "
        f"Bayes factor {bf:.4g} -> {out_dir}"
    )
    return 0


def _scalar_chain_matrices(draws) -> list:
    """Per-parameter (name, chains-by-draws matrix) pairs for diagnostics."""
    order = np.lexsort((draws.kept_sweeps, draws.chain_ids))
    ids = draws.chain_ids[order]
    chains = np.unique(ids)
    per_chain = draws.n_draws // chains.size

    def group(series):
        series = np.asarray(series, dtype=float)[order]
        return np.stack([series[ids == c][:per_chain] for c in chains])

    out = [
        ("discount", group(draws.discount)),
        ("strength", group(draws.strength)),
    ]
    dim = draws.kernel_cov.shape[-1]
    n_items = dim // 2
    for i in range(dim):
        label = f"onset{i + 1}" if i < n_items else f"gap{i - n_items + 1}"
        out.append((f"kernel_var_{label}", group(draws.kernel_cov[:, i, i])))
    out.append(("log_likelihood", np.asarray(draws.log_likelihood, dtype=float)))
    return out


def cmd_diagnose(config: dict) -> int:
    draws_dir = Path(config["draws"])
    if not (draws_dir / "manifest.json").is_file():
        raise ValidationError(f"no draw store at {draws_dir}")
    try:
        draws = load_draws(draws_dir)
    except (OSError, ValueError) as exc:
        raise ValidationError(str(exc))
    if draws.n_draws == 0:
        raise ValidationError("draw store is empty")
    out_dir = Path(config["out"])
    (out_dir / "tables").mkdir(parents=True, exist_ok=True)

    rows = []
    notices = []
    flagged = 0
    for name, chains in _scalar_chain_matrices(draws):
        ess = float(sum(effective_sample_size(chain) for chain in chains))
        try:
            rhat = potential_scale_reduction(chains, split=True)
            rhat_text = _fmt(rhat)
            flag = "yes" if rhat > 1.01 else "no"
            flagged += flag == "yes"
        except ValueError:
            rhat_text, flag = "", "n/a"
            notices.append(
                f"split scale-reduction skipped for {name}: chains too short"
            )
        trend = min(mann_kendall_pvalue(chain) for chain in chains)
        rows.append([name, _fmt(ess), rhat_text, _fmt(trend), flag])
    _write_csv(
        out_dir / "tables" / "diagnostics.csv",
        ["parameter", "ess", "rhat", "trend_pvalue", "flag"],
        rows,
    )

    lines = [
        f"diagnostics over {draws.n_draws} retained draws, "
        f"{draws.n_chains} chain(s)",
        f"parameters flagged (split scale reduction > 1.01): {flagged}",
    ]
    lines.extend(notices)
    (out_dir / "report.txt").write_text("\n".join(lines) + "\n")
    _write_resolved_config("diagnose", config, out_dir)
    print(f"diagnose: {len(rows)} parameters, {flagged} flagged -> {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldpdsurv",
        description="Bayesian mixture survival analysis for doubly-interval-censored data",
    )
    parser.add_argument("--version", action="version", version=f"ldpdsurv {__version__}")
    sub = parser.add_subparsers(dest="command")
    help_text = {
        "simulate": "generate a synthetic censored dataset with known truth",
        "fit": "run the Gibbs sampler on a dataset CSV",
        "summarize": "turn a draw store into curve and table CSVs",
        "diagnose": "convergence diagnostics for a draw store",
    }
    for command, spec in _KEYSPEC.items():
        cmd = sub.add_parser(command, help=help_text[command])
        cmd.add_argument("--config", help="key = value config file")
        for key, (convert, default) in spec.items():
            if convert is _parse_bool:
                cmd.add_argument(
                    f"--{key}", action="store_const", const=True, default=None
                )
            elif convert in (int, float):
                cmd.add_argument(f"--{key}", type=convert, default=None)
            else:
                cmd.add_argument(f"--{key}", default=None)
    return parser


_DISPATCH = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "summarize": cmd_summarize,
    "diagnose": cmd_diagnose,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    if not args.command:
        parser.print_help(sys.stderr)
        return 2
    try:
        config = resolve_config(args.command, args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    try:
        return _DISPATCH[args.command](config)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return 3
    except KeyboardInterrupt:
        raise
    except Exception as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
