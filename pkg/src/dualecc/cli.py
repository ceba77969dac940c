"""Command-line interface.

Subcommands: ``synth``, ``calibrate``, ``couple``, ``verify``, ``spectrum``
and ``run``. Settings come from an optional INI file (sections
``[pipeline]`` and ``[synthetic]``), then the ``DUALECC_OUTPUT_DIR``
environment variable, then command-line flags, later sources winning.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import datetime as dt
import logging
import os
import sys
from collections import defaultdict
from pathlib import Path

from dualecc import __version__, io
from dualecc.core import ScenarioSet
from dualecc.errors import DualEccError, StageError
from dualecc.pipeline import (
    METHODS,
    CoupledCase,
    PipelineConfig,
    coefficient_records,
    couple_cases,
    load_inputs,
    publish,
    score_cases,
)
from dualecc.spectral import mean_spectrum
from dualecc.synthetic import GeneratorConfig, generate

log = logging.getLogger("dualecc")

OUTPUT_ENV = "DUALECC_OUTPUT_DIR"

_INT_KEYS = {"window_length_days", "n_members", "n_lead_times", "bootstrap_replicates", "seed",
             "min_samples", "min_pairs", "n_bins"}
_DATE_KEYS = {"verify_start", "verify_end"}


def _pipeline_value(key, text):
    if key in _INT_KEYS:
        return int(text)
    if key in _DATE_KEYS:
        return dt.date.fromisoformat(text)
    if key == "keep_scenarios":
        return text.strip().lower() in ("1", "true", "yes", "on")
    if key == "methods":
        return tuple(m.strip() for m in text.split(",") if m.strip())
    return text


def read_config(path) -> tuple:
    """Parse an INI file into ``(pipeline_settings, generator_settings)`` dicts."""
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_file(fh)
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    pipe = {}
    if parser.has_section("pipeline"):
        for key, text in parser.items("pipeline"):
            if key not in known:
                raise DualEccError(f"{path}: unknown [pipeline] key {key!r}")
            pipe[key] = _pipeline_value(key, text)
    synth = dict(parser.items("synthetic")) if parser.has_section("synthetic") else {}
    return pipe, synth


def _add_io(p, scenarios=False, inputs=True):
    if inputs:
        p.add_argument("--forecasts", dest="forecast_csv", type=Path, help="forecast CSV")
    if scenarios:
        p.add_argument("--scenarios", type=Path, required=True, help="scenario CSV written by `couple`")
    p.add_argument("--observations", dest="observation_csv", type=Path, help="observation CSV")
    p.add_argument("-o", "--output-dir", dest="output_dir", type=Path, help=f"output directory (env {OUTPUT_ENV})")


def _add_pipeline(p):
    p.add_argument("--window", dest="window_length_days", type=int, help="training window in days (45)")
    p.add_argument("--methods", help=f"comma-separated subset of {','.join(METHODS)}")
    p.add_argument("--replicates", dest="bootstrap_replicates", type=int, help="bootstrap replicates (500)")
    p.add_argument("--seed", type=int, help="master seed (0)")
    p.add_argument("--start", dest="verify_start", type=dt.date.fromisoformat, help="first verification date")
    p.add_argument("--end", dest="verify_end", type=dt.date.fromisoformat, help="last verification date")
    p.add_argument("--tie-policy", choices=("random", "first-occurrence"))
    p.add_argument("--members", dest="n_members", type=int, help="expected ensemble size")
    p.add_argument("--lead-times", dest="n_lead_times", type=int, help="expected number of lead times")
    p.add_argument("--bins", dest="n_bins", type=int, help="bins of the CRPS decomposition (10)")
    p.add_argument("--levels", dest="decomposition_levels", choices=("midpoint", "plotting"),
                   help="probability levels of the CRPS decomposition")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dualecc", description="ECC / d-ECC ensemble post-processing and verification")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-c", "--config", type=Path, help="INI file with [pipeline] and [synthetic] sections")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic forecast/observation data set")
    p.add_argument("-o", "--output-dir", dest="output_dir", type=Path)
    for f in dataclasses.fields(GeneratorConfig):
        kind = dt.date.fromisoformat if f.name == "start_date" else type(f.default)
        p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"gen_{f.name}", type=kind, help=f"default {f.default}")

    p = sub.add_parser("calibrate", help="fit EMOS and write coefficients and calibrated quantiles")
    _add_io(p)
    _add_pipeline(p)

    p = sub.add_parser("couple", help="calibrate and write coupled scenarios")
    _add_io(p)
    _add_pipeline(p)

    p = sub.add_parser("verify", help="score a scenario CSV against observations")
    _add_io(p, scenarios=True, inputs=False)
    _add_pipeline(p)

    p = sub.add_parser("spectrum", help="mean amplitude spectra of scenarios and observations")
    _add_io(p, scenarios=True, inputs=False)

    p = sub.add_parser("run", help="full pipeline: calibrate, couple, verify, report")
    _add_io(p)
    _add_pipeline(p)
    return ap


def _settings(args) -> tuple:
    pipe, synth = read_config(args.config) if args.config else ({}, {})
    if os.environ.get(OUTPUT_ENV):
        pipe["output_dir"] = Path(os.environ[OUTPUT_ENV])
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    for key, value in vars(args).items():
        if value is None:
            continue
        if key in known:
            pipe[key] = value
        elif key.startswith("gen_"):
            synth[key[4:]] = value
    return pipe, synth


def _require_output(pipe):
    if pipe.get("output_dir") is None:
        raise DualEccError(f"no output directory: pass --output-dir or set {OUTPUT_ENV}")
    return Path(pipe["output_dir"])


def _pipeline_config(pipe) -> PipelineConfig:
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    return PipelineConfig(**{k: v for k, v in pipe.items() if k in known})


def cmd_synth(pipe, synth) -> int:
    out = _require_output(pipe)
    cfg = GeneratorConfig.from_mapping(synth)
    forecasts, observations = generate(cfg)

    def write(d):
        io.write_forecasts(d / "forecasts.csv", forecasts)
        io.write_observations(d / "observations.csv", observations)
        io.write_json(d / "generator.json", cfg.to_dict())

    publish(out, write)
    print(f"wrote {len(forecasts)} forecasts to {out}")
    return 0


def cmd_calibrate(pipe, couple: bool) -> int:
    out = _require_output(pipe)
    config = _pipeline_config(pipe)
    forecasts, observations = load_inputs(config)
    cases = couple_cases(forecasts, observations, config, methods=None if couple else ())

    def write(d):
        io.write_coefficients(d / "coefficients.csv", coefficient_records(cases))
        io.write_quantiles(d / "quantiles.csv", ((c.date, c.station, c.lead_times, c.quantiles) for c in cases))
        if couple:
            io.write_scenarios(
                d / "scenarios.csv",
                ((c.date, c.station, c.lead_times, s) for c in cases for s in c.scenarios.values()),
            )

    publish(out, write)
    print(f"wrote {len(cases)} cases to {out}")
    return 0


def load_scenarios(path) -> list:
    """Group a scenario CSV into :class:`CoupledCase` objects."""
    try:
        groups = defaultdict(dict)
        lead_grid = {}
        for (date, station, prov), (lts, X) in io.read_scenarios(path).items():
            groups[(date, station)][prov] = ScenarioSet(X, prov)
            lead_grid[(date, station)] = lts
    except (OSError, DualEccError) as exc:
        raise StageError("ingest", str(exc)) from exc
    return [CoupledCase(d, s, lead_grid[(d, s)], scen) for (d, s), scen in sorted(groups.items())]


def _scenario_inputs(pipe, scenarios):
    if pipe.get("observation_csv") is None:
        raise DualEccError("--observations is required")
    cases = load_scenarios(scenarios)
    if not cases:
        raise StageError("ingest", f"{scenarios}: no scenarios")
    try:
        observations = io.ingest_observations(pipe["observation_csv"], cases[0].lead_times)
    except (OSError, DualEccError) as exc:
        raise StageError("ingest", str(exc)) from exc
    return cases, observations


def cmd_verify(pipe, scenarios) -> int:
    out = _require_output(pipe)
    config = _pipeline_config(pipe)
    cases, observations = _scenario_inputs(pipe, scenarios)
    report = score_cases(cases, observations, dataclasses.replace(config, keep_scenarios=False))
    publish(out, report.write)
    _summary(report)
    return 0


def cmd_spectrum(pipe, scenarios) -> int:
    out = _require_output(pipe)
    cases, observations = _scenario_inputs(pipe, scenarios)
    obs = {o.station_id: o for o in observations}
    collection = defaultdict(list)
    for c in cases:
        y = obs[c.station].get(c.date) if c.station in obs else None
        if y is None or any(v != v for v in y):
            continue
        collection["obs"].append(y)
        for prov, s in c.scenarios.items():
            collection[prov].extend(s.values.T)
    if not collection:
        raise StageError("spectrum", "empty verification set: no case has complete observations")
    try:
        spectrum = mean_spectrum(dict(collection))
    except DualEccError as exc:
        raise StageError("spectrum", str(exc)) from exc

    def write(d):
        io.write_table(d / "spectrum.csv", ["frequency", "source", "mean_amplitude"], spectrum.rows())
        io.write_json(d / "spectrum.json", {
            "frequencies": spectrum.frequencies, "mean_amplitude": spectrum.amplitudes, "counts": spectrum.counts,
            "high_frequency_amplitude": {s: spectrum.high_frequency_amplitude(s) for s in spectrum.amplitudes},
        })

    publish(out, write)
    for s in spectrum.amplitudes:
        print(f"{s:>24s}  high-frequency amplitude {io.fmt(spectrum.high_frequency_amplitude(s))}")
    return 0


def _summary(report):
    print(f"{report.n_cases} cases over {len(report.days)} days")
    for m, scores in report.mean_scores().items():
        print(f"{m:>24s}  " + "  ".join(f"{k}={io.fmt(v)}" for k, v in scores.items()))


def cmd_run(pipe) -> int:
    pipe = dict(pipe)
    pipe.setdefault("output_dir", None)
    if pipe["output_dir"] is None:
        raise DualEccError(f"no output directory: pass --output-dir or set {OUTPUT_ENV}")
    config = _pipeline_config(pipe)
    from dualecc.pipeline import run_pipeline

    report = run_pipeline(config)
    _summary(report)
    print(f"report written to {config.output_dir}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s"
    )
    try:
        pipe, synth = _settings(args)
        if args.command == "synth":
            return cmd_synth(pipe, synth)
        if args.command in ("calibrate", "couple"):
            return cmd_calibrate(pipe, couple=args.command == "couple")
        if args.command == "verify":
            return cmd_verify(pipe, args.scenarios)
        if args.command == "spectrum":
            return cmd_spectrum(pipe, args.scenarios)
        return cmd_run(pipe)
    except StageError as exc:
        print(f"dualecc: error: {exc}", file=sys.stderr)
        return 1
    except (DualEccError, OSError, ValueError) as exc:
        print(f"dualecc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
