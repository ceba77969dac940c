"""End-to-end orchestration: calibrate, couple, verify, report.

For every verification day and station the pipeline fits EMOS on the
preceding window, estimates the error correlation matrix from the same
window, emits calibrated quantiles and builds scenarios with each configured
coupling method (:func:`couple_cases`). The scenarios are then scored
alongside the raw ensemble and summarised (:func:`score_cases`).
"""

from __future__ import annotations

import datetime as dt
import logging
import os
import shutil
import tempfile
import zlib
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from dualecc import copula, io, verification
from dualecc._backend import BACKEND
from dualecc.calibration import MIN_SAMPLES, WINDOW_DAYS, TrainingWindow, emit_quantiles, fit_emos_all
from dualecc.core import TIE_POLICIES, ScenarioSet, as_matrix
from dualecc.errors import DualEccError, StageError, ValidationError
from dualecc.spectral import AmplitudeSpectrum, mean_spectrum

log = logging.getLogger(__name__)

METHODS = ("ecc", "decc", "climatological-template")
SCORE_KINDS = ("es", "vs0.5", "vs1", "crps_daily_mean", "crps_max_upward_ramp")
PRODUCTS = ("daily_mean", "max_upward_ramp")
MV_RANK_KINDS = ("average-rank", "band-depth")

_COUPLE, _SCORE = 0, 1


@dataclass
class PipelineConfig:
    """Settings for one pipeline run.

    ``methods`` lists the coupling methods to evaluate; the raw ensemble is
    always scored as the baseline. When ``verify_start`` is omitted the
    verification period starts one full window after the first forecast.
    """

    forecast_csv: Path | None = None
    observation_csv: Path | None = None
    output_dir: Path | None = None
    window_length_days: int = WINDOW_DAYS
    n_members: int | None = None
    n_lead_times: int | None = None
    methods: tuple = ("ecc", "decc")
    bootstrap_replicates: int = verification.N_REPLICATES
    seed: int = 0
    verify_start: dt.date | None = None
    verify_end: dt.date | None = None
    tie_policy: str = "random"
    min_samples: int = MIN_SAMPLES
    min_pairs: int = copula.MIN_PAIRS
    n_bins: int = verification.N_BINS
    decomposition_levels: str = "midpoint"
    keep_scenarios: bool = True

    def __post_init__(self):
        if isinstance(self.methods, str):
            self.methods = tuple(m.strip() for m in self.methods.split(",") if m.strip())
        self.methods = tuple(self.methods)
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValidationError(f"unknown coupling method(s) {bad}; choose from {METHODS}")
        if len(set(self.methods)) != len(self.methods):
            raise ValidationError("coupling methods listed twice")
        if self.tie_policy not in TIE_POLICIES:
            raise ValidationError(f"unknown tie policy {self.tie_policy!r}")
        if self.decomposition_levels not in verification.LEVEL_CONVENTIONS:
            raise ValidationError(f"unknown decomposition levels {self.decomposition_levels!r}")
        if self.window_length_days < 1 or self.bootstrap_replicates < 1 or self.n_bins < 1:
            raise ValidationError("window length, bootstrap replicates and bins must be positive")
        for name in ("verify_start", "verify_end"):
            v = getattr(self, name)
            if isinstance(v, str):
                setattr(self, name, dt.date.fromisoformat(v))
        if self.verify_start and self.verify_end and self.verify_end < self.verify_start:
            raise ValidationError("verification period ends before it starts")
        for name in ("forecast_csv", "observation_csv", "output_dir"):
            v = getattr(self, name)
            if v is not None and not isinstance(v, Path):
                setattr(self, name, Path(v))

    def summary(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, Path):
                d[k] = str(v)
            elif isinstance(v, dt.date):
                d[k] = v.isoformat()
            elif isinstance(v, tuple):
                d[k] = list(v)
        return d


def derive_products(scenarios) -> dict:
    """Per-member daily mean and maximal upward ramp ``max_t (x_{t+1} - x_t)``.

    >>> p = derive_products(np.array([[1.0], [2.0], [4.0], [3.0]]))
    >>> float(p["daily_mean"][0]), float(p["max_upward_ramp"][0])
    (2.5, 2.0)
    """
    X = np.asarray(as_matrix(scenarios), dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValidationError("products need at least two lead times")
    if np.any(np.isnan(X)):
        raise ValidationError("products need complete scenarios")
    return {"daily_mean": X.mean(axis=0), "max_upward_ramp": np.max(np.diff(X, axis=0), axis=0)}


def case_rng(seed: int, date: dt.date, station: str, stage: int = _COUPLE) -> np.random.Generator:
    """Independent, order-free random stream for one (date, station) case."""
    return np.random.default_rng([seed, date.toordinal(), zlib.crc32(station.encode()), stage])


@dataclass
class CoupledCase:
    """Scenarios for one (date, station), keyed by provenance.

    ``coefficients``, ``quantiles`` and ``error_correlation`` are ``None``
    when the scenarios were read from disk rather than produced here.
    """

    date: dt.date
    station: str
    lead_times: np.ndarray
    scenarios: dict
    coefficients: object = None
    quantiles: object = None
    error_correlation: np.ndarray | None = None


@dataclass
class CaseResult:
    date: dt.date
    station: str
    lead_times: np.ndarray
    obs: np.ndarray
    scores: dict
    ranks: dict
    products: dict
    obs_products: dict
    calibrated_ranks: np.ndarray | None = None
    lagged: np.ndarray | None = None
    coefficients: object = None
    series: dict = field(default_factory=dict, repr=False)
    scenarios: dict = field(default_factory=dict, repr=False)


@dataclass
class VerificationReport:
    settings: dict
    cases: list
    methods: tuple
    bootstrap: verification.BootstrapSummary
    histograms: dict
    decomposition: dict
    spectrum: AmplitudeSpectrum
    n_members: int
    lagged_correlation: np.ndarray | None = None
    calibrated_histogram: verification.RankHistogram | None = None

    @property
    def n_cases(self) -> int:
        return len(self.cases)

    @property
    def days(self) -> list:
        return sorted({c.date for c in self.cases})

    def mean_scores(self) -> dict:
        return {
            m: {k: float(np.mean([c.scores[m][k] for c in self.cases])) for k in SCORE_KINDS}
            for m in self.methods
        }

    def fraction_below(self, method_a: str, method_b: str, kind: str) -> float:
        """Share of bootstrap replicates in which ``method_a`` scores lower."""
        return self.bootstrap.fraction_below(f"{method_a}:{kind}", f"{method_b}:{kind}")

    def high_frequency_amplitudes(self) -> dict:
        return {s: self.spectrum.high_frequency_amplitude(s) for s in self.spectrum.amplitudes}

    def comparisons(self) -> dict:
        out = {}
        others = [m for m in self.methods if m != "raw"]
        for kind in SCORE_KINDS:
            for a in others:
                out[f"{a}<raw:{kind}"] = self.fraction_below(a, "raw", kind)
            if "decc" in others and "ecc" in others:
                out[f"decc<ecc:{kind}"] = self.fraction_below("decc", "ecc", kind)
        return out

    def to_dict(self) -> dict:
        out = {
            "settings": self.settings,
            "n_cases": self.n_cases,
            "n_days": len(self.days),
            "n_members": self.n_members,
            "methods": list(self.methods),
            "mean_scores": self.mean_scores(),
            "bootstrap": self.bootstrap.to_dict(),
            "comparisons": self.comparisons(),
            "rank_histograms": {
                m: {k: {"counts": h.counts.tolist(), "flatness": h.flatness} for k, h in hs.items()}
                for m, hs in self.histograms.items()
            },
            "crps_decomposition": self.decomposition,
            "spectrum": {
                "frequencies": self.spectrum.frequencies.tolist(),
                "mean_amplitude": {s: a.tolist() for s, a in self.spectrum.amplitudes.items()},
                "high_frequency_amplitude": self.high_frequency_amplitudes(),
            },
            "calibrated_rank_histogram": None,
            "error_correlation": None,
        }
        if self.calibrated_histogram is not None:
            h = self.calibrated_histogram
            out["calibrated_rank_histogram"] = {
                "counts": h.counts.tolist(), "flatness": h.flatness, "chi2_pvalue": h.chi2_pvalue(),
            }
        if self.lagged_correlation is not None:
            out["error_correlation"] = {
                "mean_lagged_correlation": self.lagged_correlation.tolist(),
                "mean_lag1": float(self.lagged_correlation[0]),
            }
        return out

    def write(self, output_dir) -> Path:
        """Write report.json and the CSV tables into ``output_dir``."""
        out = io.ensure_dir(output_dir)
        io.write_json(out / "report.json", self.to_dict())
        io.write_json(out / "bootstrap.json", self.bootstrap.to_dict())
        io.write_table(
            out / "scores.csv",
            ["date", "station", "method", "score_kind", "value"],
            (
                [c.date.isoformat(), c.station, m, k, float(c.scores[m][k])]
                for c in self.cases for m in self.methods for k in SCORE_KINDS
            ),
        )
        io.write_table(
            out / "ranks.csv",
            ["date", "station", "method", "kind", "rank"],
            (
                [c.date.isoformat(), c.station, m, k, int(c.ranks[m][k])]
                for c in self.cases for m in self.methods for k in MV_RANK_KINDS
            ),
        )
        io.write_table(
            out / "histograms.csv",
            ["method", "kind", "rank", "count"],
            (
                [m, k, r + 1, int(n)]
                for m, hs in self.histograms.items() for k, h in hs.items() for r, n in enumerate(h.counts)
            ),
        )
        parts = ("reliability", "resolution", "uncertainty", "quantile_score", "crps")
        io.write_table(
            out / "decomposition.csv",
            ["product", "method", *parts],
            ([p, m, *(float(d[k]) for k in parts)] for p, by_m in self.decomposition.items() for m, d in by_m.items()),
        )
        io.write_table(out / "spectrum.csv", ["frequency", "source", "mean_amplitude"], self.spectrum.rows())
        with_coeffs = [c for c in self.cases if c.coefficients is not None]
        if with_coeffs:
            io.write_coefficients(out / "coefficients.csv", coefficient_records(with_coeffs))
        if any(c.scenarios for c in self.cases):
            io.write_scenarios(
                out / "scenarios.csv",
                ((c.date, c.station, c.lead_times, s) for c in self.cases for s in c.scenarios.values()),
            )
        return out


def coefficient_records(cases):
    for c in cases:
        k = c.coefficients
        for t, lt in enumerate(c.lead_times):
            yield c.date, c.station, lt, (k.a[t], k.b[t], k.c[t], k.d[t])


def _index(forecasts):
    forecasts = list(forecasts)
    if not forecasts:
        raise StageError("ingest", "no forecasts")
    by_station = defaultdict(dict)
    for f in forecasts:
        by_station[f.station_id][f.run_date] = f
    shapes = {f.members.shape for f in forecasts}
    if len(shapes) != 1:
        raise StageError("ingest", f"forecasts do not share one T x N shape: {sorted(shapes)}")
    return forecasts, dict(by_station)


def _verification_dates(config, all_dates):
    first = min(all_dates)
    start = config.verify_start or first + dt.timedelta(days=config.window_length_days)
    end = config.verify_end or max(all_dates)
    if start <= first:
        raise StageError("config", "verification period must start after the first training date")
    return [d for d in sorted(set(all_dates)) if start <= d <= end]


def couple_cases(forecasts, observations, config: PipelineConfig | None = None, methods=None) -> list:
    """Calibrate and couple every verification (date, station).

    ``methods`` overrides ``config.methods``; pass ``()`` to stop after
    calibration. The raw ensemble is always included under ``"raw"``.
    """
    config = config or PipelineConfig()
    methods = config.methods if methods is None else tuple(methods)
    forecasts, by_station = _index(forecasts)
    obs_by_station = {o.station_id: o for o in observations}
    T, N = forecasts[0].members.shape
    if config.n_lead_times is not None and config.n_lead_times != T:
        raise StageError("ingest", f"expected {config.n_lead_times} lead times, data has {T}")
    if config.n_members is not None and config.n_members != N:
        raise StageError("ingest", f"expected {config.n_members} members, data has {N}")

    out = []
    for date in _verification_dates(config, [f.run_date for f in forecasts]):
        for station in sorted(by_station):
            obs = obs_by_station.get(station)
            f = by_station[station].get(date)
            if f is None or obs is None:
                continue
            rng = case_rng(config.seed, date, station, _COUPLE)
            tag = f"{date} {station}"
            start = date - dt.timedelta(days=config.window_length_days)
            history = [g for d, g in by_station[station].items() if start <= d < date]
            try:
                window = TrainingWindow.build(history, obs, date, config.window_length_days, T)
                coeffs = fit_emos_all(window, T, min_samples=config.min_samples)
                q = emit_quantiles(coeffs, f)
            except DualEccError as exc:
                raise StageError("calibrate", f"{tag}: {exc}") from exc
            try:
                Re = copula.estimate_error_correlation(window.errors, min_pairs=config.min_pairs)
            except DualEccError as exc:
                raise StageError("error-correlation", f"{tag}: {exc}") from exc
            scen = {"raw": ScenarioSet(f.members, "raw")}
            try:
                for m in methods:
                    if m == "ecc":
                        scen[m] = copula.ecc(q, f, config.tie_policy, rng)
                    elif m == "decc":
                        scen[m] = copula.decc(q, f, Re, config.tie_policy, rng)
                    else:
                        past = [obs.values[d] for d in sorted(obs.values) if start <= d < date]
                        scen[m] = copula.climatological_template(q, past, rng)
            except DualEccError as exc:
                raise StageError("couple", f"{tag}: {exc}") from exc
            out.append(CoupledCase(date, station, f.lead_times, scen, coeffs, q, Re))
    return out


def _score_one(X, y, obs_products, rng) -> tuple:
    prods = derive_products(X)
    scores = {
        "es": verification.energy_score(X, y),
        "vs0.5": verification.variogram_score(X, y, 0.5),
        "vs1": verification.variogram_score(X, y, 1.0),
        "crps_daily_mean": verification.crps_ensemble(prods["daily_mean"], obs_products["daily_mean"]),
        "crps_max_upward_ramp": verification.crps_ensemble(
            prods["max_upward_ramp"], obs_products["max_upward_ramp"]
        ),
    }
    ranks = {k: verification.multivariate_rank(X, y, k, rng) for k in MV_RANK_KINDS}
    return scores, ranks, prods


def score_cases(coupled, observations, config: PipelineConfig | None = None) -> VerificationReport:
    """Score coupled cases against observations and assemble the report.

    Cases whose observation vector is missing or incomplete are skipped.
    """
    config = config or PipelineConfig()
    obs_by_station = {o.station_id: o for o in observations}
    coupled = sorted(coupled, key=lambda c: (c.date, c.station))
    if not coupled:
        raise StageError("verify", "empty verification set: no forecasts in the verification period")
    order = ("raw",) + METHODS
    methods = tuple(sorted(coupled[0].scenarios, key=lambda m: (order.index(m) if m in order else len(order), m)))
    if any(set(c.scenarios) != set(methods) for c in coupled):
        raise StageError("verify", "cases do not share one set of scenario provenances")

    cases = []
    for c in coupled:
        obs = obs_by_station.get(c.station)
        y = obs.get(c.date) if obs is not None else None
        if y is None or np.any(np.isnan(y)):
            continue
        rng = case_rng(config.seed, c.date, c.station, _SCORE)
        try:
            obs_prod = {k: float(v[0]) for k, v in derive_products(y[:, None]).items()}
            scores, ranks, prods = {}, {}, {}
            for m in methods:
                scores[m], ranks[m], prods[m] = _score_one(c.scenarios[m].values, y, obs_prod, rng)
            cal = None
            if c.quantiles is not None:
                qv = c.quantiles.values
                cal = np.array([verification.univariate_rank(qv[t], y[t], rng) for t in range(len(y))])
        except DualEccError as exc:
            raise StageError("verify", f"{c.date} {c.station}: {exc}") from exc
        cases.append(
            CaseResult(
                c.date, c.station, c.lead_times, y, scores, ranks, prods, obs_prod, cal,
                None if c.error_correlation is None else copula.lagged_correlation(c.error_correlation),
                c.coefficients,
                {m: c.scenarios[m].values for m in methods},
                {m: s for m, s in c.scenarios.items() if m != "raw"} if config.keep_scenarios else {},
            )
        )
    if not cases:
        raise StageError("verify", "empty verification set: no (date, station) case has complete observations")
    return _assemble(cases, methods, config)


def _assemble(cases, methods, config) -> VerificationReport:
    N = next(iter(cases[0].series.values())).shape[1]
    try:
        columns, table = [], []
        for m in methods:
            for k in SCORE_KINDS:
                columns.append(f"{m}:{k}")
                table.append([c.scores[m][k] for c in cases])
        _, per_day = verification.daily_table([c.date for c in cases], np.array(table).T)
        boot = verification.block_bootstrap(per_day, config.bootstrap_replicates, config.seed, columns=columns)
        hists = {
            m: {k: verification.RankHistogram.from_ranks(k, [c.ranks[m][k] for c in cases], N) for k in MV_RANK_KINDS}
            for m in methods
        }
        cal_hist = None
        if all(c.calibrated_ranks is not None for c in cases):
            cal_hist = verification.RankHistogram.from_ranks(
                "univariate", np.concatenate([c.calibrated_ranks for c in cases]), N
            )
        decomposition = {}
        for p in PRODUCTS:
            y = np.array([c.obs_products[p] for c in cases])
            decomposition[p] = {
                m: verification.crps_decomposition(
                    np.array([c.products[m][p] for c in cases]), y, config.n_bins, config.decomposition_levels
                )
                for m in methods
            }
    except DualEccError as exc:
        raise StageError("verify", str(exc)) from exc

    try:
        collection = {"obs": [c.obs for c in cases]}
        for m in methods:
            collection[m] = [s for c in cases for s in c.series[m].T]
        spectrum = mean_spectrum(collection)
    except DualEccError as exc:
        raise StageError("spectrum", str(exc)) from exc

    lagged = None
    if all(c.lagged is not None for c in cases):
        lagged = np.mean([c.lagged for c in cases], axis=0)
    settings = config.summary()
    settings.pop("output_dir")  # where a report lands is not part of it
    settings["backend"] = BACKEND
    return VerificationReport(settings, cases, methods, boot, hists, decomposition, spectrum, N, lagged, cal_hist)


def evaluate(forecasts, observations, config: PipelineConfig | None = None) -> VerificationReport:
    """Calibrate, couple and verify in-memory data."""
    config = config or PipelineConfig()
    observations = list(observations)
    return score_cases(couple_cases(forecasts, observations, config), observations, config)


def load_inputs(config: PipelineConfig) -> tuple:
    if config.forecast_csv is None or config.observation_csv is None:
        raise StageError("config", "forecast and observation CSV paths are required")
    try:
        forecasts = io.ingest_forecasts(config.forecast_csv)
        if not forecasts:
            raise ValidationError(f"{config.forecast_csv}: no complete forecasts")
        observations = io.ingest_observations(config.observation_csv, forecasts[0].lead_times)
    except (OSError, DualEccError) as exc:
        raise StageError("ingest", str(exc)) from exc
    return forecasts, observations


def publish(output_dir, writer) -> Path:
    """Run ``writer(staging_dir)`` and move the result to ``output_dir``.

    Nothing is left behind if the writer fails. Files already in an existing
    ``output_dir`` are kept unless the run writes a file of the same name.
    """
    final = Path(output_dir)
    final.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=".dualecc-", dir=final.parent))
    try:
        writer(staging)
    except Exception as exc:
        shutil.rmtree(staging, ignore_errors=True)
        raise StageError("report", str(exc)) from exc
    if not final.exists():
        staging.rename(final)
        return final
    # existing directory: replace only the files this run produced
    for item in staging.iterdir():
        os.replace(item, final / item.name)
    staging.rmdir()
    return final


def run_pipeline(config: PipelineConfig) -> VerificationReport:
    """Ingest the configured CSVs, evaluate, and write the report.

    Outputs are staged in a temporary directory and moved into place only
    when every stage succeeds, so a failure leaves no partial report.
    """
    forecasts, observations = load_inputs(config)
    report = evaluate(forecasts, observations, config)
    if config.output_dir is not None:
        publish(config.output_dir, report.write)
    return report
