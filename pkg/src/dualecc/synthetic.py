"""Synthetic truth and raw-ensemble generator with controllable defects.

Per station and day::

    truth   y_t  = max(0, baseline + diurnal_t + truth_sd * AR1(phi_truth))
    centre  M_t  = y_t + bias + error_sd * AR1(phi_err)
    member  x^i_t = max(0, M_t + spread_factor * error_sd * dev^i_t)

with ``dev^i = sqrt(w) * g_{cluster(i)} + sqrt(1-w) * eta^i``: ``g`` is a
cluster-level AR(1) path shared by the members driven by the same global
model and ``eta`` is member-level AR(1) noise. All AR(1) paths are
stationary with unit variance.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from dualecc.core import EnsembleForecast, ObservationSeries
from dualecc.errors import ValidationError


@dataclass(frozen=True)
class GeneratorConfig:
    days: int = 165
    stations: int = 3
    T: int = 21
    n_members: int = 20
    baseline: float = 8.0
    diurnal_amplitude: float = 1.0
    truth_sd: float = 2.0
    phi_truth: float = 0.95
    error_sd: float = 1.5
    phi_err: float = 0.7
    spread_factor: float = 0.4
    bias: float = 0.5
    clusters: int = 4
    cluster_share: float = 0.3
    phi_cluster: float = 0.7
    phi_member: float = 0.2
    missing_rate: float = 0.0
    start_date: dt.date = dt.date(2013, 1, 1)
    seed: int = 0

    def __post_init__(self):
        for name in ("phi_truth", "phi_err", "phi_cluster", "phi_member"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValidationError(f"{name} must lie in (0, 1), got {v}")
        if not self.spread_factor > 0:
            raise ValidationError("spread_factor must be positive")
        if self.T < 2 or self.n_members < 2:
            raise ValidationError("need T >= 2 and n_members >= 2")
        if not 1 <= self.clusters <= self.n_members:
            raise ValidationError("clusters must be between 1 and n_members")
        if not 0.0 <= self.cluster_share <= 1.0:
            raise ValidationError("cluster_share must lie in [0, 1]")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValidationError("missing_rate must lie in [0, 1)")
        if self.days < 1 or self.stations < 1:
            raise ValidationError("need at least one day and one station")

    def with_(self, **changes) -> "GeneratorConfig":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start_date"] = self.start_date.isoformat()
        return d

    @classmethod
    def from_mapping(cls, mapping) -> "GeneratorConfig":
        """Build from string-valued settings (config files, CLI flags)."""
        kinds = {f.name: f.type for f in fields(cls)}
        out = {}
        for key, raw in mapping.items():
            key = key.replace("-", "_")
            if key not in kinds:
                raise ValidationError(f"unknown generator setting {key!r}")
            if raw is None:
                continue
            kind = kinds[key]
            if key == "start_date":
                out[key] = raw if isinstance(raw, dt.date) else dt.date.fromisoformat(str(raw))
            elif kind in ("int", int):
                out[key] = int(raw)
            else:
                out[key] = float(raw)
        return cls(**out)


def ar1(rng, phi: float, n_paths: int, T: int) -> np.ndarray:
    """Stationary unit-variance AR(1) paths, shape ``(n_paths, T)``."""
    z = np.empty((n_paths, T))
    eps = rng.standard_normal((n_paths, T))
    z[:, 0] = eps[:, 0]
    scale = np.sqrt(1.0 - phi * phi)
    for t in range(1, T):
        z[:, t] = phi * z[:, t - 1] + scale * eps[:, t]
    return z


def cluster_of(n_members: int, clusters: int) -> np.ndarray:
    """Cluster label of each member, in contiguous equal-sized blocks."""
    return (np.arange(n_members) * clusters) // n_members


def station_ids(n: int) -> list:
    return [f"S{i + 1:02d}" for i in range(n)]


def generate(config: GeneratorConfig = GeneratorConfig()):
    """Generate forecasts and observations.

    Returns
    -------
    forecasts : list of EnsembleForecast
        Ordered by station, then date.
    observations : list of ObservationSeries
        One per station.
    """
    cfg = config
    T, N = cfg.T, cfg.n_members
    lead_times = np.arange(1, T + 1)
    hours = lead_times.astype(np.float64)
    diurnal = cfg.diurnal_amplitude * np.sin(2.0 * np.pi * (hours - 9.0) / 24.0)
    labels = cluster_of(N, cfg.clusters)
    w = cfg.cluster_share

    forecasts, observations = [], []
    for s, sid in enumerate(station_ids(cfg.stations)):
        rng = np.random.default_rng([cfg.seed, s])
        obs_values = {}
        for d in range(cfg.days):
            date = cfg.start_date + dt.timedelta(days=d)
            truth = np.maximum(0.0, cfg.baseline + diurnal + cfg.truth_sd * ar1(rng, cfg.phi_truth, 1, T)[0])
            centre = truth + cfg.bias + cfg.error_sd * ar1(rng, cfg.phi_err, 1, T)[0]
            g = ar1(rng, cfg.phi_cluster, cfg.clusters, T)
            eta = ar1(rng, cfg.phi_member, N, T)
            dev = np.sqrt(w) * g[labels] + np.sqrt(1.0 - w) * eta
            members = np.maximum(0.0, centre[None, :] + cfg.spread_factor * cfg.error_sd * dev)
            if cfg.missing_rate > 0:
                truth = np.where(rng.random(T) < cfg.missing_rate, np.nan, truth)
            forecasts.append(EnsembleForecast(date, sid, lead_times, members.T))
            obs_values[date] = truth
        observations.append(ObservationSeries(sid, lead_times, obs_values))
    return forecasts, observations
