"""Fourier amplitude spectra of scenario and observed trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dualecc.errors import ValidationError

HIGH_FREQ_MAX_PERIOD = 4.0  # hours


def frequencies(T: int) -> np.ndarray:
    """Frequency grid ``k/T`` (cycles per hour) for ``k = 1..T//2``."""
    return np.arange(1, T // 2 + 1) / T


def amplitude_spectrum(series) -> np.ndarray:
    """Oscillation amplitudes of a mean-removed series at ``k = 1..T//2``.

    The amplitude at ``k`` is ``2|X_k|/T``; for even ``T`` the Nyquist term
    has no mirror image and its amplitude is ``|X_k|/T``. A pure cosine of
    amplitude ``A`` thus shows up as ``A`` at its own frequency.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim != 1 or x.size < 2:
        raise ValidationError("amplitude spectrum needs a 1-D series of length >= 2")
    if np.any(~np.isfinite(x)):
        raise ValidationError("series has missing or non-finite values")
    T = x.size
    X = np.fft.rfft(x - x.mean())[1 : T // 2 + 1]
    amp = 2.0 * np.abs(X) / T
    if T % 2 == 0:
        amp[-1] /= 2.0
    return amp


def spectral_variance(amplitudes, T: int) -> float:
    """Population variance implied by an amplitude spectrum (Parseval)."""
    a = np.asarray(amplitudes, dtype=np.float64)
    power = a**2 / 2.0
    if T % 2 == 0:
        power[-1] = a[-1] ** 2
    return float(power.sum())


def high_frequency_mask(T: int, max_period: float = HIGH_FREQ_MAX_PERIOD) -> np.ndarray:
    """Frequencies whose period ``T/k`` is at most ``max_period`` hours."""
    k = np.arange(1, T // 2 + 1)
    return T / k <= max_period


@dataclass(frozen=True)
class AmplitudeSpectrum:
    """Mean amplitude per frequency for each scenario source."""

    T: int
    frequencies: np.ndarray
    amplitudes: dict
    counts: dict

    def high_frequency_amplitude(self, source: str, max_period: float = HIGH_FREQ_MAX_PERIOD) -> float:
        mask = high_frequency_mask(self.T, max_period)
        return float(np.mean(self.amplitudes[source][mask]))

    def rows(self):
        """``(frequency, source, mean_amplitude)`` tuples for tabular output."""
        for source, amp in self.amplitudes.items():
            for f, a in zip(self.frequencies, amp):
                yield float(f), source, float(a)


def mean_spectrum(collection) -> AmplitudeSpectrum:
    """Frequency-wise mean amplitude over many series, grouped by source.

    ``collection`` maps a source name (e.g. ``"obs"``, ``"ecc"``) to an
    iterable of length-T series; a bare iterable is filed under ``"series"``.
    """
    if not isinstance(collection, dict):
        collection = {"series": collection}
    amps, counts, T = {}, {}, None
    for source, series_list in collection.items():
        specs = [amplitude_spectrum(s) for s in series_list]
        if not specs:
            raise ValidationError(f"source {source!r} has no series")
        lengths = {len(s) for s in series_list}
        if len(lengths) != 1 or (T is not None and lengths != {T}):
            raise ValidationError("all series must share the same length")
        T = lengths.pop()
        amps[source] = np.mean(specs, axis=0)
        counts[source] = len(specs)
    return AmplitudeSpectrum(T, frequencies(T), amps, counts)
