"""Spectrograms and the snapping-shrimp snap detector.

The detector front-end is a Hann-windowed magnitude-squared STFT.  Per-frame
energy in the snap band (2-24 kHz) feeds a transient-spike rule: candidate
frames are local maxima whose energy exceeds ``mean + threshold_sigma * std``
of the window's own band-energy series, with maxima inside the refractory
gap merged into the larger peak.

The relative threshold is deliberately low (0.1 sigma by default), which on
featureless noise would fire on roughly half of all local maxima.  A second,
scale-free prominence condition therefore applies: a peak must also exceed
``min_peak_ratio`` times a low quantile of the series (a robust background
level even when most frames contain snaps).  Both conditions are invariant
under global gain scaling of the audio.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SaturatedWindowError
from .world import AudioWindow

BACKGROUND_QUANTILE = 0.1


@dataclass(frozen=True)
class AcousticsConfig:
    window: int = 1024
    hop: int = 512
    band_hz: tuple[float, float] = (2000.0, 24000.0)
    threshold_sigma: float = 0.1
    refractory_s: float = 0.005
    min_peak_ratio: float = 2.0


@dataclass
class Spectrogram:
    """Magnitude-squared short-time transform: ``power[frame, bin]``."""

    power: np.ndarray
    fs: int
    window: int
    hop: int
    window_fn: str = "hann"

    @property
    def n_frames(self) -> int:
        return self.power.shape[0]

    @property
    def n_bins(self) -> int:
        return self.power.shape[1]

    @property
    def freqs(self) -> np.ndarray:
        """Bin center frequencies in Hz."""
        return np.arange(self.n_bins) * self.fs / self.window

    @property
    def frame_times(self) -> np.ndarray:
        """Frame center times in seconds."""
        return (np.arange(self.n_frames) * self.hop + self.window / 2) / self.fs

    def frame_energy(self) -> np.ndarray:
        """Per-frame time-domain energy of the windowed signal, recovered
        from the spectrum (Parseval): DC and Nyquist bins count once, all
        others twice, divided by the transform length."""
        p = self.power
        return (p[:, 0] + 2.0 * p[:, 1:-1].sum(axis=1) + p[:, -1]) / self.window


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))


def stft(samples: np.ndarray, fs: int, window: int = 1024, hop: int = 512) -> Spectrogram:
    """Hann-windowed magnitude-squared STFT.

    Frames start every ``hop`` samples; the count is
    ``floor((n - window) / hop) + 1`` and trailing samples that do not fill
    a frame are dropped.
    """
    if window < 64 or window & (window - 1):
        raise ValueError("window must be a power of two >= 64")
    if not 0 < hop <= window:
        raise ValueError("hop must be in (0, window]")
    samples = np.asarray(samples, dtype=np.float64)
    n = len(samples)
    if n < window:
        raise ValueError(f"need at least {window} samples, got {n}")

    n_frames = (n - window) // hop + 1
    idx = np.arange(window)[None, :] + hop * np.arange(n_frames)[:, None]
    frames = samples[idx] * hann_window(window)[None, :]
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    return Spectrogram(power=power, fs=fs, window=window, hop=hop)


def band_energy(spec: Spectrogram, f_lo: float = 2000.0, f_hi: float = 24000.0) -> np.ndarray:
    """Per-frame sum of magnitude-squared over bins with center frequency
    in [f_lo, f_hi]."""
    if not f_lo < f_hi:
        raise ValueError("need f_lo < f_hi")
    if f_hi > spec.fs / 2:
        raise ValueError("f_hi must not exceed Nyquist")
    mask = (spec.freqs >= f_lo) & (spec.freqs <= f_hi)
    if not mask.any():
        raise ValueError("band contains no bins")
    return spec.power[:, mask].sum(axis=1)


@dataclass
class SnapDetection:
    times: np.ndarray  # seconds from window start, sorted
    count: int
    rate: float  # snaps / second of window duration
    band_hz: tuple[float, float]
    threshold_sigma: float


def _refine_peak_time(energy: np.ndarray, peak: int, baseline: float, spec: Spectrogram) -> float:
    """Sub-frame timing of an impulsive peak.

    With 50 % overlap a short burst excites exactly two adjacent frames with
    Hann-squared weights, so the energy ratio of the peak and its larger
    neighbor inverts in closed form to the burst position.  Falls back to an
    energy centroid (and finally the frame center) for other hop sizes or
    degenerate neighborhoods.
    """
    times = spec.frame_times
    if peak == 0 or peak == len(energy) - 1:
        return float(times[peak])
    e_prev = energy[peak - 1] - baseline
    e_next = energy[peak + 1] - baseline
    e_peak = energy[peak] - baseline
    if e_peak <= 0:
        return float(times[peak])

    neighbor = peak - 1 if e_prev >= e_next else peak + 1
    if spec.hop * 2 == spec.window and max(e_prev, e_next) > 0:
        left = min(peak, neighbor)
        e_left = energy[left] - baseline
        e_right = energy[left + 1] - baseline
        if e_left > 0 and e_right > 0:
            sqrt_rho = np.sqrt(e_right / e_left)
            cos_phi = np.clip((1.0 - sqrt_rho) / (1.0 + sqrt_rho), -1.0, 1.0)
            phi = np.arccos(cos_phi)
            offset = spec.hop + spec.window * phi / (2.0 * np.pi)
            return float((left * spec.hop + offset) / spec.fs)

    weights = np.maximum([e_prev, e_peak, e_next], 0.0)
    if weights.sum() <= 0:
        return float(times[peak])
    return float(np.dot(weights, times[peak - 1 : peak + 2]) / weights.sum())


def detect_snaps(
    energy: np.ndarray,
    spec: Spectrogram,
    duration: float,
    threshold_sigma: float = 0.1,
    refractory_s: float = 0.005,
    min_peak_ratio: float = 2.0,
    band_hz: tuple[float, float] = (2000.0, 24000.0),
) -> SnapDetection:
    """Count transient spikes in a band-energy series.

    A constant series (std below 1e-12) yields zero snaps.  Candidates are
    interior local maxima above both the relative threshold and the
    prominence floor; candidates closer than the refractory gap merge into
    the larger peak.
    """
    energy = np.asarray(energy, dtype=np.float64)
    if len(energy) < 8:
        raise ValueError("need at least 8 frames of band energy")
    if duration <= 0:
        raise ValueError("duration must be positive")

    mu = energy.mean()
    sigma = energy.std()
    if sigma < 1e-12:
        return SnapDetection(np.empty(0), 0, 0.0, band_hz, threshold_sigma)

    floor = min_peak_ratio * np.quantile(energy, BACKGROUND_QUANTILE)
    threshold = max(mu + threshold_sigma * sigma, floor)

    interior = energy[1:-1]
    is_peak = (interior > energy[:-2]) & (interior >= energy[2:]) & (interior > threshold)
    candidates = np.flatnonzero(is_peak) + 1
    if len(candidates) == 0:
        return SnapDetection(np.empty(0), 0, 0.0, band_hz, threshold_sigma)

    # Merge candidates within the refractory gap, keeping the larger peak.
    frame_period = spec.hop / spec.fs
    kept: list[int] = []
    for c in candidates:
        if kept and (c - kept[-1]) * frame_period < refractory_s:
            if energy[c] > energy[kept[-1]]:
                kept[-1] = c
        else:
            kept.append(c)

    baseline = np.quantile(energy, BACKGROUND_QUANTILE)
    times = np.array(sorted(_refine_peak_time(energy, c, baseline, spec) for c in kept))
    return SnapDetection(times, len(kept), len(kept) / duration, band_hz, threshold_sigma)


def detect_snaps_in_window(window: AudioWindow, config: AcousticsConfig | None = None) -> SnapDetection:
    """Run the full detection chain on one audio window.

    Saturated windows (thruster noise) are refused: their statistics carry
    no usable signal.
    """
    cfg = config or AcousticsConfig()
    if window.saturated:
        raise SaturatedWindowError("window is saturated (thruster noise); detection refused")
    spec = stft(window.samples, window.fs, cfg.window, cfg.hop)
    energy = band_energy(spec, *cfg.band_hz)
    return detect_snaps(
        energy,
        spec,
        window.duration,
        threshold_sigma=cfg.threshold_sigma,
        refractory_s=cfg.refractory_s,
        min_peak_ratio=cfg.min_peak_ratio,
        band_hz=cfg.band_hz,
    )


@dataclass
class SnapRateEntry:
    t_start: float
    cell_id: int
    cell_x: int
    cell_y: int
    count: int
    rate: float


@dataclass
class SnapRateSkip:
    t_start: float
    cell_id: int
    reason: str


@dataclass
class SnapRateSeries:
    entries: list[SnapRateEntry] = field(default_factory=list)
    skips: list[SnapRateSkip] = field(default_factory=list)


def snap_rate_series(log, config: AcousticsConfig | None = None) -> SnapRateSeries:
    """Per-drift-window snap rates from a mission log, in time order.

    Saturated windows are excluded from the rate series and reported in the
    skip list instead.
    """
    from .errors import DataError

    cfg = config or AcousticsConfig()
    drift_records = log.drift_records()
    if not drift_records:
        raise DataError("mission log contains no drift windows")

    series = SnapRateSeries()
    nx = log.grid_nx
    for record in drift_records:
        window = log.audio_window(record)
        if window.saturated:
            series.skips.append(SnapRateSkip(record.t, record.cell_id, "saturated"))
            continue
        detection = detect_snaps_in_window(window, cfg)
        series.entries.append(
            SnapRateEntry(
                t_start=record.t,
                cell_id=record.cell_id,
                cell_x=record.cell_id % nx,
                cell_y=record.cell_id // nx,
                count=detection.count,
                rate=detection.rate,
            )
        )
    return series


def export_snap_rates_csv(series: SnapRateSeries, path) -> None:
    """CSV: one row per drift window, skipped windows carry a reason."""
    lines = ["t_start,cell_x,cell_y,count,rate,skipped_reason"]
    rows = [(e.t_start, e) for e in series.entries] + [(s.t_start, s) for s in series.skips]
    for _, row in sorted(rows, key=lambda pair: pair[0]):
        if isinstance(row, SnapRateEntry):
            lines.append(f"{row.t_start},{row.cell_x},{row.cell_y},{row.count},{row.rate},")
        else:
            lines.append(f"{row.t_start},,,,,{row.reason}")
    Path(path).write_text("\n".join(lines) + "\n")
