"""Synthetic EEG corpus with planted seizures.

Records are 180 s at 256 Hz with the onset at 120 s, so the partition
yields interictal, preictal, and ictal parts while the extended
interictal part falls before the start of the record.  Background
activity is 1/f noise plus an alpha rhythm; the ictal minute adds a
rhythmic 3-5 Hz discharge that grows in amplitude, sharp transients
on the discharge peaks, and optional gamma bursts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from seiznet import CHANNELS, TARGET_FS
from seiznet.data.records import EegRecord

RECORD_SECONDS = 180
ONSET_SECONDS = 120
MIN_RMS_RATIO = 2.0


@dataclass(frozen=True)
class SynthParams:
    """Knobs for the synthetic corpus generator."""

    n_patients: int = 40
    records_per_patient: int = 2
    seed: int = 0
    background_scale: float = 20.0  # 1/f noise RMS, microvolts
    alpha_scale: float = 30.0  # alpha rhythm amplitude, microvolts
    discharge_scale: float = 60.0  # base ictal discharge amplitude, microvolts
    discharge_band: tuple[float, float] = (3.0, 5.0)
    gamma_bursts: bool = True


def _pink_noise(rng: np.random.Generator, n: int, rms: float) -> np.ndarray:
    """1/f-power noise, flattened below 0.5 Hz, normalized to rms."""
    freqs = np.fft.rfftfreq(n, d=1.0 / TARGET_FS)
    shape = 1.0 / np.sqrt(np.maximum(freqs, 0.5))
    shape[0] = 0.0
    spectrum = shape * (
        rng.standard_normal(freqs.size) + 1j * rng.standard_normal(freqs.size)
    )
    noise = np.fft.irfft(spectrum, n=n)
    return noise * (rms / np.sqrt(np.mean(noise**2)))


def _spike_train(
    rng: np.random.Generator, n: int, freq: float, width_s: float
) -> np.ndarray:
    """Gaussian-shaped sharp transients, one per discharge cycle."""
    out = np.zeros(n)
    period = TARGET_FS / freq
    half = int(3 * width_s * TARGET_FS)
    kernel_t = np.arange(-half, half + 1) / TARGET_FS
    kernel = np.exp(-0.5 * (kernel_t / width_s) ** 2)
    centers = np.arange(period / 2, n - half, period)
    for c in centers:
        idx = int(c) + int(rng.integers(-3, 4))
        lo = max(idx - half, 0)
        hi = min(idx + half + 1, n)
        out[lo:hi] += kernel[lo - (idx - half) : hi - (idx - half)]
    return out


def generate_record(
    params: SynthParams, patient_idx: int, record_idx: int
) -> EegRecord:
    """Deterministically synthesize one record for (patient, record)."""
    rng = np.random.default_rng([params.seed, patient_idx, record_idx])
    n = RECORD_SECONDS * TARGET_FS
    onset = ONSET_SECONDS * TARGET_FS
    t = np.arange(n) / TARGET_FS
    n_ch = len(CHANNELS)

    samples = np.empty((n, n_ch))
    alpha_freq = rng.uniform(8.5, 11.5)
    for ch in range(n_ch):
        phase = rng.uniform(0, 2 * np.pi)
        wobble = 1.0 + 0.2 * np.sin(2 * np.pi * rng.uniform(0.05, 0.15) * t + phase)
        alpha = params.alpha_scale * wobble * np.sin(2 * np.pi * alpha_freq * t + phase)
        samples[:, ch] = _pink_noise(rng, n, params.background_scale) + alpha

    # Ictal minute: one shared discharge source, partially correlated
    # across channels through per-channel gains plus channel noise.
    n_ict = n - onset
    t_ict = t[onset:] - t[onset]
    freq = rng.uniform(*params.discharge_band)
    growth = rng.uniform(3.0, 5.0)
    envelope = 1.0 + (growth - 1.0) * np.linspace(0.0, 1.0, n_ict)
    wave = np.sin(2 * np.pi * freq * t_ict + rng.uniform(0, 2 * np.pi))
    wave = np.sign(wave) * np.abs(wave) ** 0.7  # steepen the discharge flanks
    spikes = 1.5 * _spike_train(rng, n_ict, freq, width_s=0.02)
    source = params.discharge_scale * envelope * (wave + spikes)

    discharge = np.empty((n_ict, n_ch))
    for ch in range(n_ch):
        gain = rng.uniform(0.7, 1.3)
        discharge[:, ch] = gain * source + 0.3 * params.discharge_scale * (
            envelope * rng.standard_normal(n_ict) * 0.2
        )

    if params.gamma_bursts:
        for _ in range(int(rng.integers(3, 7))):
            start = int(rng.integers(0, n_ict - TARGET_FS))
            dur = int(rng.uniform(0.2, 0.5) * TARGET_FS)
            gfreq = rng.uniform(70.0, 100.0)
            burst = (
                0.4
                * params.discharge_scale
                * np.hanning(dur)
                * np.sin(2 * np.pi * gfreq * np.arange(dur) / TARGET_FS)
            )
            for ch in rng.choice(n_ch, size=int(rng.integers(1, n_ch + 1)), replace=False):
                discharge[start : start + dur, ch] += burst

    samples[onset:] += discharge

    # Guarantee the ictal/interictal RMS contrast for every record.
    inter = samples[onset - 2 * 15360 : onset - 15360]
    ratio = _rms(samples[onset:]) / _rms(inter)
    if ratio < MIN_RMS_RATIO:
        samples[onset:] *= (MIN_RMS_RATIO + 0.05) / ratio

    pid = f"p{patient_idx:03d}"
    return EegRecord(
        record_id=f"{pid}r{record_idx}",
        patient_id=pid,
        samples=samples,
        fs=TARGET_FS,
        onset_sample=onset,
    )


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x**2)))


def generate_corpus(params: SynthParams) -> list[EegRecord]:
    """All records of the corpus, patient-major, record-minor order."""
    out = []
    for p in range(params.n_patients):
        for r in range(params.records_per_patient):
            out.append(generate_record(params, p, r))
    return out
