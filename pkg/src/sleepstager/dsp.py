"""Filtering, rational resampling, and Welch spectral estimation.

These are the numeric kernels under preprocessing and every
frequency-domain feature. All functions are pure and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as sps


@dataclass(frozen=True)
class BandpassSpec:
    """Butterworth band-pass design: pass band (low_hz, high_hz), design order."""

    low_hz: float
    high_hz: float
    order: int = 4

    def validate(self, fs_hz: float) -> None:
        nyquist = fs_hz / 2.0
        if not 0.0 < self.low_hz < self.high_hz:
            raise ValueError(f"invalid band edges ({self.low_hz}, {self.high_hz})")
        if self.high_hz >= nyquist:
            raise ValueError(
                f"band edge {self.high_hz} Hz is not below the Nyquist rate {nyquist} Hz"
            )
        if self.order < 1:
            raise ValueError("filter order must be >= 1")


@dataclass
class PsdEstimate:
    """One-sided power spectral density on an ascending frequency grid."""

    freqs_hz: np.ndarray
    density: np.ndarray
    resolution_hz: float


def bandpass_zero_phase(x: np.ndarray, fs_hz: float, spec: BandpassSpec) -> np.ndarray:
    """Apply the band-pass forward and backward (zero phase, same length).

    The forward-backward pass doubles the effective order and cancels group
    delay. Boundary transients are suppressed by odd-reflection padding of
    3x the filter length.
    """
    spec.validate(fs_hz)
    x = np.asarray(x, dtype=np.float64)
    sos = sps.butter(
        spec.order, [spec.low_hz, spec.high_hz], btype="bandpass", fs=fs_hz, output="sos"
    )
    # A band-pass of design order n has 2n+1 transfer-function coefficients.
    padlen = 3 * (2 * spec.order + 1)
    if len(x) <= 3 * padlen:
        raise ValueError(
            f"signal of {len(x)} samples is too short to filter (needs > {3 * padlen})"
        )
    return sps.sosfiltfilt(sos, x, padtype="odd", padlen=padlen)


def _as_ratio(fs_in_hz, fs_out_hz, max_factor: int = 1024) -> Fraction:
    if isinstance(fs_in_hz, Fraction) and isinstance(fs_out_hz, Fraction):
        ratio = fs_out_hz / fs_in_hz
    else:
        ratio = Fraction(float(fs_out_hz) / float(fs_in_hz)).limit_denominator(max_factor)
        if abs(float(ratio) - float(fs_out_hz) / float(fs_in_hz)) > 1e-9 * float(ratio):
            raise ValueError(
                f"rate ratio {fs_out_hz}/{fs_in_hz} is not a small rational (p, q <= {max_factor})"
            )
    if ratio.numerator > max_factor or ratio.denominator > max_factor:
        raise ValueError(
            f"rate ratio {ratio} exceeds the supported factor limit of {max_factor}"
        )
    return ratio


def resample_rational(x: np.ndarray, fs_in_hz, fs_out_hz) -> np.ndarray:
    """Polyphase resampling by the reduced rational factor fs_out/fs_in.

    Anti-alias low-pass at the smaller of the two Nyquist rates; output
    length is round(len(x) * fs_out / fs_in). Equal rates return the input
    unchanged.
    """
    x = np.asarray(x, dtype=np.float64)
    if float(fs_in_hz) <= 0 or float(fs_out_hz) <= 0:
        raise ValueError("sampling rates must be positive")
    ratio = _as_ratio(fs_in_hz, fs_out_hz)
    if ratio == 1:
        return x
    up, down = ratio.numerator, ratio.denominator
    expected = round(len(x) * up / down)
    y = sps.resample_poly(x, up, down)
    return y[:expected]


def welch_psd(x: np.ndarray, fs_hz: float, segment_s: float = 5.0) -> PsdEstimate:
    """Welch PSD: Hann segments of ``segment_s`` seconds, 50% overlap,
    per-segment mean removal, one-sided density scaling, mean averaging."""
    x = np.asarray(x, dtype=np.float64)
    nperseg = int(round(segment_s * fs_hz))
    if nperseg < 2:
        raise ValueError(f"segment of {segment_s}s at {fs_hz} Hz has fewer than 2 samples")
    if len(x) < nperseg:
        raise ValueError(
            f"signal of {len(x)} samples is shorter than one {nperseg}-sample segment"
        )
    freqs, density = sps.welch(
        x,
        fs=float(fs_hz),
        window="hann",
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend="constant",
        scaling="density",
        average="mean",
    )
    return PsdEstimate(freqs_hz=freqs, density=density, resolution_hz=float(fs_hz) / nperseg)


def band_power(psd: PsdEstimate, low_hz: float, high_hz: float) -> float:
    """Trapezoidal integral of the density over [low_hz, high_hz].

    Band edges rarely land on the 1/segment_s grid, so the density is
    linearly interpolated at both edges before integrating.
    """
    if low_hz >= high_hz:
        raise ValueError(f"empty band [{low_hz}, {high_hz}]")
    freqs, density = psd.freqs_hz, psd.density
    lo = max(low_hz, float(freqs[0]))
    hi = min(high_hz, float(freqs[-1]))
    if lo >= hi:
        raise ValueError(
            f"band [{low_hz}, {high_hz}] does not overlap the PSD range "
            f"[{freqs[0]}, {freqs[-1]}]"
        )
    inner = (freqs > lo) & (freqs < hi)
    xs = np.concatenate(([lo], freqs[inner], [hi]))
    ys = np.concatenate(
        ([np.interp(lo, freqs, density)], density[inner], [np.interp(hi, freqs, density)])
    )
    return float(np.trapezoid(ys, xs))
