"""The 131-value per-window feature set: time-domain statistics,
complexity measures, and Welch-based spectral descriptors.

Every feature is a pure function of one windowed channel and is guaranteed
finite: anything mathematically undefined on a constant or zero-power
window returns 0.0, because the linear model downstream cannot ingest
NaN and a flat signal is a legitimate physiological state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dsp import band_power, welch_psd
from .recording import ChannelKind

#: (name, low_hz, high_hz); the six bands partition the 0.4-30 Hz range.
FREQUENCY_BANDS: tuple[tuple[str, float, float], ...] = (
    ("slow_delta", 0.4, 1.0),
    ("fast_delta", 1.0, 4.0),
    ("theta", 4.0, 8.0),
    ("alpha", 8.0, 12.0),
    ("sigma", 12.0, 16.0),
    ("beta", 16.0, 30.0),
)

TOTAL_BAND = (0.4, 30.0)

BINNED_ENTROPY_BINS = (5, 10, 30, 60)
FOURIER_ENTROPY_BINS = (2, 3, 5, 10, 30, 60, 100)
FFT_STATS = ("centroid", "variance", "skew", "kurtosis")


@dataclass(frozen=True)
class FeatureParams:
    """Pinned knobs of the parameterized features."""

    higuchi_kmax: int = 10
    permutation_order: int = 3
    permutation_delay: int = 1
    welch_segment_s: float = 5.0


@dataclass(frozen=True)
class FeatureId:
    function: str
    parameter: str | None = None

    @property
    def name(self) -> str:
        return self.function if self.parameter is None else f"{self.function}_{self.parameter}"


def feature_catalog(kind: ChannelKind) -> list[FeatureId]:
    """Ordered per-channel feature list.

    All kinds share the 14 time-domain and 11 Fourier-statistic features;
    EEG and EOG add band powers, and EEG alone adds the band-power ratios.
    Cardinality: EEG 37, EOG 32, EMG 25, so 2 EEG + EOG + EMG = 131.
    """
    ids = [
        FeatureId("std"),
        FeatureId("iqr"),
        FeatureId("skewness"),
        FeatureId("kurtosis"),
        FeatureId("zero_crossings"),
        FeatureId("hjorth_mobility"),
        FeatureId("hjorth_complexity"),
        FeatureId("higuchi_fd"),
        FeatureId("petrosian_fd"),
        FeatureId("permutation_entropy"),
    ]
    ids += [FeatureId("binned_entropy", str(b)) for b in BINNED_ENTROPY_BINS]
    ids += [FeatureId("fft", stat) for stat in FFT_STATS]
    ids += [FeatureId("fourier_entropy", str(b)) for b in FOURIER_ENTROPY_BINS]
    if kind in (ChannelKind.EEG, ChannelKind.EOG):
        ids.append(FeatureId("abs_power"))
        ids += [FeatureId("relpower", name) for name, _, _ in FREQUENCY_BANDS]
    if kind == ChannelKind.EEG:
        ids.append(FeatureId("power_fastdelta_theta"))
        ids += [
            FeatureId("ratio", "alpha_theta"),
            FeatureId("ratio", "delta_beta"),
            FeatureId("ratio", "delta_sigma"),
            FeatureId("ratio", "delta_theta"),
        ]
    return ids


def catalog_total(kinds: list[ChannelKind]) -> int:
    return sum(len(feature_catalog(k)) for k in kinds)


# ---------------------------------------------------------------------------
# Public single-feature functions (precondition-checked)
# ---------------------------------------------------------------------------


def _window(x, min_len: int, what: str) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"{what} expects a 1-D window")
    if len(x) < min_len:
        raise ValueError(f"{what} needs at least {min_len} samples, got {len(x)}")
    return x


def stat_std(x) -> float:
    return float(kernels.moments(_window(x, 2, "std"))[0])


def stat_iqr(x) -> float:
    return float(kernels.iqr(_window(x, 2, "iqr")))


def stat_skewness(x) -> float:
    return float(kernels.moments(_window(x, 2, "skewness"))[1])


def stat_kurtosis(x) -> float:
    return float(kernels.moments(_window(x, 2, "kurtosis"))[2])


def zero_crossings(x) -> float:
    return float(kernels.zero_crossings(_window(x, 2, "zero_crossings")))


def hjorth_mobility(x) -> float:
    return float(kernels.hjorth(_window(x, 3, "hjorth_mobility"))[0])


def hjorth_complexity(x) -> float:
    return float(kernels.hjorth(_window(x, 3, "hjorth_complexity"))[1])


def petrosian_fd(x) -> float:
    return float(kernels.petrosian_fd(_window(x, 3, "petrosian_fd")))


def higuchi_fd(x, kmax: int = 10) -> float:
    return float(kernels.higuchi_fd(_window(x, 2 * kmax, "higuchi_fd"), kmax))


def permutation_entropy(x, order: int = 3, delay: int = 1) -> float:
    x = _window(x, order * delay + 1, "permutation_entropy")
    return float(kernels.permutation_entropy(x, order, delay))


def binned_entropy(x, n_bins: int) -> float:
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    return float(kernels.binned_entropy(_window(x, 1, "binned_entropy"), n_bins))


def fft_aggregated_stats(x) -> tuple[float, float, float, float]:
    """Mean, variance, skew, and kurtosis of |FFT| treated as an
    unnormalized distribution over non-negative frequency bin index."""
    x = _window(x, 4, "fft_aggregated_stats")
    weights = np.abs(np.fft.rfft(x))
    peak = float(weights.max())
    if peak <= 0.0:
        return 0.0, 0.0, 0.0, 0.0
    # A spectrum that is mathematically a lone spike carries fp-level leakage
    # elsewhere; left in place it would be amplified without bound by the
    # normalized third and fourth moments.
    weights[weights < peak * len(x) * np.finfo(np.float64).eps] = 0.0
    total = float(weights.sum())
    idx = np.arange(len(weights), dtype=np.float64)
    centroid = float((idx * weights).sum() / total)
    d = idx - centroid
    m2 = float((d * d * weights).sum() / total)
    if m2 <= 0.0:
        return centroid, 0.0, 0.0, 0.0
    m3 = float((d * d * d * weights).sum() / total)
    m4 = float((d * d * d * d * weights).sum() / total)
    return centroid, m2, m3 / m2**1.5, m4 / (m2 * m2)


def fourier_binned_entropy(x, fs_hz: float, n_bins: int, segment_s: float = 5.0) -> float:
    """Binned entropy of the Welch density after normalizing its peak to 1."""
    psd = welch_psd(np.ascontiguousarray(x, dtype=np.float64), fs_hz, segment_s)
    peak = float(psd.density.max())
    if peak <= 0.0:
        return 0.0
    return float(kernels.binned_entropy(psd.density / peak, n_bins))


def spectral_features(x, fs_hz: float, kind: ChannelKind, segment_s: float = 5.0) -> dict[str, float]:
    """Band powers for EEG/EOG plus the EEG-only power ratios.

    The "delta" numerator of the ratios is the conventional full delta band,
    i.e. slow delta plus fast delta (0.4-4 Hz).
    """
    if kind == ChannelKind.EMG:
        return {}
    psd = welch_psd(np.ascontiguousarray(x, dtype=np.float64), fs_hz, segment_s)
    total = band_power(psd, *TOTAL_BAND)
    bands = {name: band_power(psd, lo, hi) for name, lo, hi in FREQUENCY_BANDS}
    out = {"abs_power": total}
    for name, _, _ in FREQUENCY_BANDS:
        out[f"relpower_{name}"] = bands[name] / total if total > 0.0 else 0.0
    if kind == ChannelKind.EEG:
        delta = bands["slow_delta"] + bands["fast_delta"]
        out["power_fastdelta_theta"] = bands["fast_delta"] + bands["theta"]
        ratios = {
            "alpha_theta": (bands["alpha"], bands["theta"]),
            "delta_beta": (delta, bands["beta"]),
            "delta_sigma": (delta, bands["sigma"]),
            "delta_theta": (delta, bands["theta"]),
        }
        for name, (num, den) in ratios.items():
            out[f"ratio_{name}"] = num / den if den > 0.0 else 0.0
    return out


# ---------------------------------------------------------------------------
# Catalog-driven window evaluation (used by the epoch assembler)
# ---------------------------------------------------------------------------

#: Welch-based features only make sense when a 5-s segment fits in the
#: window and the sampling rate resolves the full 0.4-30 Hz analysis band.
SPECTRAL_MIN_RATE_HZ = 2.0 * TOTAL_BAND[1]


class FeatureExtractor:
    """Evaluates the full per-kind catalog on one window.

    Features whose preconditions the window cannot meet (too few samples,
    spectral features on a sub-Nyquist channel such as a 1 Hz EMG envelope)
    yield the degenerate value 0.0 instead of raising.
    """

    def __init__(self, params: FeatureParams | None = None):
        self.params = params or FeatureParams()
        self._catalogs = {kind: feature_catalog(kind) for kind in ChannelKind}

    def catalog(self, kind: ChannelKind) -> list[FeatureId]:
        return self._catalogs[kind]

    def spectral_ok(self, n_samples: int, fs_hz: float) -> bool:
        return n_samples >= self.params.welch_segment_s * fs_hz and fs_hz > SPECTRAL_MIN_RATE_HZ

    def evaluate_window(self, x, fs_hz: float, kind: ChannelKind) -> np.ndarray:
        p = self.params
        x = np.ascontiguousarray(x, dtype=np.float64)
        n = len(x)
        values: dict[str, float] = {}

        if n >= 2:
            std, skew, kurt = kernels.moments(x)
            values["std"], values["skewness"], values["kurtosis"] = float(std), float(skew), float(kurt)
            values["iqr"] = float(kernels.iqr(x))
            values["zero_crossings"] = float(kernels.zero_crossings(x))
        if n >= 3:
            mob, comp = kernels.hjorth(x)
            values["hjorth_mobility"], values["hjorth_complexity"] = float(mob), float(comp)
            values["petrosian_fd"] = float(kernels.petrosian_fd(x))
        if n >= 2 * p.higuchi_kmax:
            values["higuchi_fd"] = float(kernels.higuchi_fd(x, p.higuchi_kmax))
        if n >= p.permutation_order * p.permutation_delay + 1:
            values["permutation_entropy"] = float(
                kernels.permutation_entropy(x, p.permutation_order, p.permutation_delay)
            )
        if n >= 1:
            for b in BINNED_ENTROPY_BINS:
                values[f"binned_entropy_{b}"] = float(kernels.binned_entropy(x, b))
        if n >= 4:
            stats = fft_aggregated_stats(x)
            for name, value in zip(FFT_STATS, stats):
                values[f"fft_{name}"] = value

        if self.spectral_ok(n, fs_hz):
            psd = welch_psd(x, fs_hz, p.welch_segment_s)
            peak = float(psd.density.max())
            for b in FOURIER_ENTROPY_BINS:
                values[f"fourier_entropy_{b}"] = (
                    float(kernels.binned_entropy(psd.density / peak, b)) if peak > 0.0 else 0.0
                )
            if kind in (ChannelKind.EEG, ChannelKind.EOG):
                total = band_power(psd, *TOTAL_BAND)
                bands = {name: band_power(psd, lo, hi) for name, lo, hi in FREQUENCY_BANDS}
                values["abs_power"] = total
                for name, _, _ in FREQUENCY_BANDS:
                    values[f"relpower_{name}"] = bands[name] / total if total > 0.0 else 0.0
                if kind == ChannelKind.EEG:
                    delta = bands["slow_delta"] + bands["fast_delta"]
                    values["power_fastdelta_theta"] = bands["fast_delta"] + bands["theta"]
                    values["ratio_alpha_theta"] = (
                        bands["alpha"] / bands["theta"] if bands["theta"] > 0.0 else 0.0
                    )
                    values["ratio_delta_beta"] = delta / bands["beta"] if bands["beta"] > 0.0 else 0.0
                    values["ratio_delta_sigma"] = delta / bands["sigma"] if bands["sigma"] > 0.0 else 0.0
                    values["ratio_delta_theta"] = delta / bands["theta"] if bands["theta"] > 0.0 else 0.0

        out = np.zeros(len(self._catalogs[kind]))
        for i, fid in enumerate(self._catalogs[kind]):
            out[i] = values.get(fid.name, 0.0)
        return out
