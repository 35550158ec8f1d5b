import numpy as np
import pytest

from fractions import Fraction

from sleepstager.dsp import BandpassSpec, PsdEstimate, band_power, bandpass_zero_phase, resample_rational, welch_psd

FS = 100.0
EEG_BAND = BandpassSpec(0.4, 30.0, 4)


def sine(freq, fs=FS, seconds=30.0, amplitude=1.0):
    t = np.arange(int(seconds * fs)) / fs
    return amplitude * np.sin(2 * np.pi * freq * t)


class TestBandpass:
    def test_passband_gain_within_5pct(self):
        x = sine(10.0)
        y = bandpass_zero_phase(x, FS, EEG_BAND)
        ratio = np.sqrt(np.mean(y**2)) / np.sqrt(np.mean(x**2))
        assert ratio == pytest.approx(1.0, abs=0.05)

    def test_stopband_attenuation(self):
        # Empirical ratio is ~0.0026 on a 30 s window; frozen with headroom.
        x = sine(0.05)
        y = bandpass_zero_phase(x, FS, EEG_BAND)
        ratio = np.sqrt(np.mean(y**2)) / np.sqrt(np.mean(x**2))
        assert ratio <= 0.01

    def test_zero_input_zero_output(self):
        y = bandpass_zero_phase(np.zeros(3000), FS, EEG_BAND)
        np.testing.assert_array_equal(y, np.zeros(3000))

    def test_same_length_output(self):
        x = np.random.default_rng(0).standard_normal(2500)
        assert len(bandpass_zero_phase(x, FS, EEG_BAND)) == 2500

    def test_linearity(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal(3000), rng.standard_normal(3000)
        a, b = 2.5, -0.7
        lhs = bandpass_zero_phase(a * x + b * y, FS, EEG_BAND)
        rhs = a * bandpass_zero_phase(x, FS, EEG_BAND) + b * bandpass_zero_phase(y, FS, EEG_BAND)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)

    def test_zero_group_delay(self):
        x = sine(5.0)
        y = bandpass_zero_phase(x, FS, EEG_BAND)
        corr = np.correlate(y, x, mode="full")
        assert np.argmax(corr) == len(x) - 1

    def test_band_edge_at_nyquist_rejected(self):
        with pytest.raises(ValueError, match="Nyquist"):
            bandpass_zero_phase(np.zeros(100), 1.0, BandpassSpec(0.5, 10.0, 4))

    def test_too_short_signal_rejected(self):
        with pytest.raises(ValueError, match="short"):
            bandpass_zero_phase(np.zeros(50), FS, EEG_BAND)


class TestResample:
    def test_equal_rates_identity(self):
        x = np.random.default_rng(2).standard_normal(1000)
        y = resample_rational(x, 100.0, 100.0)
        assert np.array_equal(y, x)

    def test_sine_survives_256_to_100(self):
        fs_in = 256.0
        t = np.arange(int(30 * fs_in)) / fs_in
        x = np.sin(2 * np.pi * 10 * t)
        y = resample_rational(x, fs_in, 100.0)
        assert len(y) == round(len(x) * 100 / 256)
        t_out = np.arange(len(y)) / 100.0
        ref = np.sin(2 * np.pi * 10 * t_out)
        mid = slice(100, -100)
        amplitude = np.sqrt(2 * np.mean(y[mid] ** 2))
        assert amplitude == pytest.approx(1.0, abs=0.02)
        assert np.abs(y[mid] - ref[mid]).max() < 0.01

    def test_above_target_nyquist_suppressed(self):
        fs_in = 256.0
        t = np.arange(int(30 * fs_in)) / fs_in
        x = np.sin(2 * np.pi * 60 * t)
        y = resample_rational(x, fs_in, 100.0)
        ratio = np.sqrt(np.mean(y[100:-100] ** 2)) / np.sqrt(np.mean(x**2))
        assert ratio <= 0.05

    def test_exact_fraction_rates(self):
        x = np.random.default_rng(3).standard_normal(2560)
        y = resample_rational(x, Fraction(256), Fraction(100))
        assert len(y) == 1000

    def test_linearity(self):
        rng = np.random.default_rng(4)
        x, y = rng.standard_normal(2560), rng.standard_normal(2560)
        lhs = resample_rational(3.0 * x - 2.0 * y, 256.0, 100.0)
        rhs = 3.0 * resample_rational(x, 256.0, 100.0) - 2.0 * resample_rational(y, 256.0, 100.0)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-12)

    def test_absurd_ratio_rejected(self):
        with pytest.raises(ValueError, match="rational|factor"):
            resample_rational(np.zeros(100), 44100.0, 44099.0)

    def test_irrational_ratio_rejected(self):
        with pytest.raises(ValueError):
            resample_rational(np.zeros(100), np.pi * 100.0, 100.0)


class TestWelch:
    def test_peak_at_sine_frequency(self):
        psd = welch_psd(sine(10.0), FS)
        assert psd.freqs_hz[np.argmax(psd.density)] == 10.0

    def test_resolution(self):
        psd = welch_psd(sine(10.0), FS, segment_s=5.0)
        assert psd.resolution_hz == pytest.approx(0.2)

    def test_integrated_power_of_unit_sine(self):
        # variance of a unit-amplitude sine is 1/2
        psd = welch_psd(sine(10.0), FS)
        total = np.trapezoid(psd.density, psd.freqs_hz)
        assert total == pytest.approx(0.5, rel=0.03)

    def test_white_noise_flat_in_band(self):
        # max/min over 0.4-30 Hz measured as 1.41 for this seed; frozen at 1.6.
        rng = np.random.default_rng(1234)
        psd = welch_psd(rng.standard_normal(int(600 * FS)), FS)
        mask = (psd.freqs_hz >= 0.4) & (psd.freqs_hz <= 30.0)
        assert psd.density[mask].max() / psd.density[mask].min() <= 1.6

    def test_density_non_negative_and_grid_spans_nyquist(self):
        psd = welch_psd(np.random.default_rng(5).standard_normal(3000), FS)
        assert (psd.density >= 0).all()
        assert psd.freqs_hz[0] == 0.0
        assert psd.freqs_hz[-1] == pytest.approx(FS / 2)

    def test_parseval(self):
        rng = np.random.default_rng(6)
        x = bandpass_zero_phase(rng.standard_normal(int(300 * FS)), FS, BandpassSpec(1.0, 20.0, 4))
        psd = welch_psd(x, FS)
        total = np.trapezoid(psd.density, psd.freqs_hz)
        assert total == pytest.approx(np.var(x), rel=0.05)

    def test_short_signal_rejected(self):
        with pytest.raises(ValueError, match="shorter"):
            welch_psd(np.zeros(400), FS, segment_s=5.0)


class TestBandPower:
    def test_additivity(self):
        psd = welch_psd(np.random.default_rng(7).standard_normal(6000), FS)
        whole = band_power(psd, 0.4, 30.0)
        parts = (
            band_power(psd, 0.4, 1.0)
            + band_power(psd, 1.0, 4.0)
            + band_power(psd, 4.0, 8.0)
            + band_power(psd, 8.0, 12.0)
            + band_power(psd, 12.0, 16.0)
            + band_power(psd, 16.0, 30.0)
        )
        assert parts == pytest.approx(whole, rel=1e-12)

    def test_sine_power_concentrated(self):
        # leakage bound measured as 1.0 for an on-bin sine; frozen at >= 0.95
        psd = welch_psd(sine(10.0), FS)
        assert band_power(psd, 8.0, 12.0) / band_power(psd, 0.4, 30.0) >= 0.95

    def test_zero_density(self):
        psd = PsdEstimate(np.linspace(0, 50, 251), np.zeros(251), 0.2)
        assert band_power(psd, 0.4, 30.0) == 0.0

    def test_edge_interpolation_on_constant_density(self):
        # with constant density c, the integral over any [l, h] is exactly c*(h-l)
        psd = PsdEstimate(np.linspace(0, 50, 251), np.full(251, 3.0), 0.2)
        assert band_power(psd, 0.43, 29.91) == pytest.approx(3.0 * (29.91 - 0.43), rel=1e-12)

    def test_empty_overlap_rejected(self):
        psd = PsdEstimate(np.linspace(0, 50, 251), np.ones(251), 0.2)
        with pytest.raises(ValueError):
            band_power(psd, 60.0, 70.0)
        with pytest.raises(ValueError):
            band_power(psd, 12.0, 8.0)
