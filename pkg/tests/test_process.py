import math

import numpy as np
import pytest

from pehmqc import acquire, process


def synthetic_raw(f1=31.25, f2=150.0, n1=64, n2=128, sw1=200.0, sw2=800.0,
                  t1_initial=0.0):
    """Hypercomplex pair representing a single absorptive peak at (f1, f2).

    Under this package's conventions (States combine Re + i Re followed
    by the conjugate-kernel F1 transform) the pair that places a peak at
    +f1 carries cos(2 pi f1 t1) in the cos plane and the negated sine in
    the sin plane.
    """
    params = acquire.AcqParams(sw2_hz=sw2, n2=n2, sw1_hz=sw1, n1=n1,
                               t1_initial_s=t1_initial)
    t1 = params.t1_values()[:, None]
    t2 = (np.arange(n2) / sw2)[None, :]
    g = np.exp(1j * 2 * math.pi * f2 * t2)
    cos_plane = np.cos(2 * math.pi * f1 * t1) * g
    sin_plane = -np.sin(2 * math.pi * f1 * t1) * g
    return acquire.RawData2D(cos_plane, sin_plane, params, {"sequence": "synthetic"})


def test_window_endpoint_values():
    w = process.sine_square_window(8)
    assert w[0] == 0.0
    expected = [0, 0.146447, 0.5, 0.853553, 1, 0.853553, 0.5, 0.146447]
    assert np.allclose(w, expected, atol=1e-6)
    w_half = process.sine_square_window(8, shift=0.5)
    assert w_half[0] == pytest.approx(1.0)


def test_apodize_applies_along_axis():
    data = np.ones((4, 8), dtype=complex)
    out = process.apodize(data, 1)
    assert np.allclose(out[0], process.sine_square_window(8))
    assert np.allclose(out[0], out[3])


def test_zero_fill_bins():
    data = np.ones((4, 840), dtype=complex)
    out = process.zero_fill(data, 1, 1024)
    assert out.shape == (4, 1024)
    assert np.allclose(out[:, 840:], 0.0)
    assert 2790.0 / 1024 == pytest.approx(2.7246, abs=1e-4)
    assert 6500.0 / 4096 == pytest.approx(1.5869, abs=1e-4)


def test_zero_fill_identity_and_error():
    data = np.ones((2, 8), dtype=complex)
    assert np.array_equal(process.zero_fill(data, 1, 8), data)
    with pytest.raises(ValueError):
        process.zero_fill(data, 1, 4)


def test_transform_synthetic_peak_position():
    raw = synthetic_raw(f1=31.25, f2=150.0)
    spec = process.transform_2d(raw, window=None, f2_phase="none")
    i, j = np.unravel_index(np.argmax(np.abs(spec.values)), spec.values.shape)
    assert spec.f1_axis[i] == pytest.approx(31.25, abs=1e-9)
    assert spec.f2_axis[j] == pytest.approx(150.0, abs=1e-9)
    assert spec.values[i, j].real > 0
    # everything else is numerically zero for on-grid frequencies
    rest = np.abs(spec.values).copy()
    rest[i, j] = 0.0
    assert rest.max() < 1e-8 * abs(spec.values[i, j])


def test_transform_axes_and_log():
    raw = synthetic_raw()
    spec = process.transform_2d(raw, zf1=128, zf2=256)
    assert len(spec.f1_axis) == 128
    assert len(spec.f2_axis) == 256
    assert spec.f1_bin_hz == pytest.approx(200.0 / 128)
    assert spec.f2_bin_hz == pytest.approx(800.0 / 256)
    assert any("zero fill" in line for line in spec.log)
    assert any("sine2" in line for line in spec.log)


def test_transform_delta_fid_flat():
    params = acquire.AcqParams(sw2_hz=100.0, n2=32, sw1_hz=100.0, n1=4,
                               t1_initial_s=0.0)
    cos_plane = np.zeros((4, 32), dtype=complex)
    cos_plane[:, 0] = 1.0
    raw = acquire.RawData2D(cos_plane, np.zeros_like(cos_plane), params, {})
    spec = process.transform_2d(raw, window=None, f2_phase="none")
    mags = np.abs(spec.values[:, :])
    assert np.allclose(mags.max(axis=1), mags.min(axis=1), atol=1e-12)


def test_parseval():
    # DFT identity for both kernels used by transform_2d
    rng = np.random.default_rng(3)
    x = rng.normal(size=(16, 24)) + 1j * rng.normal(size=(16, 24))
    f2 = np.fft.fftshift(np.fft.fft(x, axis=1), axes=1)
    assert np.sum(np.abs(f2) ** 2) / 24 == pytest.approx(
        np.sum(np.abs(x) ** 2), rel=1e-12)
    f1 = np.fft.fftshift(np.conj(np.fft.fft(np.conj(x), axis=0)), axes=0)
    assert np.sum(np.abs(f1) ** 2) / 16 == pytest.approx(
        np.sum(np.abs(x) ** 2), rel=1e-12)


def test_dft_invertibility():
    rng = np.random.default_rng(7)
    x = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    fwd = np.fft.fftshift(np.fft.fft(x, axis=1), axes=1)
    back = np.fft.ifft(np.fft.ifftshift(fwd, axes=1), axis=1)
    assert np.allclose(back, x, atol=1e-10)
    fwd1 = np.fft.fftshift(np.conj(np.fft.fft(np.conj(x), axis=0)), axes=0)
    back1 = np.conj(np.fft.ifft(np.conj(np.fft.ifftshift(fwd1, axes=0)), axis=0))
    assert np.allclose(back1, x, atol=1e-10)


def test_apply_phase_and_autophase_recover_rotation():
    raw = synthetic_raw()
    spec = process.transform_2d(raw, f2_phase="none")
    rotated = process.apply_phase(spec, "f2", 37.0, 0.0)
    fixed = process.autophase(rotated, "f2")
    applied = float(fixed.log[-1].split("p0=")[1].split(" ")[0])
    assert applied == pytest.approx(-37.0, abs=0.5)


def test_autophase_absorptive_noop():
    raw = synthetic_raw()
    spec = process.transform_2d(raw, f2_phase="none")
    fixed = process.autophase(spec, "f2")
    applied = float(fixed.log[-1].split("p0=")[1].split(" ")[0])
    assert abs(applied) < 1.0


def test_autophase_f1_linear_from_t1_initial():
    # first t1 point delayed by one dwell: 360 degrees across the width
    raw = synthetic_raw(t1_initial=1 / 200.0)
    spec = process.transform_2d(raw, f2_phase="none")
    fixed = process.autophase(spec, "f1")
    assert "p1=360.000" in fixed.log[-1]
    i, j = np.unravel_index(np.argmax(fixed.real), fixed.real.shape)
    assert fixed.f1_axis[i] == pytest.approx(31.25, abs=fixed.f1_bin_hz)


def test_precombine_phase_recovers_detection_phase():
    raw = synthetic_raw()
    raw.cos_plane *= np.exp(1j * math.radians(90.0))
    raw.sin_plane *= np.exp(1j * math.radians(90.0))
    spec = process.transform_2d(raw)
    line = [ln for ln in spec.log if "before combine" in ln][0]
    p0 = float(line.split("p0=")[1].split(" ")[0])
    assert p0 == pytest.approx(-90.0, abs=1.0)
    i, j = np.unravel_index(np.argmax(spec.real), spec.real.shape)
    assert spec.f1_axis[i] == pytest.approx(31.25, abs=spec.f1_bin_hz)


def test_cross_section_and_metrics():
    raw = synthetic_raw(f1=31.25, f2=150.0, n1=128)
    spec = process.transform_2d(raw, zf1=256, zf2=256, f2_phase="none")
    tr = process.cross_section(spec, "f1", 150.0)
    assert tr.meta["axis"] == "f1"
    peaks, splitting = process.peak_metrics(tr, 0.2)
    assert splitting == 0.0
    assert peaks[0].position_hz == pytest.approx(31.25, abs=0.1)
    tr2 = process.cross_section(spec, "f2", peaks[0].position_hz)
    p2, _ = process.peak_metrics(tr2, 0.2)
    assert p2[0].position_hz == pytest.approx(150.0, abs=0.2)


def test_cross_section_out_of_range():
    raw = synthetic_raw()
    spec = process.transform_2d(raw)
    with pytest.raises(ValueError):
        process.cross_section(spec, "f1", 1e6)


def test_cross_section_empty_region_near_zero():
    raw = synthetic_raw(f1=31.25, f2=150.0)
    spec = process.transform_2d(raw, f2_phase="none")
    tr = process.cross_section(spec, "f1", -350.0)
    assert np.abs(tr.values).max() <= 1e-8 * spec.real.max()


def synthetic_doublet_trace(split=13.9, n=512, sw=200.0, zf=1024):
    t = np.arange(n) / sw
    sig = (np.exp(1j * 2 * math.pi * (50 - split / 2) * t)
           + np.exp(1j * 2 * math.pi * (50 + split / 2) * t))
    sig = sig * process.sine_square_window(n)
    spec = np.fft.fftshift(np.fft.fft(sig, n=zf))
    axis = np.fft.fftshift(np.fft.fftfreq(zf, 1 / sw))
    return process.Trace1D(axis, np.abs(spec))


def test_peak_metrics_doublet_splitting():
    tr = synthetic_doublet_trace()
    peaks, splitting = process.peak_metrics(tr, 0.2)
    assert splitting == pytest.approx(13.9, abs=200.0 / 1024)


def test_peak_metrics_single_peak_no_splitting():
    tr = synthetic_doublet_trace(split=0.0)
    peaks, splitting = process.peak_metrics(tr, 0.2)
    assert splitting == 0.0


def test_peak_fwhm_positive():
    tr = synthetic_doublet_trace()
    peaks, _ = process.peak_metrics(tr, 0.2)
    assert all(0 < p.fwhm_hz < 2.0 for p in peaks)


def test_snr_by_construction():
    tr = synthetic_doublet_trace(split=0.0)
    out = process.snr(tr, sigma=0.01 * tr.values.max(), seed=42)
    assert out["snr"] == pytest.approx(100.0, rel=1e-6)


def test_snr_seed_determinism():
    tr = synthetic_doublet_trace(split=0.0)
    a = process.snr(tr, sigma=1.0, seed=7)
    b = process.snr(tr, sigma=1.0, seed=7)
    assert a["snr"] == b["snr"]
    assert np.array_equal(a["noisy_values"], b["noisy_values"])


def test_snr_region_mode():
    tr = synthetic_doublet_trace(split=0.0)
    tr.values[:100] += 0.001 * tr.values.max()
    out = process.snr(tr, region=(float(tr.axis_hz[0]), float(tr.axis_hz[99])))
    assert out["snr"] > 100.0


def test_snr_errors():
    tr = synthetic_doublet_trace(split=0.0)
    with pytest.raises(ValueError):
        process.snr(tr, sigma=0.0)
    flat = process.Trace1D(tr.axis_hz, np.zeros_like(tr.values))
    flat.values[5] = 1.0
    with pytest.raises(ValueError):
        process.snr(flat, region=(float(tr.axis_hz[-10]), float(tr.axis_hz[-1])))


def test_csv_round_trip():
    raw = synthetic_raw(n1=16, n2=16)
    spec = process.transform_2d(raw, f2_phase="none")
    text = process.spectrum_to_csv(spec)
    lines = text.splitlines()
    assert lines[0].startswith("f1_hz,")
    assert lines[1] == ""
    again = process.spectrum_from_csv(text)
    assert np.allclose(again.f1_axis, spec.f1_axis)
    assert np.allclose(again.f2_axis, spec.f2_axis)
    assert np.allclose(again.real, spec.real, atol=1e-9 * abs(spec.real).max())


def test_auto_section_finds_peak():
    raw = synthetic_raw(f1=31.25, f2=150.0, n1=128)
    spec = process.transform_2d(raw, zf1=256, zf2=256, f2_phase="none")
    tr = process.auto_section(spec, "f1")
    peaks, _ = process.peak_metrics(tr, 0.2)
    assert peaks[0].position_hz == pytest.approx(31.25, abs=0.2)
    assert tr.meta["bin_hz"] == pytest.approx(150.0, abs=spec.f2_bin_hz)
