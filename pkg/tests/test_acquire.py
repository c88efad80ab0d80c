import math

import numpy as np
import pytest

from pehmqc import acquire, hilbert, sequences, spins

DELTA = 1.0 / (2.0 * 145.0)


def fullscale_params():
    return acquire.AcqParams(sw2_hz=2790.0, n2=840, sw1_hz=6500.0, n1=2400,
                             t1_initial_s=186e-6)


def small_params(**kw):
    defaults = dict(sw2_hz=800.0, n2=64, sw1_hz=200.0, n1=16, t1_initial_s=0.0)
    defaults.update(kw)
    return acquire.AcqParams(**defaults)


def test_params_schedule_arithmetic():
    p = fullscale_params()
    assert p.dwell2_s == pytest.approx(1 / 2790.0)
    assert p.dwell1_s == pytest.approx(1 / 6500.0)
    # 186 us + 2399/6500 s = 369.26 ms, reported as 369.2 after truncation
    assert p.t1_max_s == pytest.approx(186e-6 + 2399 / 6500.0, abs=1e-12)
    assert math.floor(p.t1_max_s * 1e4) / 10 == 369.2
    assert p.acquisition_time_s == pytest.approx(840 / 2790.0, abs=1e-12)
    assert p.acquisition_time_s == pytest.approx(0.301, abs=5e-4)
    t1 = p.t1_values()
    assert len(t1) == 2400
    assert t1[0] == pytest.approx(186e-6)


def test_params_validation():
    with pytest.raises(ValueError):
        acquire.AcqParams(sw2_hz=0.0, n2=8, sw1_hz=10.0, n1=8)
    with pytest.raises(ValueError):
        acquire.AcqParams(sw2_hz=10.0, n2=0, sw1_hz=10.0, n1=8)
    with pytest.raises(ValueError):
        acquire.AcqParams(sw2_hz=10.0, n2=8, sw1_hz=10.0, n1=8, t1_initial_s=-1.0)


def test_run_fid_free_precession():
    system = spins.SpinSystem("one", (spins.Spin("H1", "1H", 100.0),))
    state = hilbert.DensityState(hilbert.embed_operator(system, "H1", "x"), system)
    fid = acquire.run_fid(system, state, 32, 1e-3)
    t = np.arange(32) * 1e-3
    assert np.allclose(fid, 0.5 * np.exp(1j * 2 * math.pi * 100.0 * t), atol=1e-12)


def test_run_fid_zero_state(ch2):
    state = hilbert.DensityState(np.zeros((8, 8), dtype=complex), ch2)
    fid = acquire.run_fid(system=ch2, state=state, n2=16, dwell_s=1e-3)
    assert np.allclose(fid, 0.0)


def _spectrum_freqs(fid, dwell, thresh=0.2):
    spec = np.abs(np.fft.fftshift(np.fft.fft(fid * np.hanning(len(fid)))))
    freqs = np.fft.fftshift(np.fft.fftfreq(len(fid), dwell))
    peaks = [freqs[k] for k in range(1, len(fid) - 1)
             if spec[k] > thresh * spec.max()
             and spec[k] >= spec[k - 1] and spec[k] > spec[k + 1]]
    return sorted(peaks)


def test_run_fid_decoupling_removes_one_bond_splitting(ch2):
    state = hilbert.DensityState(hilbert.embed_operator(ch2, "H1", "x"), ch2)
    dwell = 1 / 1600.0
    with_dec = acquire.run_fid(ch2, state, 512, dwell, "1H", ("13C",))
    without = acquire.run_fid(ch2, state, 512, dwell, "1H", ())
    f_dec = _spectrum_freqs(with_dec, dwell)
    f_raw = _spectrum_freqs(without, dwell)
    # decoupled: only the 13.9 Hz proton doublet around 1200 Hz is left
    # (aliased into the window); compare the spread of detected lines
    assert len(f_dec) == 2
    assert max(f_dec) - min(f_dec) == pytest.approx(13.9, abs=4.0)
    assert len(f_raw) == 4  # additional 140 Hz one-bond splitting
    assert max(f_raw) - min(f_raw) > 100.0


def test_linearity(ch2):
    rho_a = hilbert.DensityState(hilbert.embed_operator(ch2, "H1", "x"), ch2)
    rho_b = hilbert.DensityState(
        2 * hilbert.embed_operator(ch2, "H2", "y")
        @ hilbert.embed_operator(ch2, "C1", "z"), ch2)
    combined = hilbert.DensityState(rho_a.matrix + rho_b.matrix, ch2)
    fid_sum = (acquire.run_fid(ch2, rho_a, 64, 1e-3, "1H", ("13C",))
               + acquire.run_fid(ch2, rho_b, 64, 1e-3, "1H", ("13C",)))
    fid_combined = acquire.run_fid(ch2, combined, 64, 1e-3, "1H", ("13C",))
    assert np.allclose(fid_combined, fid_sum, atol=1e-10)


def test_ax_system_cancels(ax):
    raw = acquire.run_experiment(ax, sequences.build_hmqc(DELTA), small_params())
    assert np.abs(raw.cos_plane).max() < 1e-10
    assert np.abs(raw.sin_plane).max() < 1e-10


def test_ax_system_cancels_without_filters(ax):
    seq = sequences.build_hmqc(DELTA, filters=False)
    raw = acquire.run_experiment(ax, seq, small_params(n1=4))
    assert np.abs(raw.cos_plane).max() < 1e-10


def test_cycle_cancellation_filters_off(ch2):
    # proton magnetization that never touches the carbon is canceled by
    # the phi1 = x,-x cycle even with every filter disabled
    desk = spins.desk_offsets(ch2)
    seq = sequences.build_hmqc(DELTA, filters=False)
    raw = acquire.run_experiment(desk, seq, small_params(n1=4))
    no_c = spins.SpinSystem("no-c", tuple(s for s in desk.spins if s.isotope == "1H"),
                            (desk.couplings[0],))
    raw_h = acquire.run_experiment(no_c, seq, small_params(n1=4))
    assert np.abs(raw_h.cos_plane).max() < 1e-10 * np.abs(raw.cos_plane).max()


def test_determinism_and_workers(ch2):
    desk = spins.desk_offsets(ch2)
    seq = sequences.build_pe_hmqc(DELTA, 1)
    p = small_params()
    a = acquire.run_experiment(desk, seq, p, workers=1)
    b = acquire.run_experiment(desk, seq, p, workers=1)
    c = acquire.run_experiment(desk, seq, p, workers=3)
    assert np.array_equal(a.cos_plane, b.cos_plane)
    assert np.array_equal(a.sin_plane, b.sin_plane)
    assert np.array_equal(a.cos_plane, c.cos_plane)
    assert np.array_equal(a.sin_plane, c.sin_plane)


def test_hypercomplex_quadrature_pair(ch2):
    # pe-HMQC has a single F1 frequency: the sin plane is the 90-degree
    # shifted copy of the cos plane in t1
    desk = spins.desk_offsets(ch2)
    seq = sequences.build_pe_hmqc(DELTA, 1)
    p = small_params(n1=32)
    raw = acquire.run_experiment(desk, seq, p, workers=1)
    t1 = p.t1_values()
    omega = 2 * math.pi * 50.0
    basis = np.stack([np.cos(omega * t1), np.sin(omega * t1)], axis=1)
    for col in (3, 17):
        wc, *_ = np.linalg.lstsq(basis, raw.cos_plane[:, col], rcond=None)
        ws, *_ = np.linalg.lstsq(basis, raw.sin_plane[:, col], rcond=None)
        resid_c = np.linalg.norm(raw.cos_plane[:, col] - basis @ wc)
        assert resid_c < 1e-8 * max(1.0, np.abs(wc).max())
        # cos plane ~ A cos(w t1); sin plane ~ -A sin(w t1)
        assert ws[0] == pytest.approx(-wc[1], abs=1e-8)
        assert ws[1] == pytest.approx(-wc[0], abs=1e-8)


def test_raw_round_trip(tmp_path, ch2):
    desk = spins.desk_offsets(ch2)
    raw = acquire.run_experiment(desk, sequences.build_hmqc(DELTA),
                                 small_params(n1=4))
    acquire.save_raw(tmp_path / "raw", raw)
    again = acquire.load_raw(tmp_path / "raw")
    assert np.array_equal(again.cos_plane, raw.cos_plane)
    assert np.array_equal(again.sin_plane, raw.sin_plane)
    assert again.params == raw.params
    assert again.provenance["sequence"] == "hmqc"
    # byte layout: little-endian interleaved float64 re/im, row-major
    blob = (tmp_path / "raw" / acquire.RAW_COS).read_bytes()
    first = np.frombuffer(blob[:16], dtype="<f8")
    assert first[0] == raw.cos_plane[0, 0].real
    assert first[1] == raw.cos_plane[0, 0].imag


def test_run_experiment_rejects_invalid_system():
    bad = spins.SpinSystem("bad", (spins.Spin("H1", "1H", 0.0),
                                   spins.Spin("H1", "1H", 1.0)))
    with pytest.raises(spins.SystemValidationError):
        acquire.run_experiment(bad, sequences.build_hmqc(DELTA), small_params())
