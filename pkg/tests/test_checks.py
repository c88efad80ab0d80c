import math

import pytest

from pehmqc import checks, productop as po, sequences, spins


def test_mq_amplitudes_ch2(ch2):
    amps = checks.mq_amplitudes(ch2, 1.0 / 280.0)
    assert amps == pytest.approx({"H1": 1.0, "H2": 1.0})


def test_ideal_state_terms(ch2):
    state = checks.ideal_mq_state(ch2, 1.0 / 280.0)
    assert state == pytest.approx({("x", "E", "y"): 1.0, ("E", "x", "y"): 1.0})


def test_f_factor_values(ch_remote):
    out = checks.f_factor(ch_remote, 3.3e-3)
    assert out["direct"] == "H1"
    remote = out["remote"]["H2"]
    assert remote["f"] == pytest.approx(math.sin(math.pi * 15 * 3.3e-3), abs=1e-12)
    assert remote["f"] == pytest.approx(0.1549, abs=5e-5)
    assert remote["ratio_vs_direct"] == pytest.approx(
        math.sin(math.pi * 15 * 3.3e-3) / math.sin(math.pi * 145 * 3.3e-3))


def test_f_factor_trace_ratio_exact(ch_remote):
    # the traced point-'a' magnitude ratio times sin(pi J1 delta) recovers
    # the f factor exactly: passive-coupling factors cancel in the ratio
    delta = 3.3e-3
    seq = sequences.build_pe_hmqc(delta, 1)
    trace = po.po_trace(seq, ch_remote, 0.02, ["a"])
    mags = checks.traced_mq_magnitudes(trace["a"], ch_remote)
    ratio = mags["H2"] / mags["H1"]
    f = ratio * math.sin(math.pi * 145 * delta)
    assert f == pytest.approx(math.sin(math.pi * 15 * delta), abs=1e-9)


def test_pe_algebra_ch2_passes(ch2):
    seq = sequences.build_pe_hmqc(1.0 / 280.0, 1)
    result = checks.check_pe_algebra(seq, ch2, 1.0 / 280.0)
    assert result.passed
    assert result.max_deviation <= 1e-12


def test_pe_algebra_antiphase_exchange(ch2):
    # marks b -> c: the central pulse flips exactly the antiphase terms
    seq = sequences.build_pe_hmqc(1.0 / 280.0, 1)
    initial = checks.ideal_mq_state(ch2, 1.0 / 280.0)
    for t1 in (0.013, 0.047, 0.088, 0.21, 0.33):
        tr = po.po_trace(seq, ch2, t1, ["b", "c"], initial=initial,
                         start_after_mark="a")
        for term, coeff in tr["b"].items():
            expected = -coeff if "z" in term else coeff
            assert tr["c"].get(term, 0.0) == pytest.approx(expected, abs=1e-12)


def test_pe_algebra_j_freedom_tight(ch2):
    seq = sequences.build_pe_hmqc(1.0 / 280.0, 1)
    initial = checks.ideal_mq_state(ch2, 1.0 / 280.0)
    t1s = [0.369 * k * (math.sqrt(5) - 1) / 2 % 0.369 for k in range(1, 13)]
    fit = checks.fit_t1_modulation(seq, ch2, "d", ("x", "E", "y"), t1s,
                                   initial, 13.9)
    assert fit["j_weight"] <= 1e-12
    assert fit["residual"] <= 1e-12
    assert fit["weights"]["cosOm*1"] == pytest.approx(1.0, abs=1e-12)


def test_pe_algebra_n2_also_j_free(ch2):
    seq = sequences.build_pe_hmqc(1.0 / 280.0, 2)
    result = checks.check_pe_algebra(seq, ch2, 1.0 / 280.0)
    assert result.passed


def test_pe_algebra_detects_broken_sequence(ch2):
    # replacing the central 90 by 45 breaks the antiphase exchange
    seq = sequences.build_pe_hmqc(1.0 / 280.0, 1)
    events = tuple(
        sequences.Pulse(e.isotope, 45.0, e.phase)
        if isinstance(e, sequences.Pulse) and e.flip_deg == 90.0
        and e.isotope == "1H" else e
        for e in seq.events)
    broken = sequences.PulseSequence(seq.name, events, seq.phase_cycle,
                                     seq.quad, seq.params)
    result = checks.check_pe_algebra(broken, ch2, 1.0 / 280.0)
    assert not result.passed


def test_ch_remote_partial_refocusing_reported(ch_remote):
    # unequal transfer amplitudes: J content persists, reported not failed
    delta = 3.3e-3
    seq = sequences.build_pe_hmqc(delta, 1)
    result = checks.check_pe_algebra(seq, ch_remote, delta)
    assert result.passed  # nothing asserted for non-methylene systems
    initial = checks.ideal_mq_state(ch_remote, delta)
    t1s = [0.3 * k * 0.618 % 0.3 for k in range(1, 20)]
    fit = checks.fit_t1_modulation(seq, ch_remote, "d", ("x", "E", "y"),
                                   t1s, initial, 7.0)
    amps = checks.mq_amplitudes(ch_remote, delta)
    f = amps["H2"] / amps["H1"] * math.sin(math.pi * 145 * delta)
    # refocused fraction (1+f)/2 of the direct amplitude, J-modulated rest
    assert fit["weights"]["cosOm*1"] == pytest.approx(
        amps["H1"] * (1 + f) / 2, abs=5e-3)
    assert fit["j_weight"] > 0.1


def test_expected_marks_requires_equal_couplings(ch_remote):
    with pytest.raises(ValueError, match="equal"):
        checks.expected_marks_ch2(ch_remote, 3.3e-3, 0.01)
