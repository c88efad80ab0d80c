import json
import math

import pytest

from pehmqc import spins


def test_load_round_trip(ch2):
    text = spins.serialize(ch2)
    again = spins.load_system(text)
    assert again == ch2
    assert spins.serialize(again) == text


def test_load_example_document():
    doc = {
        "name": "sar3-ch2",
        "spins": [
            {"id": "H1", "isotope": "1H", "offset_hz": 1200},
            {"id": "H2", "isotope": "1H", "offset_hz": 1450},
            {"id": "C1", "isotope": "13C", "offset_hz": 500},
        ],
        "couplings": [
            {"a": "H1", "b": "H2", "j_hz": 13.9, "model": "weak"},
            {"a": "H1", "b": "C1", "j_hz": 140, "model": "weak"},
            {"a": "H2", "b": "C1", "j_hz": 140, "model": "weak"},
        ],
    }
    system = spins.load_system(json.dumps(doc))
    assert system.n_spins == 3
    assert [s.id for s in system.spins] == ["H1", "H2", "C1"]
    assert system.coupling_between("H1", "H2").j_hz == 13.9


def test_single_spin_document():
    text = json.dumps({"name": "one", "spins": [
        {"id": "H1", "isotope": "1H", "offset_hz": 0.0}]})
    system = spins.load_system(text)
    assert system.n_spins == 1
    assert system.couplings == ()


def test_dangling_coupling_rejected():
    doc = {
        "name": "bad",
        "spins": [{"id": "H1", "isotope": "1H", "offset_hz": 0.0}],
        "couplings": [{"a": "H1", "b": "X9", "j_hz": 5.0}],
    }
    with pytest.raises(spins.SystemValidationError, match="X9"):
        spins.load_system(json.dumps(doc))


def test_parse_error_reports_position():
    with pytest.raises(spins.SystemFormatError, match="line"):
        spins.load_system('{"name": "x",\n  "spins": [}')


def test_unknown_keys_rejected():
    doc = {"name": "x", "spins": [
        {"id": "H1", "isotope": "1H", "offset_hz": 0.0, "ppm": 4.5}]}
    with pytest.raises(spins.SystemFormatError, match="ppm"):
        spins.load_system(json.dumps(doc))


def test_builtins_valid():
    for name in ("ch2", "ch-remote", "ch2-remote", "ax"):
        system = spins.builtin_system(name)
        assert spins.validate(system) == []


def test_unknown_builtin():
    with pytest.raises(spins.SystemValidationError, match="unknown builtin"):
        spins.builtin_system("nope")


def test_ch2_values(ch2):
    j = {frozenset(k): v for k, v in ch2.j_matrix().items()}
    assert j[frozenset(("H1", "H2"))] == 13.9
    assert j[frozenset(("H1", "C1"))] == 140.0
    assert j[frozenset(("H2", "C1"))] == 140.0
    assert ch2.spin("C1").offset_hz == 500.0


def test_ch_remote_j2_configurable():
    system = spins.builtin_system("ch-remote", j2_hz=15.0)
    assert system.coupling_between("H2", "C1").j_hz == 15.0
    assert system.coupling_between("H1", "C1").j_hz == 145.0
    assert system.coupling_between("H1", "H2").j_hz == 7.0


def test_ax_minimal(ax):
    assert ax.n_spins == 2
    assert len(ax.couplings) == 1
    assert ax.couplings[0].j_hz == 10.0
    assert ax.isotope_labels() == ("1H",)


def test_validate_spin_cap():
    many = tuple(spins.Spin(f"H{i}", "1H", 0.0) for i in range(9))
    problems = spins.validate(spins.SpinSystem("big", many))
    assert any("exceeds 8" in p for p in problems)


def test_validate_heteronuclear_isotropic():
    system = spins.SpinSystem("het", (
        spins.Spin("H1", "1H", 0.0), spins.Spin("C1", "13C", 0.0)),
        (spins.Coupling("H1", "C1", 140.0, model="isotropic"),))
    problems = spins.validate(system)
    assert any("H1-C1" in p and "weak" in p for p in problems)


def test_validate_duplicates():
    system = spins.SpinSystem("dup", (
        spins.Spin("H1", "1H", 0.0), spins.Spin("H1", "1H", 5.0)))
    assert any("duplicate spin id" in p for p in spins.validate(system))


def test_gamma_table():
    assert spins.GAMMA_REL["1H"] == 1.0
    assert spins.GAMMA_REL["13C"] == 0.25144


def test_spin_order_stable():
    text = json.dumps({"name": "o", "spins": [
        {"id": "B", "isotope": "1H", "offset_hz": 1.0},
        {"id": "A", "isotope": "1H", "offset_hz": 2.0}]})
    system = spins.load_system(text)
    assert system.index("B") == 0
    assert system.index("A") == 1


def test_desk_offsets_recenters(ch2):
    desk = spins.desk_offsets(ch2)
    hs = [s.offset_hz for s in desk.spins if s.isotope == "1H"]
    assert math.isclose(sum(hs), 0.0, abs_tol=1e-12)
    assert math.isclose(max(hs) - min(hs), 0.1 * 250.0)
    assert desk.spin("C1").offset_hz == 50.0
    assert desk.couplings == ch2.couplings


def test_scale_offsets(ch2):
    scaled = spins.scale_offsets(ch2, 0.1)
    assert scaled.spin("H1").offset_hz == 120.0
    assert scaled.couplings == ch2.couplings
