"""Spin system definitions: isotopes, offsets and scalar couplings.

A spin system is the physical model under simulation: an ordered list of
spin-1/2 nuclei with rotating-frame offsets (Hz, one rotating frame per
isotope channel) and pairwise scalar couplings.  Systems are immutable
after construction and safe to share across workers.

Spinless nuclei (12C) are modelled by simply omitting the spin: a proton
bound to 12C has no heteronuclear coupling partner.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

MAX_SPINS = 8

# Gyromagnetic ratios relative to 1H.  The table is closed: spin-1/2
# channels used by the experiments simulated here.
GAMMA_REL = {
    "1H": 1.0,
    "13C": 0.25144,
}

WEAK = "weak"
ISOTROPIC = "isotropic"
COUPLING_MODELS = (WEAK, ISOTROPIC)


class SystemFormatError(ValueError):
    """Raised when a spin-system document cannot be parsed."""


class SystemValidationError(ValueError):
    """Raised when a spin system violates a structural invariant."""


@dataclass(frozen=True)
class Isotope:
    label: str
    gamma_rel: float


ISOTOPES = {label: Isotope(label, g) for label, g in GAMMA_REL.items()}


@dataclass(frozen=True)
class Spin:
    id: str
    isotope: str
    offset_hz: float


@dataclass(frozen=True)
class Coupling:
    a: str
    b: str
    j_hz: float
    model: str = WEAK

    def pair(self) -> frozenset:
        return frozenset((self.a, self.b))


@dataclass(frozen=True)
class SpinSystem:
    name: str
    spins: tuple[Spin, ...]
    couplings: tuple[Coupling, ...] = ()

    @property
    def n_spins(self) -> int:
        return len(self.spins)

    @property
    def dim(self) -> int:
        return 2 ** len(self.spins)

    def index(self, spin_id: str) -> int:
        for i, s in enumerate(self.spins):
            if s.id == spin_id:
                return i
        raise KeyError(f"unknown spin id {spin_id!r}")

    def spin(self, spin_id: str) -> Spin:
        return self.spins[self.index(spin_id)]

    def isotope_labels(self) -> tuple[str, ...]:
        """Isotope labels in order of first appearance (document order)."""
        seen: list[str] = []
        for s in self.spins:
            if s.isotope not in seen:
                seen.append(s.isotope)
        return tuple(seen)

    def spins_of(self, isotope: str) -> tuple[int, ...]:
        """Indices of all spins belonging to an isotope channel."""
        return tuple(i for i, s in enumerate(self.spins) if s.isotope == isotope)

    def coupling_between(self, a: str, b: str) -> Coupling | None:
        want = frozenset((a, b))
        for c in self.couplings:
            if c.pair() == want:
                return c
        return None

    def j_matrix(self) -> dict[tuple[str, str], float]:
        return {(c.a, c.b): c.j_hz for c in self.couplings}


def validate(system: SpinSystem) -> list[str]:
    """Check every structural invariant; returns the list of violations.

    An empty list means the system is valid.  Violations are returned
    rather than raised so callers can report them all at once.
    """
    problems: list[str] = []
    n = len(system.spins)
    if n < 1:
        problems.append("system has no spins")
    if n > MAX_SPINS:
        problems.append(f"spin count exceeds {MAX_SPINS} (got {n})")

    ids = [s.id for s in system.spins]
    for sid in sorted({i for i in ids if ids.count(i) > 1}):
        problems.append(f"duplicate spin id {sid!r}")
    for s in system.spins:
        if s.isotope not in ISOTOPES:
            problems.append(f"unknown isotope {s.isotope!r} on spin {s.id!r}")
        if not math.isfinite(s.offset_hz):
            problems.append(f"non-finite offset on spin {s.id!r}")

    known = set(ids)
    seen_pairs: set[frozenset] = set()
    for c in system.couplings:
        if c.a == c.b:
            problems.append(f"coupling of spin {c.a!r} to itself")
            continue
        dangling = [x for x in (c.a, c.b) if x not in known]
        for x in dangling:
            problems.append(f"coupling references undeclared spin {x!r}")
        if dangling:
            continue
        if not math.isfinite(c.j_hz):
            problems.append(f"non-finite coupling {c.a}-{c.b}")
        if c.model not in COUPLING_MODELS:
            problems.append(f"unknown coupling model {c.model!r} on {c.a}-{c.b}")
        pair = c.pair()
        if pair in seen_pairs:
            problems.append(f"duplicate coupling for pair {c.a}-{c.b}")
        seen_pairs.add(pair)
        iso_a = system.spin(c.a).isotope
        iso_b = system.spin(c.b).isotope
        if iso_a != iso_b and c.model == ISOTROPIC:
            problems.append(
                f"heteronuclear coupling {c.a}-{c.b} must be weak, not isotropic"
            )
    return problems


def _require_valid(system: SpinSystem) -> SpinSystem:
    problems = validate(system)
    if problems:
        raise SystemValidationError("; ".join(problems))
    return system


_SPIN_KEYS = {"id", "isotope", "offset_hz"}
_COUPLING_KEYS = {"a", "b", "j_hz", "model"}
_TOP_KEYS = {"name", "spins", "couplings"}


def load_system(text: str) -> SpinSystem:
    """Parse and validate a spin-system JSON document.

    Format: ``{"name": str, "spins": [{"id", "isotope", "offset_hz"}],
    "couplings": [{"a", "b", "j_hz", "model"}]}``.  Unknown keys are
    rejected; spin order in the document is preserved and defines the
    operator ordering used by the engines.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SystemFormatError(
            f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    if not isinstance(doc, dict):
        raise SystemFormatError("top-level document must be an object")
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise SystemFormatError(f"unknown top-level keys: {sorted(unknown)}")
    if "name" not in doc or "spins" not in doc:
        raise SystemFormatError("document requires 'name' and 'spins'")

    spins = []
    for k, entry in enumerate(doc["spins"]):
        if not isinstance(entry, dict):
            raise SystemFormatError(f"spins[{k}] is not an object")
        extra = set(entry) - _SPIN_KEYS
        if extra:
            raise SystemFormatError(f"spins[{k}] has unknown keys {sorted(extra)}")
        missing = _SPIN_KEYS - set(entry)
        if missing:
            raise SystemFormatError(f"spins[{k}] is missing {sorted(missing)}")
        spins.append(Spin(str(entry["id"]), str(entry["isotope"]),
                          float(entry["offset_hz"])))

    couplings = []
    for k, entry in enumerate(doc.get("couplings", [])):
        if not isinstance(entry, dict):
            raise SystemFormatError(f"couplings[{k}] is not an object")
        extra = set(entry) - _COUPLING_KEYS
        if extra:
            raise SystemFormatError(f"couplings[{k}] has unknown keys {sorted(extra)}")
        missing = {"a", "b", "j_hz"} - set(entry)
        if missing:
            raise SystemFormatError(f"couplings[{k}] is missing {sorted(missing)}")
        couplings.append(Coupling(str(entry["a"]), str(entry["b"]),
                                  float(entry["j_hz"]),
                                  str(entry.get("model", WEAK))))

    system = SpinSystem(str(doc["name"]), tuple(spins), tuple(couplings))
    return _require_valid(system)


def serialize(system: SpinSystem) -> str:
    """Render a system to the JSON document format (round-trips load_system)."""
    doc = {
        "name": system.name,
        "spins": [
            {"id": s.id, "isotope": s.isotope, "offset_hz": s.offset_hz}
            for s in system.spins
        ],
        "couplings": [
            {"a": c.a, "b": c.b, "j_hz": c.j_hz, "model": c.model}
            for c in system.couplings
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


# Documented default offsets for the builtin systems.  These are
# placeholders chosen to separate peaks within typical spectral widths;
# they are not tied to any particular molecule.
_H1_OFFSET = 1200.0
_H2_OFFSET = 1450.0
_H3_OFFSET = 1000.0
_C_OFFSET = 500.0


def builtin_system(name: str, j2_hz: float = 15.0) -> SpinSystem:
    """Return one of the reference systems used throughout the test suite.

    ``ch2``        isolated methylene fragment Ha-13C-Hb: J(Ha,Hb) = 13.9 Hz,
                   both one-bond couplings 140 Hz.
    ``ch-remote``  13C-bound proton plus a 12C-bound neighbour: 1J = 145 Hz,
                   J(H,H) = 7 Hz, two-bond remote coupling ``j2_hz``
                   (default 15 Hz).
    ``ch2-remote`` the ch2 fragment plus one remote 12C-bound proton
                   coupled to both methylene protons (7 Hz each).
    ``ax``         two weakly coupled protons, J = 10 Hz, no carbon.
    """
    if name == "ch2":
        return _require_valid(SpinSystem(
            "ch2",
            (
                Spin("H1", "1H", _H1_OFFSET),
                Spin("H2", "1H", _H2_OFFSET),
                Spin("C1", "13C", _C_OFFSET),
            ),
            (
                Coupling("H1", "H2", 13.9),
                Coupling("H1", "C1", 140.0),
                Coupling("H2", "C1", 140.0),
            ),
        ))
    if name == "ch-remote":
        return _require_valid(SpinSystem(
            "ch-remote",
            (
                Spin("H1", "1H", _H1_OFFSET),
                Spin("H2", "1H", _H2_OFFSET),
                Spin("C1", "13C", _C_OFFSET),
            ),
            (
                Coupling("H1", "H2", 7.0),
                Coupling("H1", "C1", 145.0),
                Coupling("H2", "C1", float(j2_hz)),
            ),
        ))
    if name == "ch2-remote":
        return _require_valid(SpinSystem(
            "ch2-remote",
            (
                Spin("H1", "1H", _H1_OFFSET),
                Spin("H2", "1H", _H2_OFFSET),
                Spin("C1", "13C", _C_OFFSET),
                Spin("H3", "1H", _H3_OFFSET),
            ),
            (
                Coupling("H1", "H2", 13.9),
                Coupling("H1", "C1", 140.0),
                Coupling("H2", "C1", 140.0),
                Coupling("H1", "H3", 7.0),
                Coupling("H2", "H3", 7.0),
            ),
        ))
    if name == "ax":
        return _require_valid(SpinSystem(
            "ax",
            (
                Spin("H1", "1H", _H1_OFFSET),
                Spin("H2", "1H", _H2_OFFSET),
            ),
            (Coupling("H1", "H2", 10.0),),
        ))
    raise SystemValidationError(
        f"unknown builtin system {name!r}; available: ch2, ch-remote, ch2-remote, ax"
    )


def scale_offsets(system: SpinSystem, factor: float) -> SpinSystem:
    """Uniformly rescale every offset (couplings untouched).

    Used by the desk-scale profile to move the documented placeholder
    offsets into narrow spectral windows.
    """
    spins = tuple(replace(s, offset_hz=s.offset_hz * factor) for s in system.spins)
    return SpinSystem(system.name, spins, system.couplings)


def with_offsets(system: SpinSystem, offsets: dict[str, float]) -> SpinSystem:
    """Return a copy with selected spins' offsets replaced."""
    spins = tuple(
        replace(s, offset_hz=offsets.get(s.id, s.offset_hz)) for s in system.spins
    )
    return SpinSystem(system.name, spins, system.couplings)


DESK_CHANNEL_CENTERS = {"1H": 0.0, "13C": 50.0}
DESK_OFFSET_SCALE = 0.1


def desk_offsets(system: SpinSystem) -> SpinSystem:
    """Remap offsets into the narrow desk-scale spectral windows.

    Each isotope channel is recentered on its own carrier (the channel's
    mean offset maps to the documented center) and the spread is scaled
    by 0.1.  Keeping proton offsets small also keeps the phase evolved
    during the transfer delays small, which the perfect-echo analysis
    assumes.
    """
    by_iso: dict[str, list[float]] = {}
    for s in system.spins:
        by_iso.setdefault(s.isotope, []).append(s.offset_hz)
    means = {iso: sum(v) / len(v) for iso, v in by_iso.items()}
    spins = tuple(
        replace(s, offset_hz=(s.offset_hz - means[s.isotope]) * DESK_OFFSET_SCALE
                + DESK_CHANNEL_CENTERS.get(s.isotope, 0.0))
        for s in system.spins
    )
    return SpinSystem(system.name, spins, system.couplings)
