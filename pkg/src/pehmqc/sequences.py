"""Pulse sequences as t1-parametrized event lists.

A sequence is an ordered list of events (pulses, delays, coherence
filters, marks, one final acquisition) plus a phase-cycle table and a
quadrature scheme.  Delays may depend on t1; ``resolve`` substitutes a
concrete t1 value, cycle step and quadrature component to produce a flat
list of numeric events ready for the propagation engines.

Builders are provided for conventional HMQC and for pe-HMQC with n
perfect-echo blocks spanning t1.  Both are expressible in (and round-trip
through) a line-oriented text format, see ``parse_sequence``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

PHASE_NAMES = {"x": 0.0, "y": 90.0, "-x": 180.0, "-y": 270.0}
_NAME_BY_DEG = {v: k for k, v in PHASE_NAMES.items()}

STATES = "states"
STATES_TPPI = "states-tppi"


class SequenceFormatError(ValueError):
    """Raised on malformed sequence text (carries a line number)."""


class SequenceSemanticError(ValueError):
    """Raised when a structurally parsed sequence violates an invariant."""


@dataclass(frozen=True)
class Pulse:
    isotope: str
    flip_deg: float
    phase: str  # "x" | "y" | "-x" | "-y" | "@<slot>"


@dataclass(frozen=True)
class Delay:
    """Duration expression: t1_factor * t1 + seconds + (delta param if is_delta)."""
    t1_factor: Fraction = Fraction(0)
    seconds: float = 0.0
    is_delta: bool = False

    @staticmethod
    def fixed(seconds: float) -> "Delay":
        return Delay(seconds=float(seconds))

    @staticmethod
    def of_t1(factor: Fraction) -> "Delay":
        return Delay(t1_factor=Fraction(factor))

    @staticmethod
    def delta() -> "Delay":
        return Delay(is_delta=True)

    def duration(self, t1_s: float, delta_s: float) -> float:
        return float(self.t1_factor) * t1_s + self.seconds + (delta_s if self.is_delta else 0.0)


@dataclass(frozen=True)
class Filter:
    """Per-isotope coherence-order constraint (product across isotopes).

    ``orders`` maps isotope label to the allowed orders on that channel;
    isotopes not listed are unconstrained.  Stored as a sorted tuple of
    pairs so the event is hashable.
    """
    orders: tuple[tuple[str, tuple[int, ...]], ...]

    @staticmethod
    def keeping(**orders_by_isotope) -> "Filter":
        items = tuple(sorted(
            (iso.replace("_", ""), tuple(int(o) for o in orders))
            for iso, orders in orders_by_isotope.items()))
        return Filter(items)

    @staticmethod
    def from_dict(orders: dict[str, tuple[int, ...]]) -> "Filter":
        return Filter(tuple(sorted(
            (iso, tuple(int(o) for o in v)) for iso, v in orders.items())))

    def as_dict(self) -> dict[str, tuple[int, ...]]:
        return dict(self.orders)


@dataclass(frozen=True)
class Purge:
    """Idealized purge (killer gradient / purge pulse) on one channel.

    Keeps in-phase single-quantum coherence of the isotope plus purely
    longitudinal content; antiphase and residual multiple-quantum terms
    are projected out.  Coherence-order filters cannot express this:
    antiphase terms occupy the same matrix elements as in-phase ones.
    """
    isotope: str


@dataclass(frozen=True)
class Mark:
    label: str


@dataclass(frozen=True)
class Acquire:
    isotope: str
    decouple: tuple[str, ...] = ()


@dataclass(frozen=True)
class PhaseCycle:
    slots: tuple[tuple[str, tuple[float, ...]], ...]  # (slot, phases in deg)
    receiver: tuple[float, ...]

    @staticmethod
    def build(slots: dict[str, tuple[float, ...]], receiver: tuple[float, ...]) -> "PhaseCycle":
        return PhaseCycle(tuple(sorted((k, tuple(v)) for k, v in slots.items())),
                          tuple(receiver))

    @property
    def length(self) -> int:
        return len(self.receiver)

    def slot_phases(self, slot: str) -> tuple[float, ...]:
        for name, phases in self.slots:
            if name == slot:
                return phases
        raise KeyError(f"unknown phase slot {slot!r}")

    def slot_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.slots)


@dataclass(frozen=True)
class QuadScheme:
    mode: str = STATES  # "states" | "states-tppi"
    slot: str = "phi1"


@dataclass
class PulseSequence:
    name: str
    events: tuple
    phase_cycle: PhaseCycle
    quad: QuadScheme
    params: dict
    metadata: dict = field(default_factory=dict, compare=False)

    def marks(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.events if isinstance(e, Mark))


# Resolved counterparts: every duration and phase a plain number.

@dataclass(frozen=True)
class ResolvedPulse:
    isotope: str
    flip_deg: float
    phase_deg: float


@dataclass(frozen=True)
class ResolvedDelay:
    seconds: float


@dataclass
class ResolvedSequence:
    events: list
    receiver_weight: float


def validate_sequence(seq: PulseSequence) -> None:
    """Raise SequenceSemanticError on any violated sequence invariant."""
    events = seq.events
    acquires = [e for e in events if isinstance(e, Acquire)]
    if len(acquires) != 1 or not isinstance(events[-1], Acquire):
        raise SequenceSemanticError("sequence must end with exactly one acquire")
    labels = [e.label for e in events if isinstance(e, Mark)]
    if len(labels) != len(set(labels)):
        raise SequenceSemanticError("duplicate mark labels")
    for e in events:
        if isinstance(e, Delay):
            if e.t1_factor < 0 or e.seconds < 0:
                raise SequenceSemanticError("delay expression can become negative")
            if e.is_delta and "delta" not in seq.params:
                raise SequenceSemanticError(
                    "sequence uses 'delay delta' without a delta parameter")
        if isinstance(e, Pulse) and e.phase.startswith("@"):
            slot = e.phase[1:]
            if slot not in seq.phase_cycle.slot_names():
                raise SequenceSemanticError(f"pulse references undeclared slot {slot!r}")
    for name in seq.phase_cycle.slot_names():
        if len(seq.phase_cycle.slot_phases(name)) != seq.phase_cycle.length:
            raise SequenceSemanticError(
                f"slot {name!r} length differs from receiver length")
    if seq.quad.slot not in seq.phase_cycle.slot_names():
        raise SequenceSemanticError(
            f"quadrature slot {seq.quad.slot!r} not present in phase cycle")
    if seq.quad.mode not in (STATES, STATES_TPPI):
        raise SequenceSemanticError(f"unknown quadrature mode {seq.quad.mode!r}")


def resolve(seq: PulseSequence, t1_s: float, cycle_step: int,
            quad_component: str = "cos", t1_index: int = 0) -> ResolvedSequence:
    """Substitute t1, the phase-cycle step and the quadrature component.

    For the sin component the quadrature slot is advanced by 90 degrees;
    under states-tppi the slot additionally advances 90 degrees per t1
    index and the receiver weight alternates sign (the axial displacement
    this produces is undone in processing).
    """
    if t1_s < 0:
        raise ValueError("t1 must be nonnegative")
    if not 0 <= cycle_step < seq.phase_cycle.length:
        raise ValueError(f"cycle step {cycle_step} out of range")
    if quad_component not in ("cos", "sin"):
        raise ValueError("quadrature component must be 'cos' or 'sin'")
    delta_s = float(seq.params.get("delta", 0.0))
    out: list = []
    for e in seq.events:
        if isinstance(e, Pulse):
            if e.phase.startswith("@"):
                slot = e.phase[1:]
                deg = seq.phase_cycle.slot_phases(slot)[cycle_step]
                if slot == seq.quad.slot:
                    if quad_component == "sin":
                        deg += 90.0
                    if seq.quad.mode == STATES_TPPI:
                        deg += 90.0 * t1_index
            else:
                deg = PHASE_NAMES[e.phase]
            out.append(ResolvedPulse(e.isotope, e.flip_deg, deg % 360.0))
        elif isinstance(e, Delay):
            seconds = e.duration(t1_s, delta_s)
            if seconds < 0:
                raise ValueError(f"delay resolved to negative duration {seconds}")
            out.append(ResolvedDelay(seconds))
        else:
            out.append(e)
    weight = seq.phase_cycle.receiver[cycle_step]
    if seq.quad.mode == STATES_TPPI:
        weight *= (-1.0) ** (t1_index % 2)
    return ResolvedSequence(out, weight)


_HETERO_MQ = Filter.keeping(**{"1H": (-1, 1), "13C": (-1, 1)})
_PROTON_SQ = Filter.keeping(**{"1H": (-1, 1)})

# Nominal gradient amplitudes of the hardware sequence, recorded as
# provenance only; pathway selection is idealized by the Filter events
# and the exact gradient positions are an assumption.
_GRADIENT_METADATA = {
    "gradients": {"G1": 17, "G2": 50, "G3": 55},
    "gradient_note": "amplitudes recorded for provenance; gradients are "
                     "idealized as coherence filters and the nominal "
                     "G2:G3 ratio is not enforced",
    "filter_placement": "assumed: multiple-quantum filter at the start of "
                        "t1, proton single-quantum filter before acquisition",
}


def _prefix_events(filters: bool) -> list:
    ev: list = [
        Pulse("1H", 90.0, "x"),
        Delay.delta(),
        Pulse("13C", 90.0, "@phi1"),
        Mark("a"),
    ]
    if filters:
        ev.append(_HETERO_MQ)
    return ev


def _suffix_events(filters: bool) -> list:
    ev: list = [
        Pulse("13C", 90.0, "x"),
        Delay.delta(),
    ]
    if filters:
        ev.append(_PROTON_SQ)
        ev.append(Purge("1H"))
    ev.append(Acquire("1H", decouple=("13C",)))
    return ev


def _cycle() -> PhaseCycle:
    return PhaseCycle.build({"phi1": (PHASE_NAMES["x"], PHASE_NAMES["-x"])},
                            receiver=(1.0, -1.0))


def build_hmqc(delta_s: float, filters: bool = True) -> PulseSequence:
    """Conventional HMQC: single proton refocusing pulse at the centre of t1."""
    if delta_s <= 0:
        raise ValueError("delta must be positive")
    events = _prefix_events(filters) + [
        Delay.of_t1(Fraction(1, 2)),
        Pulse("1H", 180.0, "x"),
        Mark("b"),
        Delay.of_t1(Fraction(1, 2)),
        Mark("d"),
    ] + _suffix_events(filters)
    seq = PulseSequence(
        name="hmqc",
        events=tuple(events),
        phase_cycle=_cycle(),
        quad=QuadScheme(STATES, "phi1"),
        params={"delta": float(delta_s)},
        metadata=dict(_GRADIENT_METADATA),
    )
    validate_sequence(seq)
    return seq


def build_pe_hmqc(delta_s: float, n: int, filters: bool = True) -> PulseSequence:
    """pe-HMQC: n perfect-echo blocks span t1.

    Each block is tau - 180(1H) - tau - 90(1H) - tau - 180(1H) - tau with
    tau = t1/(4n).  All pulses are x phase; the central 90 exchanges the
    antiphase states of coupled protons so homonuclear J refocuses at the
    block end.  Marks: a (start of t1), b (centre of block 1, before the
    90), c (just after the 90), d (end of the last block).
    """
    if delta_s <= 0:
        raise ValueError("delta must be positive")
    if n < 1:
        raise ValueError("number of perfect-echo blocks must be >= 1")
    tau = Fraction(1, 4 * n)
    events = _prefix_events(filters)
    for block in range(n):
        events.append(Delay.of_t1(tau))
        events.append(Pulse("1H", 180.0, "x"))
        events.append(Delay.of_t1(tau))
        if block == 0:
            events.append(Mark("b"))
        events.append(Pulse("1H", 90.0, "x"))
        if block == 0:
            events.append(Mark("c"))
        events.append(Delay.of_t1(tau))
        events.append(Pulse("1H", 180.0, "x"))
        events.append(Delay.of_t1(tau))
    events.append(Mark("d"))
    events += _suffix_events(filters)
    seq = PulseSequence(
        name=f"pe-hmqc-n{n}",
        events=tuple(events),
        phase_cycle=_cycle(),
        quad=QuadScheme(STATES, "phi1"),
        params={"delta": float(delta_s), "n_pe": int(n)},
        metadata=dict(_GRADIENT_METADATA),
    )
    validate_sequence(seq)
    return seq


# ---------------------------------------------------------------------------
# Text format


def _format_phase_deg(deg: float) -> str:
    deg = deg % 360.0
    if deg in _NAME_BY_DEG:
        return _NAME_BY_DEG[deg]
    return f"{deg:g}"


def _parse_phase_deg(token: str, lineno: int) -> float:
    if token in PHASE_NAMES:
        return PHASE_NAMES[token]
    try:
        return float(token) % 360.0
    except ValueError:
        raise SequenceFormatError(
            f"line {lineno}: bad phase {token!r}") from None


def _format_delay(d: Delay) -> str:
    if d.is_delta:
        return "delta"
    if d.t1_factor:
        f = d.t1_factor
        if f.numerator == 1:
            return f"t1/{f.denominator}"
        return f"t1*{f.numerator}/{f.denominator}"
    return repr(d.seconds)


def _parse_delay(expr: str, lineno: int) -> Delay:
    expr = expr.strip()
    if expr == "delta":
        return Delay.delta()
    if expr.startswith("t1"):
        rest = expr[2:].strip()
        try:
            if rest.startswith("/"):
                return Delay.of_t1(Fraction(1, int(rest[1:])))
            if rest.startswith("*"):
                return Delay.of_t1(Fraction(rest[1:].strip()))
        except (ValueError, ZeroDivisionError):
            pass
        raise SequenceFormatError(f"line {lineno}: bad t1 expression {expr!r}")
    try:
        return Delay.fixed(float(expr))
    except ValueError:
        raise SequenceFormatError(
            f"line {lineno}: bad delay expression {expr!r}") from None


def serialize_sequence(seq: PulseSequence) -> str:
    """Render a sequence to the line format (round-trips parse_sequence)."""
    lines = [f"name = {seq.name}"]
    for slot, phases in seq.phase_cycle.slots:
        lines.append(f"cycle {slot} = " + ",".join(_format_phase_deg(p) for p in phases))
    lines.append("receiver = " + ",".join(f"{w:+g}" for w in seq.phase_cycle.receiver))
    lines.append(f"quad = {seq.quad.mode} slot={seq.quad.slot}")
    for key in sorted(seq.params):
        lines.append(f"param {key} = {seq.params[key]!r}")
    for e in seq.events:
        if isinstance(e, Pulse):
            lines.append(f"pulse {e.isotope} {e.flip_deg:g} {e.phase}")
        elif isinstance(e, Delay):
            lines.append(f"delay {_format_delay(e)}")
        elif isinstance(e, Filter):
            groups = "; ".join(
                f"{iso}:" + ",".join(str(o) for o in orders)
                for iso, orders in e.orders)
            lines.append(f"filter {groups}")
        elif isinstance(e, Purge):
            lines.append(f"purge {e.isotope}")
        elif isinstance(e, Mark):
            lines.append(f"mark {e.label}")
        elif isinstance(e, Acquire):
            dec = ",".join(e.decouple)
            lines.append(f"acquire {e.isotope}" + (f" decouple={dec}" if dec else ""))
        else:
            raise TypeError(f"cannot serialize event {e!r}")
    return "\n".join(lines) + "\n"


def parse_sequence(text: str) -> PulseSequence:
    """Parse the line-oriented sequence format.

    Events appear one per line; '#' starts a comment.  Header directives
    (name, cycle, receiver, quad, param) may appear anywhere before the
    acquire line.  Event lines: pulse, delay, filter, purge, mark,
    acquire.  Raises SequenceFormatError with a line number on
    malformed input and SequenceSemanticError on invariant violations.
    """
    name = "sequence"
    slots: dict[str, tuple[float, ...]] = {}
    receiver: tuple[float, ...] = ()
    quad = QuadScheme()
    params: dict = {}
    events: list = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        if head == "name" or line.startswith("name"):
            if "=" in line:
                name = line.split("=", 1)[1].strip()
                continue
        if head == "cycle":
            if "=" not in rest:
                raise SequenceFormatError(f"line {lineno}: cycle needs '='")
            slot, _, values = rest.partition("=")
            phases = tuple(_parse_phase_deg(tok.strip(), lineno)
                           for tok in values.split(",") if tok.strip())
            slots[slot.strip()] = phases
        elif head == "receiver":
            if "=" not in line:
                raise SequenceFormatError(f"line {lineno}: receiver needs '='")
            values = line.split("=", 1)[1]
            try:
                receiver = tuple(float(tok) for tok in values.split(",") if tok.strip())
            except ValueError:
                raise SequenceFormatError(f"line {lineno}: bad receiver list") from None
        elif head == "quad":
            if "=" not in line:
                raise SequenceFormatError(f"line {lineno}: quad needs '='")
            body = line.split("=", 1)[1].strip()
            parts = body.split()
            if not parts:
                raise SequenceFormatError(f"line {lineno}: empty quad directive")
            mode = parts[0]
            slot = "phi1"
            for p in parts[1:]:
                if p.startswith("slot="):
                    slot = p[5:]
                else:
                    raise SequenceFormatError(f"line {lineno}: bad quad token {p!r}")
            quad = QuadScheme(mode, slot)
        elif head == "param":
            if "=" not in rest:
                raise SequenceFormatError(f"line {lineno}: param needs '='")
            key, _, value = rest.partition("=")
            key = key.strip()
            value = value.strip()
            try:
                params[key] = int(value)
            except ValueError:
                try:
                    params[key] = float(value)
                except ValueError:
                    raise SequenceFormatError(
                        f"line {lineno}: bad param value {value!r}") from None
        elif head == "pulse":
            parts = rest.split()
            if len(parts) != 3:
                raise SequenceFormatError(
                    f"line {lineno}: pulse needs isotope, flip, phase")
            iso, flip, phase = parts
            try:
                flip_deg = float(flip)
            except ValueError:
                raise SequenceFormatError(f"line {lineno}: bad flip {flip!r}") from None
            if not phase.startswith("@"):
                _parse_phase_deg(phase, lineno)  # validate
            events.append(Pulse(iso, flip_deg, phase))
        elif head == "delay":
            events.append(_parse_delay(rest, lineno))
        elif head == "filter":
            orders: dict[str, tuple[int, ...]] = {}
            for group in rest.split(";"):
                group = group.strip()
                if not group:
                    continue
                iso, _, vals = group.partition(":")
                try:
                    orders[iso.strip()] = tuple(int(v) for v in vals.split(","))
                except ValueError:
                    raise SequenceFormatError(
                        f"line {lineno}: bad filter orders {vals!r}") from None
            if not orders:
                raise SequenceFormatError(f"line {lineno}: empty filter")
            events.append(Filter.from_dict(orders))
        elif head == "purge":
            if not rest:
                raise SequenceFormatError(f"line {lineno}: purge needs an isotope")
            events.append(Purge(rest))
        elif head == "mark":
            if not rest:
                raise SequenceFormatError(f"line {lineno}: mark needs a label")
            events.append(Mark(rest))
        elif head == "acquire":
            parts = rest.split()
            if not parts:
                raise SequenceFormatError(f"line {lineno}: acquire needs an isotope")
            iso = parts[0]
            decouple: tuple[str, ...] = ()
            for p in parts[1:]:
                if p.startswith("decouple="):
                    decouple = tuple(x for x in p[9:].split(",") if x)
                else:
                    raise SequenceFormatError(f"line {lineno}: bad acquire token {p!r}")
            events.append(Acquire(iso, decouple))
        else:
            raise SequenceFormatError(f"line {lineno}: unknown directive {head!r}")

    seq = PulseSequence(
        name=name,
        events=tuple(events),
        phase_cycle=PhaseCycle.build(slots, receiver),
        quad=quad,
        params=params,
    )
    validate_sequence(seq)
    return seq


def t1_delay_fractions(seq: PulseSequence) -> list[Fraction]:
    """The t1 coefficients of the delays inside the evolution period."""
    return [e.t1_factor for e in seq.events
            if isinstance(e, Delay) and e.t1_factor > 0]
