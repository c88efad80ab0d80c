"""Analytic product-operator propagation under weak-coupling rules.

States are real-coefficient expansions over the Cartesian product-operator
basis.  A term is a tuple of per-spin letters from {E, x, y, z}; a term
with k non-E letters carries the conventional 2^(k-1) prefactor
implicitly, so ('x', 'E', 'y') on a 3-spin system denotes 2*I1x*I3y.

Evolution is semi-analytic: coefficients are numeric reals at a resolved
t1 rather than symbolic trig expressions.  The engine accepts only weak
couplings; the closed-form rules it applies are not valid in the strong
coupling regime.
"""
from __future__ import annotations

import math
from itertools import product

import numpy as np

from . import hilbert
from .spins import ISOTROPIC, SpinSystem

LETTERS = ("E", "x", "y", "z")
COEFF_EPS = 1e-14


class UnsupportedCouplingError(ValueError):
    """Raised when a system contains couplings the analytic rules cannot handle."""


POTerm = tuple  # tuple of per-spin letters, length = n_spins
POState = dict  # POTerm -> float coefficient


def _prune(state: POState) -> POState:
    return {t: c for t, c in state.items() if abs(c) > COEFF_EPS}


def _add(state: POState, term: POTerm, coeff: float) -> None:
    c = state.get(term, 0.0) + coeff
    if abs(c) > COEFF_EPS:
        state[term] = c
    elif term in state:
        del state[term]


# Term matrices depend only on the letter tuple; caching them makes the
# basis projections in po_from_density cheap.  Capped to small systems
# where the full 4^N basis is enumerable.
_TERM_CACHE: dict[POTerm, np.ndarray] = {}


def term_matrix(system: SpinSystem, term: POTerm) -> np.ndarray:
    """Dense matrix of a product-operator term, prefactor included."""
    cached = _TERM_CACHE.get(term)
    if cached is not None:
        return cached
    k = sum(1 for letter in term if letter != "E")
    op = np.array([[1.0 + 0.0j]])
    for letter in term:
        small = np.eye(2, dtype=complex) if letter == "E" else hilbert._PAULI_HALF[letter]
        op = np.kron(op, small)
    if k > 1:
        op = op * float(2 ** (k - 1))
    if len(term) <= 5 and len(_TERM_CACHE) < 8192:
        _TERM_CACHE[term] = op
    return op


def all_terms(n_spins: int):
    return product(LETTERS, repeat=n_spins)


def po_from_density(state: hilbert.DensityState) -> POState:
    """Project a density matrix onto the product-operator basis.

    Coefficients are c_T = Tr(rho T) / Tr(T T); the basis is orthogonal so
    po_to_density inverts this exactly.
    """
    system = state.system
    out: POState = {}
    for term in all_terms(system.n_spins):
        t = term_matrix(system, term)
        norm = np.trace(t @ t).real
        coeff = np.trace(state.matrix @ t) / norm
        if abs(coeff.imag) > 1e-9:
            raise ValueError(
                f"density matrix has non-real coefficient on {term}: {coeff}")
        _add(out, term, coeff.real)
    return out


def po_to_density(state: POState, system: SpinSystem) -> hilbert.DensityState:
    rho = np.zeros((system.dim, system.dim), dtype=complex)
    for term, coeff in state.items():
        rho += coeff * term_matrix(system, term)
    return hilbert.DensityState(rho, system)


def _rotation_matrix(flip_deg: float, phase_deg: float) -> np.ndarray:
    """SO(3) action of exp(-i*flip*I_phi) on the (x, y, z) operator components.

    Rodrigues rotation about the in-plane axis (cos phi, sin phi, 0); the
    sign convention reproduces 90(x): z -> -y, matching the Hilbert engine.
    """
    theta = math.radians(flip_deg)
    phi = math.radians(phase_deg)
    n = np.array([math.cos(phi), math.sin(phi), 0.0])
    c, s = math.cos(theta), math.sin(theta)
    cross = np.array([
        [0.0, -n[2], n[1]],
        [n[2], 0.0, -n[0]],
        [-n[1], n[0], 0.0],
    ])
    return c * np.eye(3) + s * cross + (1.0 - c) * np.outer(n, n)


_AXIS_INDEX = {"x": 0, "y": 1, "z": 2}
_AXIS_BY_INDEX = ("x", "y", "z")


def po_pulse(state: POState, system: SpinSystem, isotope: str,
             flip_deg: float, phase_deg: float) -> POState:
    """Ideal hard pulse: rotate the letters of every spin on one channel."""
    targets = system.spins_of(isotope)
    if not targets:
        return dict(state)  # pulsing an absent channel is the identity
    rot = _rotation_matrix(flip_deg, phase_deg)
    current = dict(state)
    for spin_idx in targets:
        nxt: POState = {}
        for term, coeff in current.items():
            letter = term[spin_idx]
            if letter == "E":
                _add(nxt, term, coeff)
                continue
            col = rot[:, _AXIS_INDEX[letter]]
            for row in range(3):
                if abs(col[row]) > COEFF_EPS:
                    new = term[:spin_idx] + (_AXIS_BY_INDEX[row],) + term[spin_idx + 1:]
                    _add(nxt, new, coeff * col[row])
        current = nxt
    return _prune(current)


def _offset_step(state: POState, spin_idx: int, theta: float) -> POState:
    """z-rotation of one spin's letter by theta (chemical-shift evolution)."""
    c, s = math.cos(theta), math.sin(theta)
    nxt: POState = {}
    for term, coeff in state.items():
        letter = term[spin_idx]
        if letter in ("E", "z"):
            _add(nxt, term, coeff)
        elif letter == "x":
            _add(nxt, term, coeff * c)
            _add(nxt, term[:spin_idx] + ("y",) + term[spin_idx + 1:], coeff * s)
        else:  # y
            _add(nxt, term, coeff * c)
            _add(nxt, term[:spin_idx] + ("x",) + term[spin_idx + 1:], -coeff * s)
    return nxt


# Weak-coupling J step on a term: active iff exactly one spin of the pair
# holds a transverse letter while the other holds E or z.  The transverse
# letter advances x -> y -> -x, the partner toggles E <-> z; the implicit
# 2^(k-1) prefactors absorb the factors of two.
_J_FLIP = {"x": ("y", 1.0), "y": ("x", -1.0)}
_J_TOGGLE = {"E": "z", "z": "E"}


def _j_step(state: POState, i: int, j: int, theta: float) -> POState:
    c, s = math.cos(theta), math.sin(theta)
    nxt: POState = {}
    for term, coeff in state.items():
        li, lj = term[i], term[j]
        ti = li in ("x", "y")
        tj = lj in ("x", "y")
        if ti == tj:  # both transverse (MQ) or neither: untouched
            _add(nxt, term, coeff)
            continue
        if ti:
            active, passive, la, lp = i, j, li, lj
        else:
            active, passive, la, lp = j, i, lj, li
        new_letter, sign = _J_FLIP[la]
        _add(nxt, term, coeff * c)
        new = list(term)
        new[active] = new_letter
        new[passive] = _J_TOGGLE[lp]
        _add(nxt, tuple(new), coeff * s * sign)
    return nxt


def po_evolve(state: POState, system: SpinSystem, duration_s: float) -> POState:
    """Free evolution under offsets and weak scalar couplings.

    All offset and weak-coupling terms commute, so the per-spin and
    per-pair steps may be applied in any fixed order with exact results.
    """
    for c in system.couplings:
        if c.model == ISOTROPIC:
            raise UnsupportedCouplingError(
                f"coupling {c.a}-{c.b} is isotropic; the product-operator "
                "rules require weak couplings")
    if duration_s < 0:
        raise ValueError("evolution duration must be nonnegative")
    if duration_s == 0.0:
        return dict(state)
    current = dict(state)
    for idx, s in enumerate(system.spins):
        if s.offset_hz != 0.0:
            current = _offset_step(current, idx, 2.0 * math.pi * s.offset_hz * duration_s)
    for c in system.couplings:
        if c.j_hz != 0.0:
            current = _j_step(current, system.index(c.a), system.index(c.b),
                              math.pi * c.j_hz * duration_s)
    return _prune(current)


def po_filter(state: POState, system: SpinSystem, allowed) -> POState:
    """Coherence-order filter, applied exactly via the Hilbert representation."""
    rho = po_to_density(state, system)
    return po_from_density(hilbert.coherence_filter(rho, allowed))


def po_purge(state: POState, system: SpinSystem, isotope: str) -> POState:
    """Idealized purge: keep in-phase single-quantum terms of one channel.

    A term survives if it has no transverse letter at all (longitudinal
    content is invisible and inert during acquisition), or if its single
    non-E letter is x or y on a spin of the given isotope.  Antiphase and
    multiple-quantum terms are projected out, the idealization of the
    purge gradient applied just before acquisition.
    """
    targets = set(system.spins_of(isotope))
    out: POState = {}
    for term, coeff in state.items():
        non_e = [(k, letter) for k, letter in enumerate(term) if letter != "E"]
        transverse = [(k, letter) for k, letter in non_e if letter in ("x", "y")]
        if not transverse:
            out[term] = coeff
        elif len(non_e) == 1 and len(transverse) == 1 and transverse[0][0] in targets:
            out[term] = coeff
    return out


def purge_density(state: hilbert.DensityState, isotope: str) -> hilbert.DensityState:
    """Density-matrix form of po_purge (exact via the operator basis)."""
    po = po_from_density(state)
    return po_to_density(po_purge(po, state.system, isotope), state.system)


def po_equilibrium(system: SpinSystem) -> POState:
    state: POState = {}
    for idx, s in enumerate(system.spins):
        if s.isotope == "1H":
            term = tuple("z" if k == idx else "E" for k in range(system.n_spins))
            _add(state, term, 1.0)
    return state


def po_trace(sequence, system: SpinSystem, t1_s: float, marks,
             cycle_step: int = 0, quad_component: str = "cos",
             initial: POState | None = None,
             start_after_mark: str | None = None) -> dict[str, POState]:
    """Product-operator state immediately after each marked event.

    The sequence is resolved at the given t1 (phase-cycle step 0 and the
    cosine quadrature component by default) and propagated analytically.
    ``initial`` overrides the proton equilibrium state; with
    ``start_after_mark`` the walk begins just after that mark, which lets
    a caller inject a reference state at a named time point and follow
    the remaining events.  Propagation stops at the acquire event.
    """
    from . import sequences

    resolved = sequences.resolve(sequence, t1_s, cycle_step, quad_component)
    state = dict(initial) if initial is not None else po_equilibrium(system)
    wanted = list(marks)
    out: dict[str, POState] = {}
    active = start_after_mark is None
    for event in resolved.events:
        if isinstance(event, sequences.Mark):
            if not active and event.label == start_after_mark:
                active = True
                continue
            if active and event.label in wanted:
                out[event.label] = dict(state)
            continue
        if not active:
            continue
        if isinstance(event, sequences.ResolvedPulse):
            state = po_pulse(state, system, event.isotope,
                             event.flip_deg, event.phase_deg)
        elif isinstance(event, sequences.ResolvedDelay):
            state = po_evolve(state, system, event.seconds)
        elif isinstance(event, sequences.Filter):
            allowed = hilbert.order_tuples(system, event.as_dict())
            state = po_filter(state, system, allowed)
        elif isinstance(event, sequences.Purge):
            state = po_purge(state, system, event.isotope)
        elif isinstance(event, sequences.Acquire):
            break
        else:
            raise TypeError(f"unexpected event {event!r}")
    missing = [m for m in wanted if m not in out]
    if missing:
        raise ValueError(f"marks not found in sequence: {missing}")
    return out


def format_term(system: SpinSystem, term: POTerm) -> str:
    """Render a term like '2 H1x C1y' using spin ids in document order."""
    parts = [f"{system.spins[k].id}{letter}"
             for k, letter in enumerate(term) if letter != "E"]
    if not parts:
        return "E"
    k = len(parts)
    prefix = f"{2 ** (k - 1)} " if k > 1 else ""
    return prefix + " ".join(parts)


def format_trace(system: SpinSystem, trace: dict[str, POState],
                 min_coeff: float = 1e-9) -> str:
    """Plain-text table of a mark trace: one row per (mark, term, coefficient)."""
    lines = [f"{'mark':<6} {'term':<24} coefficient"]
    for mark, state in trace.items():
        terms = sorted(state.items(),
                       key=lambda kv: (-abs(kv[1]), kv[0]))
        shown = [(t, c) for t, c in terms if abs(c) >= min_coeff]
        if not shown:
            lines.append(f"{mark:<6} {'(none)':<24} 0")
        for t, c in shown:
            lines.append(f"{mark:<6} {format_term(system, t):<24} {c:+.9f}")
    return "\n".join(lines) + "\n"
