"""Dense Hilbert-space engine for spin-1/2 systems.

Exact numerical propagation of density matrices: Kronecker-embedded spin
operators, weak/isotropic coupling Hamiltonians, ideal hard pulses, free
evolution through cached eigendecompositions, coherence-order filters and
quadrature detection.

Conventions (fixed here, relied on everywhere else):

* basis order follows document order of spins, first spin slowest index;
  |0> per spin is the +1/2 eigenstate of Iz;
* rotations are exp(-i * angle * I_phi) with I_phi = Ix cos(phi) + Iy sin(phi),
  so a 90(x) pulse takes Iz to -Iy;
* detection returns Tr(rho * sum(Ix + i*Iy)) over the detected isotope, so
  a spin at Ix with offset +nu yields the FID 0.5*exp(+i*2*pi*nu*t).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spins import ISOTROPIC, WEAK, Coupling, SpinSystem

_PAULI_HALF = {
    "x": 0.5 * np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": 0.5 * np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": 0.5 * np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
    "plus": np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex),
    "minus": np.array([[0.0, 0.0], [1.0, 0.0]], dtype=complex),
}

TWO_PI = 2.0 * math.pi


@dataclass
class DensityState:
    """Instantaneous spin state: complex 2^N x 2^N matrix plus its system."""
    matrix: np.ndarray
    system: SpinSystem

    def copy(self) -> "DensityState":
        return DensityState(self.matrix.copy(), self.system)

    def expect(self, op: np.ndarray) -> complex:
        return complex(np.trace(self.matrix @ op))


@dataclass(frozen=True)
class HamiltonianSpec:
    """Which couplings are active and which isotopes are decoupled.

    ``active_couplings`` of None means all couplings of the system.
    Couplings that cross an isotope boundary into ``decoupled_isotopes``
    are omitted (idealized broadband decoupling).
    """
    active_couplings: tuple[Coupling, ...] | None = None
    decoupled_isotopes: frozenset = field(default_factory=frozenset)


def embed_operator(system: SpinSystem, spin_id: str, axis: str) -> np.ndarray:
    """N-spin Kronecker embedding of a single-spin operator."""
    idx = system.index(spin_id)
    try:
        small = _PAULI_HALF[axis]
    except KeyError:
        raise ValueError(f"unknown axis {axis!r}") from None
    op = np.array([[1.0 + 0.0j]])
    for k in range(system.n_spins):
        op = np.kron(op, small if k == idx else np.eye(2, dtype=complex))
    return op


def total_operator(system: SpinSystem, isotope: str, axis: str) -> np.ndarray:
    """Sum of a single-spin operator over every spin of an isotope channel.

    An empty channel gives the zero operator: pulsing an isotope that is
    absent from the system is the identity, which lets heteronuclear
    sequences run unchanged on homonuclear systems.
    """
    op = np.zeros((system.dim, system.dim), dtype=complex)
    for s in system.spins:
        if s.isotope == isotope:
            op += embed_operator(system, s.id, axis)
    return op


def hamiltonian(system: SpinSystem, spec: HamiltonianSpec = HamiltonianSpec()) -> np.ndarray:
    """Rotating-frame Hamiltonian in angular units (rad/s).

    H = 2*pi * [ sum_i nu_i Iz_i + sum_pairs J_ij * (Iz_i Iz_j  or  I_i.I_j) ]
    with the isotropic form for couplings marked isotropic.
    """
    h = np.zeros((system.dim, system.dim), dtype=complex)
    for s in system.spins:
        if s.offset_hz != 0.0:
            h += TWO_PI * s.offset_hz * embed_operator(system, s.id, "z")
    couplings = system.couplings if spec.active_couplings is None else spec.active_couplings
    for c in couplings:
        iso_a = system.spin(c.a).isotope
        iso_b = system.spin(c.b).isotope
        if iso_a != iso_b and (iso_a in spec.decoupled_isotopes
                               or iso_b in spec.decoupled_isotopes):
            continue
        if c.model == WEAK:
            h += TWO_PI * c.j_hz * (embed_operator(system, c.a, "z")
                                    @ embed_operator(system, c.b, "z"))
        elif c.model == ISOTROPIC:
            for ax in ("x", "y", "z"):
                h += TWO_PI * c.j_hz * (embed_operator(system, c.a, ax)
                                        @ embed_operator(system, c.b, ax))
        else:
            raise ValueError(f"unknown coupling model {c.model!r}")
    return h


def equilibrium_state(system: SpinSystem) -> DensityState:
    """Proton polarization: rho0 = sum of Iz over 1H spins.

    13C equilibrium polarization is omitted; the phi1 = x,-x cycle would
    cancel its contribution anyway.
    """
    rho = np.zeros((system.dim, system.dim), dtype=complex)
    for s in system.spins:
        if s.isotope == "1H":
            rho += embed_operator(system, s.id, "z")
    return DensityState(rho, system)


# Eigendecompositions are reused heavily: the t2 sampling loop and every
# repeated delay hit the same Hamiltonian thousands of times.
_EIG_CACHE: dict[bytes, tuple[np.ndarray, np.ndarray]] = {}
_EIG_CACHE_MAX = 128


def eig_cached(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a Hermitian operator, cached by content."""
    key = h.tobytes()
    hit = _EIG_CACHE.get(key)
    if hit is None:
        if len(_EIG_CACHE) >= _EIG_CACHE_MAX:
            _EIG_CACHE.clear()
        vals, vecs = np.linalg.eigh(h)
        hit = (vals, vecs)
        _EIG_CACHE[key] = hit
    return hit


def propagator(h: np.ndarray, duration_s: float) -> np.ndarray:
    """U = exp(-i H t) through the cached eigendecomposition of H."""
    vals, vecs = eig_cached(h)
    phases = np.exp(-1.0j * vals * duration_s)
    return (vecs * phases) @ vecs.conj().T


def pulse_propagator(system: SpinSystem, isotope: str, flip_deg: float,
                     phase_deg: float) -> np.ndarray:
    """Ideal zero-duration hard pulse on one isotope channel."""
    if not (math.isfinite(flip_deg) and math.isfinite(phase_deg)):
        raise ValueError("pulse flip and phase must be finite")
    phi = math.radians(phase_deg)
    axis_op = (math.cos(phi) * total_operator(system, isotope, "x")
               + math.sin(phi) * total_operator(system, isotope, "y"))
    return propagator(axis_op, math.radians(flip_deg))


def apply_unitary(state: DensityState, u: np.ndarray) -> DensityState:
    return DensityState(u @ state.matrix @ u.conj().T, state.system)


def evolve(state: DensityState, h: np.ndarray, duration_s: float) -> DensityState:
    """Free evolution rho -> U rho U^dagger with U = exp(-i H t)."""
    if duration_s < 0:
        raise ValueError("evolution duration must be nonnegative")
    if duration_s == 0.0:
        return state.copy()
    return apply_unitary(state, propagator(h, duration_s))


def _basis_mz(system: SpinSystem) -> np.ndarray:
    """Per-basis-state magnetic quantum number of each spin, shape (dim, N)."""
    n = system.n_spins
    idx = np.arange(system.dim)
    bits = (idx[:, None] >> (n - 1 - np.arange(n))) & 1
    return 0.5 - bits.astype(float)  # bit 0 -> +1/2


def coherence_orders(system: SpinSystem) -> dict[str, np.ndarray]:
    """Per-isotope coherence order of every matrix element.

    order[iso][i, j] = sum of m over that isotope's spins in ket |i>
    minus the same sum in bra <j|.
    """
    mz = _basis_mz(system)
    orders = {}
    for iso in system.isotope_labels():
        cols = list(system.spins_of(iso))
        tot = mz[:, cols].sum(axis=1)
        orders[iso] = np.rint(tot[:, None] - tot[None, :]).astype(int)
    return orders


def order_tuples(system: SpinSystem, constraints: dict[str, tuple[int, ...]]) -> frozenset:
    """Expand per-isotope order sets into explicit order tuples.

    Isotopes absent from ``constraints`` are unconstrained (all orders the
    channel can reach).  Tuple positions follow ``system.isotope_labels()``.
    A constraint on an isotope the system does not contain is satisfiable
    only by order zero; demanding any other order yields the empty set,
    i.e. the filter blocks everything (no such coherence can exist).
    """
    for iso, orders in constraints.items():
        if iso not in system.isotope_labels() and 0 not in tuple(orders):
            return frozenset()
    axes = []
    for iso in system.isotope_labels():
        if iso in constraints:
            axes.append(tuple(int(o) for o in constraints[iso]))
        else:
            n = len(system.spins_of(iso))
            axes.append(tuple(range(-n, n + 1)))
    tuples = [()]
    for axis in axes:
        tuples = [t + (o,) for t in tuples for o in axis]
    return frozenset(tuples)


def coherence_filter(state: DensityState, allowed) -> DensityState:
    """Zero every matrix element whose per-isotope coherence orders are not allowed.

    ``allowed`` is an iterable of tuples, one integer order per isotope in
    ``system.isotope_labels()`` order.  This is the idealization of a
    pulsed-field-gradient pathway selection: allowed elements pass
    untouched, everything else is projected out.
    """
    system = state.system
    orders = coherence_orders(system)
    isos = system.isotope_labels()
    mask = np.zeros((system.dim, system.dim), dtype=bool)
    for tup in allowed:
        if len(tup) != len(isos):
            raise ValueError(
                f"order tuple {tup!r} does not match isotopes {isos!r}")
        sel = np.ones((system.dim, system.dim), dtype=bool)
        for iso, want in zip(isos, tup):
            sel &= orders[iso] == int(want)
        mask |= sel
    return DensityState(np.where(mask, state.matrix, 0.0), system)


def detect(state: DensityState, isotope: str) -> complex:
    """Quadrature observable Tr(rho * sum(Ix + i*Iy)) over one channel."""
    d = (total_operator(state.system, isotope, "x")
         + 1.0j * total_operator(state.system, isotope, "y"))
    return complex(np.trace(state.matrix @ d))
