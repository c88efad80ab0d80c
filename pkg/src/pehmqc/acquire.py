"""2D experiment execution: t1 loop, phase cycling, quadrature, FID sampling.

``run_experiment`` propagates the proton equilibrium state through a
resolved pulse sequence for every (t1 increment, quadrature component,
phase-cycle step), samples the FID during acquisition under an idealized
decoupled Hamiltonian, and assembles the hypercomplex raw data as a cos
and a sin plane.

t1 increments are independent; with ``workers > 1`` they are computed in
a thread pool and written to disjoint rows, so results are identical to
the serial order.  The cycle-step reduction always runs in schedule order
within one worker.
"""
from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import hilbert, productop, sequences, spins


@dataclass(frozen=True)
class AcqParams:
    """Acquisition geometry: spectral widths, point counts, first t1 value."""
    sw2_hz: float
    n2: int
    sw1_hz: float
    n1: int
    t1_initial_s: float = 186e-6

    def __post_init__(self):
        if self.sw2_hz <= 0 or self.sw1_hz <= 0:
            raise ValueError("spectral widths must be positive")
        if self.n2 < 1 or self.n1 < 1:
            raise ValueError("point counts must be positive")
        if self.t1_initial_s < 0:
            raise ValueError("t1_initial must be nonnegative")

    @property
    def dwell2_s(self) -> float:
        return 1.0 / self.sw2_hz

    @property
    def dwell1_s(self) -> float:
        return 1.0 / self.sw1_hz

    def t1_values(self) -> np.ndarray:
        return self.t1_initial_s + np.arange(self.n1) / self.sw1_hz

    @property
    def t1_max_s(self) -> float:
        return self.t1_initial_s + (self.n1 - 1) / self.sw1_hz

    @property
    def acquisition_time_s(self) -> float:
        return self.n2 / self.sw2_hz


@dataclass
class RawData2D:
    cos_plane: np.ndarray  # complex, n1 x n2
    sin_plane: np.ndarray
    params: AcqParams
    provenance: dict

    def __post_init__(self):
        if self.cos_plane.shape != self.sin_plane.shape:
            raise ValueError("cos and sin planes must have the same shape")
        if self.cos_plane.shape != (self.params.n1, self.params.n2):
            raise ValueError("plane shape does not match acquisition params")


def propagate_events(system: spins.SpinSystem, events,
                     state: hilbert.DensityState | None = None):
    """Run resolved events up to (not including) acquisition.

    Returns the final state and the Acquire event (None if absent).
    Pulse and delay propagators come from the content-addressed
    eigendecomposition cache, so repeated resolutions are cheap.
    """
    if state is None:
        state = hilbert.equilibrium_state(system)
    acquire = None
    full_h = hilbert.hamiltonian(system)
    for event in events:
        if isinstance(event, sequences.ResolvedPulse):
            u = hilbert.pulse_propagator(system, event.isotope,
                                         event.flip_deg, event.phase_deg)
            state = hilbert.apply_unitary(state, u)
        elif isinstance(event, sequences.ResolvedDelay):
            state = hilbert.evolve(state, full_h, event.seconds)
        elif isinstance(event, sequences.Filter):
            allowed = hilbert.order_tuples(system, event.as_dict())
            state = hilbert.coherence_filter(state, allowed)
        elif isinstance(event, sequences.Purge):
            state = productop.purge_density(state, event.isotope)
        elif isinstance(event, sequences.Mark):
            continue
        elif isinstance(event, sequences.Acquire):
            acquire = event
            break
        else:
            raise TypeError(f"unexpected event {event!r}")
    return state, acquire


def run_fid(system: spins.SpinSystem, state: hilbert.DensityState,
            n2: int, dwell_s: float, detect_isotope: str = "1H",
            decouple=()) -> np.ndarray:
    """Sample n2 complex points of the FID starting from ``state``.

    The acquisition Hamiltonian omits couplings between the detect
    isotope's channel and decoupled channels (idealized broadband
    decoupling).  Sampling happens in the Hamiltonian eigenbasis, where
    free evolution is a per-element phase advance per dwell.
    """
    spec = hilbert.HamiltonianSpec(decoupled_isotopes=frozenset(decouple))
    h = hilbert.hamiltonian(system, spec)
    vals, vecs = hilbert.eig_cached(h)
    d = (hilbert.total_operator(system, detect_isotope, "x")
         + 1.0j * hilbert.total_operator(system, detect_isotope, "y"))
    rho_e = vecs.conj().T @ state.matrix @ vecs
    d_e = (vecs.conj().T @ d @ vecs).T  # transposed so s = sum(rho_e * d_e)
    step = np.exp(-1.0j * (vals[:, None] - vals[None, :]) * dwell_s)
    fid = np.empty(n2, dtype=complex)
    for k in range(n2):
        fid[k] = np.sum(rho_e * d_e)
        rho_e = rho_e * step
    return fid


def run_experiment(system: spins.SpinSystem, seq: sequences.PulseSequence,
                   params: AcqParams, workers: int = 1) -> RawData2D:
    """Execute the full 2D experiment and return hypercomplex raw data.

    Phase-cycle steps are summed with their receiver weights; there is no
    noise, so one pass through the cycle is equivalent to any number of
    accumulations.
    """
    problems = spins.validate(system)
    if problems:
        raise spins.SystemValidationError("; ".join(problems))
    sequences.validate_sequence(seq)
    t1s = params.t1_values()
    cos_plane = np.zeros((params.n1, params.n2), dtype=complex)
    sin_plane = np.zeros((params.n1, params.n2), dtype=complex)

    def one_row(i: int) -> None:
        t1 = float(t1s[i])
        for component, plane in (("cos", cos_plane), ("sin", sin_plane)):
            acc = np.zeros(params.n2, dtype=complex)
            for step in range(seq.phase_cycle.length):
                resolved = sequences.resolve(seq, t1, step, component, t1_index=i)
                state, acquire = propagate_events(system, resolved.events)
                if acquire is None:
                    raise ValueError("sequence has no acquire event")
                fid = run_fid(system, state, params.n2, params.dwell2_s,
                              acquire.isotope, acquire.decouple)
                acc += resolved.receiver_weight * fid
            plane[i, :] = acc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one_row, range(params.n1)))
    else:
        for i in range(params.n1):
            one_row(i)

    provenance = {
        "sequence": seq.name,
        "system": system.name,
        "system_sha256": hashlib.sha256(
            spins.serialize(system).encode()).hexdigest(),
        "cycle_length": seq.phase_cycle.length,
        "quad_mode": seq.quad.mode,
        "conventions": {
            "rotation": "exp(-i*theta*I_phi), Iz|alpha> = +1/2|alpha>",
            "detection": "Tr(rho * sum(Ix + i Iy))",
        },
    }
    return RawData2D(cos_plane, sin_plane, params, provenance)


# ---------------------------------------------------------------------------
# Raw data container on disk: metadata.json + cos.bin + sin.bin
# (little-endian complex128 = interleaved float64 re/im, row-major n1 x n2).

RAW_META = "metadata.json"
RAW_COS = "cos.bin"
RAW_SIN = "sin.bin"


def save_raw(directory, raw: RawData2D) -> None:
    path = Path(directory)
    path.mkdir(parents=True, exist_ok=True)
    meta = {
        "format": "pehmqc-raw-v1",
        "params": {
            "sw2_hz": raw.params.sw2_hz,
            "n2": raw.params.n2,
            "sw1_hz": raw.params.sw1_hz,
            "n1": raw.params.n1,
            "t1_initial_s": raw.params.t1_initial_s,
        },
        "provenance": raw.provenance,
    }
    (path / RAW_META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    (path / RAW_COS).write_bytes(np.ascontiguousarray(
        raw.cos_plane, dtype="<c16").tobytes())
    (path / RAW_SIN).write_bytes(np.ascontiguousarray(
        raw.sin_plane, dtype="<c16").tobytes())


def load_raw(directory) -> RawData2D:
    path = Path(directory)
    meta = json.loads((path / RAW_META).read_text())
    p = meta["params"]
    params = AcqParams(sw2_hz=p["sw2_hz"], n2=int(p["n2"]), sw1_hz=p["sw1_hz"],
                       n1=int(p["n1"]), t1_initial_s=p["t1_initial_s"])
    shape = (params.n1, params.n2)
    cos_plane = np.frombuffer((path / RAW_COS).read_bytes(),
                              dtype="<c16").reshape(shape).copy()
    sin_plane = np.frombuffer((path / RAW_SIN).read_bytes(),
                              dtype="<c16").reshape(shape).copy()
    return RawData2D(cos_plane, sin_plane, params, meta.get("provenance", {}))
