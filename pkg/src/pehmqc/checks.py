"""Closed-form verification of the pe-HMQC product-operator analysis.

The analysis of the perfect-echo t1 block starts from the canonical
heteronuclear multiple-quantum state created by the transfer delay: one
2*I_Hx*S_y term per 13C-coupled proton with amplitude sin(pi*J_HC*delta).
``check_pe_algebra`` injects that state at mark 'a', propagates it
analytically through the block, and compares the states at marks b, c
and d against the closed forms, including the J-freedom of point 'd'.

These checks require a system with exactly one 13C spin and weak
couplings, the regime the analysis is valid in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import productop as po
from .spins import SpinSystem


@dataclass
class CheckResult:
    passed: bool
    max_deviation: float
    lines: list = field(default_factory=list)

    def report(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        body = "\n".join(self.lines)
        return f"{body}\n{status} (max deviation {self.max_deviation:.3e})\n"


def _single_carbon(system: SpinSystem) -> int:
    carbons = system.spins_of("13C")
    if len(carbons) != 1:
        raise ValueError("closed-form check requires exactly one 13C spin")
    return carbons[0]


def mq_amplitudes(system: SpinSystem, delta_s: float) -> dict[str, float]:
    """Transfer amplitude sin(pi*J_HC*delta) per 13C-coupled proton."""
    c_idx = _single_carbon(system)
    c_id = system.spins[c_idx].id
    out = {}
    for idx in system.spins_of("1H"):
        h_id = system.spins[idx].id
        coupling = system.coupling_between(h_id, c_id)
        if coupling is not None and coupling.j_hz != 0.0:
            out[h_id] = math.sin(math.pi * coupling.j_hz * delta_s)
    if not out:
        raise ValueError("no 13C-coupled protons in system")
    return out


def ideal_mq_state(system: SpinSystem, delta_s: float) -> po.POState:
    """The canonical point-'a' state: sum of sin(pi*J*delta) * 2 I_Hx S_y."""
    c_idx = _single_carbon(system)
    n = system.n_spins
    state: po.POState = {}
    for h_id, amp in mq_amplitudes(system, delta_s).items():
        h_idx = system.index(h_id)
        term = tuple("x" if k == h_idx else ("y" if k == c_idx else "E")
                     for k in range(n))
        state[term] = amp
    return state


def f_factor(system: SpinSystem, delta_s: float) -> dict:
    """Remote-proton transfer factors and the trace-level amplitude ratio.

    The f factor itself is sin(pi * J_remote * delta); the exact ratio of
    the traced point-'a' magnitudes is sin(pi*J_remote*delta) /
    sin(pi*J_direct*delta), so ratio * sin(pi*J_direct*delta) recovers f
    independent of the passive-coupling factors common to both terms.
    """
    amps = mq_amplitudes(system, delta_s)
    direct_id = max(amps, key=lambda k: abs(amps[k]))
    out = {"direct": direct_id, "direct_amplitude": amps[direct_id], "remote": {}}
    for h_id, amp in amps.items():
        if h_id != direct_id:
            out["remote"][h_id] = {
                "f": amp,
                "ratio_vs_direct": amp / amps[direct_id],
            }
    return out


def traced_mq_magnitudes(state: po.POState, system: SpinSystem) -> dict[str, float]:
    """Per-proton heteronuclear MQ magnitude of a traced state.

    The magnitude over the transverse letter pairs (x/y on the proton,
    x/y on the carbon, all other spins E) is invariant under the constant
    phases that offsets accumulate during the transfer delay.
    """
    c_idx = _single_carbon(system)
    out: dict[str, float] = {}
    for h_idx in system.spins_of("1H"):
        total = 0.0
        for term, coeff in state.items():
            if term[h_idx] in ("x", "y") and term[c_idx] in ("x", "y") and all(
                    letter == "E" for k, letter in enumerate(term)
                    if k not in (h_idx, c_idx)):
                total += coeff * coeff
        out[system.spins[h_idx].id] = math.sqrt(total)
    return out


def _pair_term(n: int, h_idx: int, c_idx: int, h_letter: str, c_letter: str,
               partner_idx: int | None = None) -> tuple:
    letters = ["E"] * n
    letters[h_idx] = h_letter
    letters[c_idx] = c_letter
    if partner_idx is not None:
        letters[partner_idx] = "z"
    return tuple(letters)


def expected_marks_ch2(system: SpinSystem, delta_s: float, t1_s: float,
                       n_pe: int = 1) -> dict:
    """Closed forms at marks a-d for a two-proton, equal-J methylene system.

    Point b carries the in-phase/antiphase mixture [A] evaluated at the
    centre of the first block, t1/(2n); the central 90 flips the
    antiphase signs ([B], point c); point d is the J-free cos(Omega_S t1)
    state with its sin quadrature partner on the carbon x component.
    """
    c_idx = _single_carbon(system)
    protons = list(system.spins_of("1H"))
    if len(protons) != 2:
        raise ValueError("ch2 closed forms need exactly two protons")
    h1, h2 = protons
    n = system.n_spins
    amps = mq_amplitudes(system, delta_s)
    s1 = amps[system.spins[h1].id]
    s2 = amps[system.spins[h2].id]
    if abs(s1 - s2) > 1e-12:
        raise ValueError("ch2 closed forms assume equal one-bond couplings")
    hh = system.coupling_between(system.spins[h1].id, system.spins[h2].id)
    j_hh = hh.j_hz if hh else 0.0
    omega = 2.0 * math.pi * system.spins[c_idx].offset_hz
    t_half = t1_s / (2 * n_pe)  # centre of the first perfect-echo block
    cj, sj = math.cos(math.pi * j_hh * t_half), math.sin(math.pi * j_hh * t_half)
    co, so = math.cos(omega * t_half), math.sin(omega * t_half)

    marks = {}
    marks["a"] = {
        _pair_term(n, h1, c_idx, "x", "y"): s1,
        _pair_term(n, h2, c_idx, "x", "y"): s2,
    }
    b = {}
    for h, partner in ((h1, h2), (h2, h1)):
        amp = amps[system.spins[h].id]
        b[_pair_term(n, h, c_idx, "x", "y")] = amp * co * cj
        b[_pair_term(n, h, c_idx, "x", "x")] = -amp * so * cj
        b[_pair_term(n, h, c_idx, "y", "y", partner)] = amp * co * sj
        b[_pair_term(n, h, c_idx, "y", "x", partner)] = -amp * so * sj
    marks["b"] = b
    # the central 90(x) flips exactly the antiphase (z-bearing) terms
    marks["c"] = {t: (-v if "z" in t else v) for t, v in b.items()}
    marks["d"] = {
        _pair_term(n, h1, c_idx, "x", "y"): s1 * math.cos(omega * t1_s),
        _pair_term(n, h2, c_idx, "x", "y"): s2 * math.cos(omega * t1_s),
        _pair_term(n, h1, c_idx, "x", "x"): -s1 * math.sin(omega * t1_s),
        _pair_term(n, h2, c_idx, "x", "x"): -s2 * math.sin(omega * t1_s),
    }
    return marks


def _state_deviation(actual: po.POState, expected: dict) -> float:
    keys = set(actual) | set(expected)
    if not keys:
        return 0.0
    return max(abs(actual.get(k, 0.0) - expected.get(k, 0.0)) for k in keys)


def fit_t1_modulation(seq, system: SpinSystem, mark: str, term: tuple,
                      t1_values, initial: po.POState,
                      j_hz: float) -> dict:
    """Least-squares decomposition of a term's t1 dependence.

    Basis: {1, cos(Om t1), sin(Om t1)} x {1, cos(pi J t1), sin(pi J t1)}
    with Om the carbon offset.  The returned J-modulated weight and the
    fit residual quantify homonuclear J content.
    """
    c_idx = _single_carbon(system)
    omega = 2.0 * math.pi * system.spins[c_idx].offset_hz
    t1_values = np.asarray(t1_values, dtype=float)
    y = []
    for t1 in t1_values:
        tr = po.po_trace(seq, system, float(t1), [mark], initial=initial,
                         start_after_mark="a")
        y.append(tr[mark].get(term, 0.0))
    y = np.array(y)
    carriers = [np.ones_like(t1_values), np.cos(omega * t1_values),
                np.sin(omega * t1_values)]
    j_mods = [np.ones_like(t1_values), np.cos(math.pi * j_hz * t1_values),
              np.sin(math.pi * j_hz * t1_values)]
    cols, labels = [], []
    for ci, cname in zip(carriers, ("1", "cosOm", "sinOm")):
        for mj, mname in zip(j_mods, ("1", "cosJ", "sinJ")):
            cols.append(ci * mj)
            labels.append(f"{cname}*{mname}")
    basis = np.stack(cols, axis=1)
    w, *_ = np.linalg.lstsq(basis, y, rcond=None)
    resid = float(np.linalg.norm(y - basis @ w))
    weights = dict(zip(labels, (float(v) for v in w)))
    j_weight = max(abs(v) for k, v in weights.items() if k.endswith(("cosJ", "sinJ")))
    return {"weights": weights, "residual": resid, "j_weight": j_weight}


def check_pe_algebra(seq, system: SpinSystem, delta_s: float,
                     t1_values=None, tol: float = 1e-9) -> CheckResult:
    """Verify the perfect-echo closed forms at marks a-d.

    Injects the canonical point-'a' state and requires, at every sampled
    t1: exact match of marks b/c/d for methylene-type systems, and for
    any single-carbon system the J-freedom of point 'd' (fit of the
    direct-term t1 dependence contains no homonuclear J modulation).
    """
    if t1_values is None:
        # incommensurate spacing decorrelates the offset and J modulation
        # columns of the fit basis; 24 samples overdetermine its 9 columns
        t1_values = [0.369 * k * (math.sqrt(5) - 1) / 2 % 0.369
                     for k in range(1, 25)]
    initial = ideal_mq_state(system, delta_s)
    lines = []
    worst = 0.0

    protons = system.spins_of("1H")
    amps = mq_amplitudes(system, delta_s)
    ch2_like = len(protons) == 2 and len(amps) == 2 and len(set(
        round(v, 12) for v in amps.values())) == 1

    if ch2_like:
        n_pe = int(getattr(seq, "params", {}).get("n_pe", 1))
        for t1 in t1_values:
            trace = po.po_trace(seq, system, float(t1), ["b", "c", "d"],
                                initial=initial, start_after_mark="a")
            expected = expected_marks_ch2(system, delta_s, float(t1), n_pe)
            for mark in ("b", "c", "d"):
                dev = _state_deviation(trace[mark], expected[mark])
                worst = max(worst, dev)
        lines.append(f"marks b/c/d closed forms over {len(t1_values)} t1 values: "
                     f"max deviation {worst:.3e}")

    # J-freedom of point 'd' for the direct proton term(s)
    c_idx = _single_carbon(system)
    hh_j = max((c.j_hz for c in system.couplings
                if system.spin(c.a).isotope == "1H"
                and system.spin(c.b).isotope == "1H"), default=0.0)
    for h_id in amps:
        h_idx = system.index(h_id)
        term = _pair_term(system.n_spins, h_idx, c_idx, "x", "y")
        fit = fit_t1_modulation(seq, system, "d", term, t1_values, initial, hh_j)
        line = (f"point-'d' {h_id}: cosOm weight {fit['weights']['cosOm*1']:+.6f}, "
                f"J-modulated content {fit['j_weight']:.3e}, "
                f"fit residual {fit['residual']:.3e}")
        if ch2_like:
            # full refocusing: no J modulation and amplitude sin(pi J delta)
            dev = abs(fit["weights"]["cosOm*1"] - amps[h_id])
            worst = max(worst, dev, fit["j_weight"], fit["residual"])
            line += f", deviation from sin(pi J delta)={amps[h_id]:.6f}: {dev:.3e}"
        lines.append(line)
    return CheckResult(worst <= tol, worst, lines)
