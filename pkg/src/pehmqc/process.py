"""Hypercomplex 2D processing and quantitative spectrum analysis.

Pipeline: apodize and zero-fill both time dimensions, complex DFT along
t2 of the cos and sin planes, explicit States recombination (real parts
of the two planes form the t1 complex pair), DFT along t1, then phasing.

Axis conventions: both axes are Hz offsets centered at 0, mathematical
(ascending) ordering.  The F2 transform uses the e^(-i 2 pi f t) kernel,
so a detected +nu signal appears at +nu.  The F1 transform uses the
conjugate kernel: with the quadrature scheme of the acquisition module
(sine component = +90 degrees on the multiple-quantum preparation pulse)
this places the indirect-dimension frequency at +nu as well.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .acquire import RawData2D


@dataclass
class Spectrum2D:
    values: np.ndarray          # complex, n1 x n2 after transforms
    f1_axis: np.ndarray         # Hz per F1 bin (ascending, centered on 0)
    f2_axis: np.ndarray
    log: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    @property
    def f1_bin_hz(self) -> float:
        return float(self.f1_axis[1] - self.f1_axis[0])

    @property
    def f2_bin_hz(self) -> float:
        return float(self.f2_axis[1] - self.f2_axis[0])


@dataclass
class Trace1D:
    axis_hz: np.ndarray
    values: np.ndarray          # phased real part
    meta: dict = field(default_factory=dict)


@dataclass
class Peak:
    position_hz: float
    height: float
    fwhm_hz: float


def sine_square_window(n: int, shift: float = 0.0) -> np.ndarray:
    """w(k) = sin^2(pi (k + shift*n) / n); shift 0 starts at zero."""
    k = np.arange(n)
    return np.sin(np.pi * (k + shift * n) / n) ** 2


def apodize(data: np.ndarray, axis: int, shift: float = 0.0) -> np.ndarray:
    n = data.shape[axis]
    w = sine_square_window(n, shift)
    shape = [1, 1]
    shape[axis] = n
    return data * w.reshape(shape)


def zero_fill(data: np.ndarray, axis: int, n_total: int) -> np.ndarray:
    n = data.shape[axis]
    if n_total < n:
        raise ValueError(f"zero fill target {n_total} smaller than data ({n})")
    if n_total == n:
        return data.copy()
    pad = [(0, 0), (0, 0)]
    pad[axis] = (0, n_total - n)
    return np.pad(data, pad)


def _axis(n: int, sw: float) -> np.ndarray:
    return np.fft.fftshift(np.fft.fftfreq(n, d=1.0 / sw))


def _precombine_phase(cos_f2: np.ndarray) -> float:
    """F2 zero-order phase estimated on the most intense t1 row.

    The States combine keeps only the real part of the F2 spectra, so
    the direct dimension must be absorptive before recombination; this
    is the standard practice of phasing F2 on an early increment.  The
    cube of the real part rewards tall positive absorptive peaks.
    """
    row = cos_f2[int(np.argmax(np.sum(np.abs(cos_f2) ** 2, axis=1)))]
    best = 0.0
    for step, span in ((2.0, 180.0), (0.1, 2.0)):
        candidates = np.arange(best - span, best + span + step / 2, step)
        scores = [float(np.sum((row * np.exp(1.0j * math.radians(c))).real ** 3))
                  for c in candidates]
        best = float(candidates[int(np.argmax(scores))])
    return best


def transform_2d(raw: RawData2D, zf1: int | None = None, zf2: int | None = None,
                 window: tuple[str, float] | None = ("sine2", 0.0),
                 f2_phase: str | tuple[float, float] = "auto") -> Spectrum2D:
    """Raw hypercomplex planes to a complex 2D spectrum.

    ``window`` is (name, shift) with 'sine2' the only supported name, or
    None for no apodization.  ``zf1``/``zf2`` give total points after
    zero filling (defaults: no zero fill).  ``f2_phase`` is applied to
    both planes before the hypercomplex combine ('auto' estimates the
    zero order on the strongest t1 row, or pass (p0, p1) degrees, or
    'none'); residual phasing is available afterwards via autophase.
    """
    p = raw.params
    log: list = []
    cos_t = np.asarray(raw.cos_plane, dtype=complex)
    sin_t = np.asarray(raw.sin_plane, dtype=complex)
    if cos_t.shape != (p.n1, p.n2):
        raise ValueError("raw plane shape mismatch")

    if window is not None:
        name, shift = window
        if name != "sine2":
            raise ValueError(f"unknown window {name!r}")
        cos_t = apodize(cos_t, 1, shift)
        sin_t = apodize(sin_t, 1, shift)
        log.append(f"window t2: sine2 shift={shift:g} (w(0)={math.sin(math.pi*shift)**2:g})")
    n2_total = int(zf2) if zf2 else p.n2
    cos_t = zero_fill(cos_t, 1, n2_total)
    sin_t = zero_fill(sin_t, 1, n2_total)
    log.append(f"zero fill t2: {p.n2} -> {n2_total} (bin {p.sw2_hz / n2_total:.4f} Hz)")

    cos_f2 = np.fft.fftshift(np.fft.fft(cos_t, axis=1), axes=1)
    sin_f2 = np.fft.fftshift(np.fft.fft(sin_t, axis=1), axes=1)
    log.append("F2 transform: complex DFT, kernel exp(-i 2 pi f t)")

    if f2_phase == "auto":
        p0_f2, p1_f2 = _precombine_phase(cos_f2), 0.0
    elif f2_phase == "none" or f2_phase is None:
        p0_f2, p1_f2 = 0.0, 0.0
    else:
        p0_f2, p1_f2 = float(f2_phase[0]), float(f2_phase[1])
    if p0_f2 or p1_f2:
        axis2 = _axis(n2_total, p.sw2_hz)
        rot = np.exp(1.0j * np.radians(p0_f2 + p1_f2 * axis2 / p.sw2_hz))
        cos_f2 = cos_f2 * rot
        sin_f2 = sin_f2 * rot
    log.append(f"F2 phase before combine: p0={p0_f2:.3f} deg, p1={p1_f2:.3f} deg")

    # States recombination: the cosine plane's real part is the t1 real
    # channel, the sine plane's real part the t1 imaginary channel.
    inter = cos_f2.real + 1.0j * sin_f2.real
    log.append("hypercomplex combine: Re(cos plane) + i Re(sin plane)")

    if window is not None:
        inter = apodize(inter, 0, window[1])
        log.append(f"window t1: sine2 shift={window[1]:g}")
    n1_total = int(zf1) if zf1 else p.n1
    inter = zero_fill(inter, 0, n1_total)
    log.append(f"zero fill t1: {p.n1} -> {n1_total} (bin {p.sw1_hz / n1_total:.4f} Hz)")

    # Conjugate kernel along t1 (see module docstring for the sign choice).
    spec = np.fft.fftshift(np.conj(np.fft.fft(np.conj(inter), axis=0)), axes=0)
    log.append("F1 transform: complex DFT, kernel exp(+i 2 pi f t)")

    meta = {
        "sw1_hz": p.sw1_hz, "sw2_hz": p.sw2_hz,
        "t1_initial_s": p.t1_initial_s,
        "dwell1_s": p.dwell1_s, "dwell2_s": p.dwell2_s,
        "n1_points": p.n1, "n2_points": p.n2,
        "n1_total": n1_total, "n2_total": n2_total,
        "quad_mode": raw.provenance.get("quad_mode", "states"),
    }
    return Spectrum2D(spec, _axis(n1_total, p.sw1_hz), _axis(n2_total, p.sw2_hz),
                      log, meta)


_AXIS_INDEX = {"f1": 0, "F1": 0, "f2": 1, "F2": 1}


def apply_phase(spec: Spectrum2D, dimension: str, p0_deg: float,
                p1_deg: float = 0.0) -> Spectrum2D:
    """Zero/first order phase along one dimension.

    The first-order term is p1 degrees across the full spectral width,
    pivoting at the center (0 Hz).
    """
    ax = _AXIS_INDEX[dimension]
    axis = spec.f1_axis if ax == 0 else spec.f2_axis
    sw = spec.meta["sw1_hz" if ax == 0 else "sw2_hz"]
    frac = axis / sw  # -1/2 .. +1/2
    phase = np.exp(1.0j * np.radians(p0_deg + p1_deg * frac))
    shape = [1, 1]
    shape[ax] = len(axis)
    values = spec.values * phase.reshape(shape)
    log = spec.log + [f"phase {dimension}: p0={p0_deg:.3f} deg, p1={p1_deg:.3f} deg"]
    return Spectrum2D(values, spec.f1_axis, spec.f2_axis, log, dict(spec.meta))


def _peak_bins(trace: np.ndarray, threshold_rel: float) -> list[int]:
    top = trace.max()
    if top <= 0:
        return []
    floor = threshold_rel * top
    out = []
    for k in range(1, len(trace) - 1):
        if trace[k] >= floor and trace[k] > trace[k - 1] and trace[k] >= trace[k + 1]:
            out.append(k)
    return out


def _top_2d_peaks(mag: np.ndarray, threshold_rel: float = 0.2,
                  limit: int = 8) -> list[tuple[int, int]]:
    """Local maxima of a magnitude spectrum, tallest first."""
    floor = threshold_rel * mag.max()
    inner = mag[1:-1, 1:-1]
    cand = (inner >= floor)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == dj == 0:
                continue
            cand &= inner >= mag[1 + di:mag.shape[0] - 1 + di,
                                 1 + dj:mag.shape[1] - 1 + dj]
    ii, jj = np.nonzero(cand)
    order = np.argsort(inner[ii, jj])[::-1]
    return [(int(ii[k] + 1), int(jj[k] + 1)) for k in order[:limit]]


def autophase(spec: Spectrum2D, dimension: str) -> Spectrum2D:
    """Deterministic phasing of one dimension.

    Zero order: grid search (0.2 degree final step) maximizing the sum of
    cubed real parts over traces that run along the phased dimension
    through the tallest 2D magnitude peaks; cubing rewards tall positive
    absorptive peaks and penalizes negative excursions.  First order:
    along F1 the linear phase is fixed by the t1_initial/dwell ratio of
    the acquisition; along F2 acquisition starts at t = 0 so it is zero.
    """
    ax = _AXIS_INDEX[dimension]
    peaks = _top_2d_peaks(np.abs(spec.values))
    if not peaks:
        raise ValueError("no peaks found to phase on")

    if ax == 0:
        p1 = 360.0 * spec.meta.get("t1_initial_s", 0.0) / spec.meta.get(
            "dwell1_s", 1.0)
    else:
        p1 = 0.0
    base = apply_phase(spec, dimension, 0.0, p1) if p1 else spec

    cols = sorted({(j if ax == 0 else i) for i, j in peaks})
    traces = [base.values[:, k] if ax == 0 else base.values[k, :] for k in cols]
    stack = np.concatenate(traces)

    def score(p0: float) -> float:
        return float(np.sum((stack * np.exp(1.0j * math.radians(p0))).real ** 3))

    best = 0.0
    for step, span in ((2.0, 180.0), (0.2, 2.0)):
        candidates = np.arange(best - span, best + span + step / 2, step)
        best = float(candidates[int(np.argmax([score(c) for c in candidates]))])
    out = apply_phase(base, dimension, best, 0.0)
    out.log[-1] = f"autophase {dimension}: p0={best:.3f} deg, p1={p1:.3f} deg"
    return out


def cross_section(spec: Spectrum2D, axis: str, at_hz: float) -> Trace1D:
    """Nearest-bin row/column of the phased real part.

    ``axis='f1'`` returns the F1 trace at the F2 position ``at_hz``;
    ``axis='f2'`` the F2 trace at an F1 position.
    """
    ax = _AXIS_INDEX[axis]
    other_axis = spec.f2_axis if ax == 0 else spec.f1_axis
    if not (other_axis[0] <= at_hz <= other_axis[-1]):
        raise ValueError(f"position {at_hz} Hz outside axis range")
    k = int(np.argmin(np.abs(other_axis - at_hz)))
    if ax == 0:
        values = spec.real[:, k]
        own_axis = spec.f1_axis
    else:
        values = spec.real[k, :]
        own_axis = spec.f2_axis
    meta = {"axis": "f1" if ax == 0 else "f2",
            "requested_hz": at_hz, "bin_hz": float(other_axis[k]), "bin": k}
    return Trace1D(own_axis.copy(), values.copy(), meta)


def _parabolic_refine(y: np.ndarray, k: int) -> tuple[float, float]:
    """3-point parabola through k-1, k, k+1: (offset in bins, vertex height)."""
    if k == 0 or k == len(y) - 1:
        return 0.0, float(y[k])
    a, b, c = float(y[k - 1]), float(y[k]), float(y[k + 1])
    denom = a - 2 * b + c
    if denom == 0:
        return 0.0, b
    d = 0.5 * (a - c) / denom
    h = b - 0.25 * (a - c) * d
    return d, h


def _fwhm(axis: np.ndarray, y: np.ndarray, k: int, height: float) -> float:
    """Full width at half height via linear interpolation around bin k."""
    half = 0.5 * height
    left = float(axis[0])
    for i in range(k, 0, -1):
        if y[i - 1] <= half:
            t = (y[i] - half) / (y[i] - y[i - 1])
            left = axis[i] - t * (axis[i] - axis[i - 1])
            break
    else:
        left = float(axis[0])
    right = float(axis[-1])
    for i in range(k, len(y) - 1):
        if y[i + 1] <= half:
            t = (y[i] - half) / (y[i] - y[i + 1])
            right = axis[i] + t * (axis[i + 1] - axis[i])
            break
    else:
        right = float(axis[-1])
    return float(right - left)


def peak_metrics(trace: Trace1D, threshold_rel: float = 0.2) -> tuple[list[Peak], float]:
    """Local maxima above threshold*max with refined positions and widths.

    Returns (peaks sorted by height descending, splitting).  Splitting is
    the distance between the two tallest peaks when at least two are
    found, else 0.
    """
    y = trace.values
    if len(y) == 0:
        raise ValueError("empty trace")
    bins = _peak_bins(y, threshold_rel)
    step = float(trace.axis_hz[1] - trace.axis_hz[0]) if len(y) > 1 else 1.0
    peaks = []
    for k in bins:
        d, h = _parabolic_refine(y, k)
        pos = float(trace.axis_hz[k]) + d * step
        peaks.append(Peak(pos, h, _fwhm(trace.axis_hz, y, k, h)))
    peaks.sort(key=lambda p: -p.height)
    splitting = abs(peaks[0].position_hz - peaks[1].position_hz) if len(peaks) >= 2 else 0.0
    return peaks, splitting


def snr(trace: Trace1D, sigma: float | None = None, seed: int = 0,
        region: tuple[float, float] | None = None,
        threshold_rel: float = 0.2) -> dict:
    """Signal-to-noise of the tallest peak.

    With ``sigma`` the ratio is peak height / sigma; a reproducible noise
    realization (numpy PCG64 via default_rng(seed)) is returned alongside
    for display purposes but does not perturb the measurement.  With
    ``region`` (f_lo, f_hi) the ratio is peak height / RMS of that region.
    """
    peaks, _ = peak_metrics(trace, threshold_rel)
    if not peaks:
        raise ValueError("no peaks above threshold")
    height = peaks[0].height
    if sigma is not None:
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        rng = np.random.default_rng(seed)
        noisy = trace.values + rng.normal(0.0, sigma, size=trace.values.shape)
        return {"snr": height / sigma, "peak_height": height,
                "sigma": sigma, "noise_model": f"gaussian PCG64 seed={seed}",
                "noisy_values": noisy}
    if region is not None:
        lo, hi = region
        sel = (trace.axis_hz >= lo) & (trace.axis_hz <= hi)
        if not np.any(sel):
            raise ValueError("empty noise region")
        rms = float(np.sqrt(np.mean(trace.values[sel] ** 2)))
        if rms == 0:
            raise ValueError("zero-variance noise region")
        return {"snr": height / rms, "peak_height": height, "noise_rms": rms}
    raise ValueError("snr needs sigma or region")


def auto_section(spec: Spectrum2D, axis: str = "f1") -> Trace1D:
    """Cross section through the tallest cross peak.

    Finds the 2D maximum of the phased real part, refines the peak's
    position along the other axis on the magnitude trace (the magnitude
    apex is insensitive to residual phase twist), and sections there.
    """
    i, j = np.unravel_index(np.argmax(spec.real), spec.real.shape)
    mag = np.abs(spec.values)
    if axis in ("f1", "F1"):
        ref = Trace1D(spec.f2_axis, mag[i, :])
    else:
        ref = Trace1D(spec.f1_axis, mag[:, j])
    peaks, _ = peak_metrics(ref, 0.5)
    at_hz = peaks[0].position_hz if peaks else (
        spec.f2_axis[j] if axis in ("f1", "F1") else spec.f1_axis[i])
    return cross_section(spec, axis, at_hz)


# ---------------------------------------------------------------------------
# Exports


def spectrum_to_csv(spec: Spectrum2D) -> str:
    """Phased real part as CSV: f2-axis header line, blank line, data rows."""
    buf = io.StringIO()
    buf.write("f1_hz," + ",".join(f"{v:.6f}" for v in spec.f2_axis) + "\n")
    buf.write("\n")
    for i, f1 in enumerate(spec.f1_axis):
        row = spec.real[i]
        buf.write(f"{f1:.6f}," + ",".join(f"{v:.10e}" for v in row) + "\n")
    return buf.getvalue()


def spectrum_from_csv(text: str) -> Spectrum2D:
    lines = [ln for ln in text.splitlines()]
    if len(lines) < 3:
        raise ValueError("spectrum CSV too short")
    header = lines[0].split(",")
    if header[0] != "f1_hz":
        raise ValueError("missing f1_hz header")
    f2 = np.array([float(v) for v in header[1:]])
    rows, f1 = [], []
    for ln in lines[2:]:
        if not ln.strip():
            continue
        parts = ln.split(",")
        f1.append(float(parts[0]))
        rows.append([float(v) for v in parts[1:]])
    values = np.array(rows, dtype=float).astype(complex)
    f1 = np.array(f1)
    meta = {
        "sw1_hz": float(f1[1] - f1[0]) * len(f1) if len(f1) > 1 else 0.0,
        "sw2_hz": float(f2[1] - f2[0]) * len(f2) if len(f2) > 1 else 0.0,
        "from_csv": True,
    }
    return Spectrum2D(values, f1, f2, ["loaded from CSV (real part only)"], meta)


def peak_report(peaks_2d: list[dict], splitting_f1_hz: float,
                ratio_vs_baseline: float | None = None) -> str:
    doc = {"peaks": peaks_2d, "splitting_f1_hz": splitting_f1_hz}
    if ratio_vs_baseline is not None:
        doc["ratio_vs_baseline"] = ratio_vs_baseline
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
