"""Command-line pipeline: simulate, process, analyze, compare, po-trace.

Every command writes its primary outputs plus a manifest.json recording
the resolved parameters, input hashes and output hashes.  Exit codes:
0 ok, 1 runtime error, 2 validation error, 3 check failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, acquire, checks, plots, process, productop, sequences, spins


class ValidationError(ValueError):
    pass


PROFILES = {
    "desk": dict(sw1=200.0, n1=512, sw2=800.0, n2=256, t1_init=0.0,
                 zf1=512, zf2=1024, remap_offsets=True),
    "spectrometer": dict(sw1=6500.0, n1=2400, sw2=2790.0, n2=840,
                         t1_init=186e-6, zf1=4096, zf2=1024,
                         remap_offsets=False),
    "none": dict(sw1=None, n1=None, sw2=None, n2=None, t1_init=None,
                 zf1=None, zf2=None, remap_offsets=False),
}

DEFAULT_DELTA = 1.0 / (2.0 * 145.0)


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(outdir: Path, command: str, params: dict,
                    inputs: dict, started: float) -> None:
    outputs = {}
    for p in sorted(outdir.iterdir()):
        if p.name == "manifest.json" or p.is_dir():
            continue
        outputs[p.name] = _sha256_file(p)
    for sub in sorted(outdir.iterdir()):
        if sub.is_dir():
            for p in sorted(sub.iterdir()):
                outputs[f"{sub.name}/{p.name}"] = _sha256_file(p)
    doc = {
        "command": command,
        "tool": "pehmqc",
        "version": __version__,
        "parameters": params,
        "input_hashes": inputs,
        "output_hashes": outputs,
        "wall_time_s": round(time.monotonic() - started, 3),
    }
    (outdir / "manifest.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _load_system(arg: str, remap: bool, j2_hz: float) -> tuple[spins.SpinSystem, dict]:
    inputs = {}
    if arg.startswith("builtin:"):
        system = spins.builtin_system(arg.split(":", 1)[1], j2_hz=j2_hz)
    else:
        path = Path(arg)
        if not path.exists():
            raise ValidationError(f"--system file not found: {arg}")
        text = path.read_text()
        inputs[str(path)] = hashlib.sha256(text.encode()).hexdigest()
        system = spins.load_system(text)
    problems = spins.validate(system)
    if problems:
        raise ValidationError("invalid system: " + "; ".join(problems))
    if remap:
        system = spins.desk_offsets(system)
    return system, inputs


def _load_sequence(arg: str, delta: float, n_pe: int,
                   filters: bool) -> tuple[sequences.PulseSequence, dict]:
    inputs = {}
    if arg == "hmqc":
        seq = sequences.build_hmqc(delta, filters=filters)
    elif arg == "pe-hmqc":
        seq = sequences.build_pe_hmqc(delta, n_pe, filters=filters)
    elif arg.startswith("file:"):
        path = Path(arg.split(":", 1)[1])
        if not path.exists():
            raise ValidationError(f"sequence file not found: {path}")
        text = path.read_text()
        inputs[str(path)] = hashlib.sha256(text.encode()).hexdigest()
        seq = sequences.parse_sequence(text)
    else:
        raise ValidationError(
            f"--sequence must be hmqc, pe-hmqc or file:PATH (got {arg!r})")
    return seq, inputs


def _acq_params(args, profile: dict) -> acquire.AcqParams:
    def pick(flag, key):
        return flag if flag is not None else profile[key]
    sw1 = pick(args.sw1, "sw1")
    n1 = pick(args.n1, "n1")
    sw2 = pick(args.sw2, "sw2")
    n2 = pick(args.n2, "n2")
    t1_init = pick(args.t1_init, "t1_init")
    for name, v in (("--sw1", sw1), ("--n1", n1), ("--sw2", sw2), ("--n2", n2)):
        if v is None:
            raise ValidationError(f"{name} required with --profile none")
        if v <= 0:
            raise ValidationError(f"{name} must be positive (got {v})")
    try:
        return acquire.AcqParams(sw2_hz=float(sw2), n2=int(n2), sw1_hz=float(sw1),
                                 n1=int(n1), t1_initial_s=float(t1_init or 0.0))
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc


def _phase_pipeline(spec, phase2: str, phase1: str):
    for dim, mode in (("f2", phase2), ("f1", phase1)):
        if mode == "auto":
            spec = process.autophase(spec, dim)
        elif mode == "none":
            continue
        else:
            try:
                p0, p1 = (float(x) for x in mode.split(","))
            except ValueError:
                raise ValidationError(
                    f"--phase must be auto, none or p0,p1 (got {mode!r})")
            spec = process.apply_phase(spec, dim, p0, p1)
    return spec


def _window_arg(arg: str):
    if arg == "none":
        return None
    if arg.startswith("sine2"):
        shift = 0.0
        if ":" in arg:
            try:
                shift = float(arg.split(":", 1)[1])
            except ValueError:
                raise ValidationError(f"bad window shift in {arg!r}")
        return ("sine2", shift)
    raise ValidationError(f"unknown window {arg!r}")


def _peak_entry(p: process.Peak, f2_hz: float, fwhm_f2: float = 0.0) -> dict:
    return {"f1_hz": round(p.position_hz, 6), "f2_hz": round(f2_hz, 6),
            "height": p.height, "fwhm_f1_hz": round(p.fwhm_hz, 6),
            "fwhm_f2_hz": round(fwhm_f2, 6)}


def _analyze_spectrum(spec, section: str, threshold: float) -> dict:
    """Section per the request and measure peaks; returns a report dict."""
    if section == "auto":
        tr = process.auto_section(spec, "f1")
    elif section.startswith("f1@"):
        tr = process.cross_section(spec, "f1", float(section[3:]))
    elif section.startswith("f2@"):
        tr = process.cross_section(spec, "f2", float(section[3:]))
    else:
        raise ValidationError(
            f"--section must be auto, f1@HZ or f2@HZ (got {section!r})")
    peaks, splitting = process.peak_metrics(tr, threshold)
    axis = tr.meta.get("axis", "f1")
    at = tr.meta.get("bin_hz", 0.0)
    entries = []
    for p in peaks:
        if axis == "f1":
            entries.append(_peak_entry(p, at))
        else:
            entries.append({"f1_hz": round(at, 6), "f2_hz": round(p.position_hz, 6),
                            "height": p.height, "fwhm_f1_hz": 0.0,
                            "fwhm_f2_hz": round(p.fwhm_hz, 6)})
    return {"trace": tr, "peaks": entries,
            "splitting_hz": splitting, "section_axis": axis,
            "section_at_hz": at}


# ---------------------------------------------------------------------------
# Subcommands


def cmd_simulate(args) -> int:
    started = time.monotonic()
    profile = PROFILES[args.profile]
    system, inputs = _load_system(args.system, profile["remap_offsets"], args.j2)
    seq, seq_inputs = _load_sequence(args.sequence, args.delta, args.n_pe,
                                     args.filters == "on")
    inputs.update(seq_inputs)
    params = _acq_params(args, profile)
    raw = acquire.run_experiment(system, seq, params, workers=args.workers)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    acquire.save_raw(outdir, raw)
    schedule = {
        "t1_min_s": params.t1_initial_s,
        "t1_max_s": params.t1_max_s,
        "n1": params.n1,
        "acquisition_time_s": params.acquisition_time_s,
    }
    n_pe = seq.params.get("n_pe")
    if n_pe:
        schedule["quarter_delay_min_s"] = params.t1_initial_s / (4 * n_pe)
        schedule["quarter_delay_max_s"] = params.t1_max_s / (4 * n_pe)
    (outdir / "schedule.json").write_text(
        json.dumps(schedule, indent=2, sort_keys=True) + "\n")
    _write_manifest(outdir, "simulate", {
        "system": args.system, "sequence": seq.name, "delta_s": args.delta,
        "n_pe": args.n_pe, "filters": args.filters, "profile": args.profile,
        "sw1_hz": params.sw1_hz, "n1": params.n1, "sw2_hz": params.sw2_hz,
        "n2": params.n2, "t1_initial_s": params.t1_initial_s,
        "workers": args.workers,
    }, inputs, started)
    print(f"raw data written to {outdir} "
          f"(t1 {params.t1_initial_s * 1e6:.1f} us .. {params.t1_max_s * 1e3:.1f} ms)")
    return 0


def cmd_process(args) -> int:
    started = time.monotonic()
    rawdir = Path(args.raw)
    if not (rawdir / acquire.RAW_META).exists():
        raise ValidationError(f"no raw data found in {rawdir}")
    raw = acquire.load_raw(rawdir)
    inputs = {f"{rawdir}/{n}": _sha256_file(rawdir / n)
              for n in (acquire.RAW_META, acquire.RAW_COS, acquire.RAW_SIN)}
    window = _window_arg(args.window)
    spec = process.transform_2d(raw, zf1=args.zf1, zf2=args.zf2, window=window)
    spec = _phase_pipeline(spec, args.phase, args.phase1)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "spectrum.csv").write_text(process.spectrum_to_csv(spec))
    (outdir / "processing_log.json").write_text(
        json.dumps({"log": spec.log, "f1_bin_hz": spec.f1_bin_hz,
                    "f2_bin_hz": spec.f2_bin_hz}, indent=2) + "\n")
    if not args.no_figures:
        plots.save_projections(outdir / "projections.png", spec,
                               raw.provenance.get("sequence", ""))
    _write_manifest(outdir, "process", {
        "raw": str(rawdir), "zf1": args.zf1, "zf2": args.zf2,
        "window": args.window, "phase": args.phase, "phase1": args.phase1,
    }, inputs, started)
    print(f"spectral resolution: F1 {spec.f1_bin_hz:.3f} Hz, "
          f"F2 {spec.f2_bin_hz:.3f} Hz")
    print(f"spectrum written to {outdir / 'spectrum.csv'}")
    return 0


def cmd_analyze(args) -> int:
    started = time.monotonic()
    spec_path = Path(args.spectrum)
    if not spec_path.exists():
        raise ValidationError(f"spectrum file not found: {spec_path}")
    spec = process.spectrum_from_csv(spec_path.read_text())
    inputs = {str(spec_path): _sha256_file(spec_path)}
    result = _analyze_spectrum(spec, args.section, args.threshold)
    if not result["peaks"]:
        raise ValidationError("no peaks above threshold")
    report = {
        "peaks": result["peaks"],
        "splitting_f1_hz": result["splitting_hz"]
        if result["section_axis"] == "f1" else 0.0,
        "section": {"axis": result["section_axis"],
                    "at_hz": result["section_at_hz"]},
    }
    traces = [("spectrum", result["trace"])]
    if args.baseline:
        base_path = Path(args.baseline)
        if not base_path.exists():
            raise ValidationError(f"baseline file not found: {base_path}")
        inputs[str(base_path)] = _sha256_file(base_path)
        base = process.spectrum_from_csv(base_path.read_text())
        base_result = _analyze_spectrum(base, args.section, args.threshold)
        if base_result["peaks"]:
            report["baseline_peaks"] = base_result["peaks"]
            report["ratio_vs_baseline"] = (result["peaks"][0]["height"]
                                           / base_result["peaks"][0]["height"])
            traces.append(("baseline", base_result["trace"]))
    if args.noise_sigma is not None:
        noise = process.snr(result["trace"], sigma=args.noise_sigma,
                            seed=args.seed, threshold_rel=args.threshold)
        report["snr"] = {"value": noise["snr"], "sigma": noise["sigma"],
                         "seed": args.seed, "model": noise["noise_model"]}
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    if not args.no_figures:
        notes = [f"splitting {report['splitting_f1_hz']:.2f} Hz"]
        if "ratio_vs_baseline" in report:
            notes.append(f"ratio vs baseline {report['ratio_vs_baseline']:.2f}")
        plots.save_sections(outdir / "sections.png", traces,
                            title="cross section", annotations=notes)
    _write_manifest(outdir, "analyze", {
        "spectrum": str(spec_path), "section": args.section,
        "threshold": args.threshold, "noise_sigma": args.noise_sigma,
        "seed": args.seed, "baseline": args.baseline,
    }, inputs, started)
    print(json.dumps(report["peaks"][:3], indent=2))
    print(f"report written to {outdir / 'report.json'}")
    return 0


def _run_and_process(system, seq, params, zf1, zf2, window, phase2, phase1,
                     workers):
    raw = acquire.run_experiment(system, seq, params, workers=workers)
    spec = process.transform_2d(raw, zf1=zf1, zf2=zf2, window=window)
    spec = _phase_pipeline(spec, phase2, phase1)
    return raw, spec


def cmd_compare(args) -> int:
    started = time.monotonic()
    profile = PROFILES[args.profile]
    system, inputs = _load_system(args.system, profile["remap_offsets"], args.j2)
    params = _acq_params(args, profile)
    zf1 = args.zf1 if args.zf1 is not None else profile["zf1"] or params.n1
    zf2 = args.zf2 if args.zf2 is not None else profile["zf2"] or params.n2
    window = _window_arg(args.window)
    filters = args.filters == "on"
    processing_id = hashlib.sha256(json.dumps(
        {"zf1": zf1, "zf2": zf2, "window": args.window, "phase": args.phase,
         "phase1": args.phase1}, sort_keys=True).encode()).hexdigest()

    runs = {}
    for label, seq in (("hmqc", sequences.build_hmqc(args.delta, filters=filters)),
                       ("pe-hmqc", sequences.build_pe_hmqc(args.delta, args.n_pe,
                                                           filters=filters))):
        raw = acquire.run_experiment(system, seq, params, workers=args.workers)
        signal = max(np.abs(raw.cos_plane).max(), np.abs(raw.sin_plane).max())
        if signal < 1e-9:
            # no heteronuclear pathway (e.g. a carbon-free system): the
            # phase cycle cancels everything and the report stays empty
            spec = process.transform_2d(raw, zf1=zf1, zf2=zf2, window=window,
                                        f2_phase="none")
            analysis = {"peaks": [], "splitting_hz": 0.0, "trace": None}
            f2_trace = None
        else:
            spec = process.transform_2d(raw, zf1=zf1, zf2=zf2, window=window)
            spec = _phase_pipeline(spec, args.phase, args.phase1)
            analysis = _analyze_spectrum(spec, "auto", args.threshold)
            f2_trace = process.auto_section(spec, "f2")
        runs[label] = {"raw": raw, "spec": spec, "analysis": analysis,
                       "f2_trace": f2_trace}

    conv = runs["hmqc"]["analysis"]
    pe = runs["pe-hmqc"]["analysis"]
    report = {
        "system": system.name,
        "delta_s": args.delta,
        "n_pe": args.n_pe,
        "f1_bin_hz": runs["hmqc"]["spec"].f1_bin_hz,
        "f2_bin_hz": runs["hmqc"]["spec"].f2_bin_hz,
        "processing_hash": {"hmqc": processing_id, "pe-hmqc": processing_id},
        "hmqc": {
            "peaks": conv["peaks"], "splitting_f1_hz": conv["splitting_hz"],
            "modulation_index": (conv["peaks"][1]["height"] / conv["peaks"][0]["height"]
                                 if len(conv["peaks"]) > 1 else 0.0),
        },
        "pe_hmqc": {
            "peaks": pe["peaks"], "splitting_f1_hz": pe["splitting_hz"],
            "modulation_index": (pe["peaks"][1]["height"] / pe["peaks"][0]["height"]
                                 if len(pe["peaks"]) > 1 else 0.0),
        },
    }
    if conv["peaks"] and pe["peaks"]:
        report["height_ratio"] = (pe["peaks"][0]["height"]
                                  / conv["peaks"][0]["height"])
        report["pe_f1_position_hz"] = pe["peaks"][0]["f1_hz"]
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "comparison.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n")
    for label in ("hmqc", "pe-hmqc"):
        (outdir / f"{label}.csv").write_text(
            process.spectrum_to_csv(runs[label]["spec"]))
        if args.save_raw:
            acquire.save_raw(outdir / f"raw-{label}", runs[label]["raw"])
    if not args.no_figures and pe["trace"] is not None and conv["trace"] is not None:
        notes = []
        if "height_ratio" in report:
            notes.append(f"height ratio {report['height_ratio']:.2f}")
        notes.append(f"F1 splitting {conv['splitting_hz']:.2f} Hz -> "
                     f"{pe['splitting_hz']:.2f} Hz")
        plots.save_comparison(
            outdir / "sections.png",
            {"pe-HMQC": pe["trace"], "HMQC": conv["trace"]},
            {"pe-HMQC": runs["pe-hmqc"]["f2_trace"],
             "HMQC": runs["hmqc"]["f2_trace"]},
            annotations=notes)
    _write_manifest(outdir, "compare", {
        "system": args.system, "delta_s": args.delta, "n_pe": args.n_pe,
        "profile": args.profile, "filters": args.filters,
        "sw1_hz": params.sw1_hz, "n1": params.n1, "sw2_hz": params.sw2_hz,
        "n2": params.n2, "t1_initial_s": params.t1_initial_s,
        "zf1": zf1, "zf2": zf2, "window": args.window,
        "phase": args.phase, "phase1": args.phase1,
        "threshold": args.threshold, "workers": args.workers,
    }, inputs, started)
    if "height_ratio" in report:
        print(f"splitting: {conv['splitting_hz']:.3f} Hz (hmqc) -> "
              f"{pe['splitting_hz']:.3f} Hz (pe-hmqc)")
        print(f"height ratio pe/hmqc: {report['height_ratio']:.3f}")
    else:
        print("no heteronuclear cross peaks found")
    print(f"comparison written to {outdir / 'comparison.json'}")
    return 0


def cmd_po_trace(args) -> int:
    system, _ = _load_system(args.system, False, args.j2)
    seq, _ = _load_sequence(args.sequence, args.delta, args.n_pe,
                            args.filters == "on")
    if args.marks == "all":
        marks = list(seq.marks())
    else:
        marks = [m.strip() for m in args.marks.split(",") if m.strip()]
        unknown = [m for m in marks if m not in seq.marks()]
        if unknown:
            raise ValidationError(
                f"marks {unknown} not present in sequence "
                f"(available: {', '.join(seq.marks())})")
    try:
        trace = productop.po_trace(seq, system, args.t1, marks)
    except productop.UnsupportedCouplingError as exc:
        raise ValidationError(str(exc)) from exc
    sys.stdout.write(productop.format_trace(system, trace))
    if args.check:
        if not seq.params.get("n_pe"):
            raise ValidationError("--check requires a pe-hmqc sequence")
        result = checks.check_pe_algebra(seq, system, args.delta)
        sys.stdout.write(result.report())
        if not result.passed:
            return 3
    return 0


# ---------------------------------------------------------------------------


def _add_system_args(p):
    p.add_argument("--system", required=True,
                   help="builtin:NAME (ch2, ch-remote, ch2-remote, ax) or a JSON file")
    p.add_argument("--j2", type=float, default=15.0,
                   help="two-bond coupling for builtin:ch-remote (Hz)")


def _add_acq_args(p):
    p.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    p.add_argument("--sw1", type=float, default=None, help="indirect width (Hz)")
    p.add_argument("--n1", type=int, default=None, help="t1 increments")
    p.add_argument("--sw2", type=float, default=None, help="direct width (Hz)")
    p.add_argument("--n2", type=int, default=None, help="direct complex points")
    p.add_argument("--t1-init", dest="t1_init", type=float, default=None,
                   help="first t1 value (s)")
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA,
                   help="transfer delay (s)")
    p.add_argument("--n-pe", dest="n_pe", type=int, default=1,
                   help="perfect-echo blocks in t1")
    p.add_argument("--filters", choices=("on", "off"), default="on",
                   help="coherence filters / purge idealizing the gradients")
    p.add_argument("--workers", type=int, default=1)


def _add_proc_args(p):
    p.add_argument("--zf1", type=int, default=None, help="F1 points after zero fill")
    p.add_argument("--zf2", type=int, default=None, help="F2 points after zero fill")
    p.add_argument("--window", default="sine2",
                   help="sine2[:shift] or none")
    p.add_argument("--phase", default="auto", help="F2 phase: auto | none | p0,p1")
    p.add_argument("--phase1", default="auto", help="F1 phase: auto | none | p0,p1")
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pehmqc",
        description="Simulate and analyze perfect-echo HMQC experiments "
                    "on small spin systems.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a 2D experiment, write raw data")
    _add_system_args(p)
    p.add_argument("--sequence", default="pe-hmqc",
                   help="hmqc | pe-hmqc | file:PATH")
    _add_acq_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("process", help="transform raw data into a spectrum CSV")
    p.add_argument("--raw", required=True, help="raw data directory")
    _add_proc_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_process)

    p = sub.add_parser("analyze", help="peak metrics of a spectrum CSV")
    p.add_argument("--spectrum", required=True)
    p.add_argument("--section", default="auto", help="auto | f1@HZ | f2@HZ")
    p.add_argument("--threshold", type=float, default=0.15,
                   help="relative peak threshold")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--baseline", default=None,
                   help="second spectrum CSV for height ratios")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("compare",
                       help="run HMQC and pe-HMQC end-to-end and compare")
    _add_system_args(p)
    _add_acq_args(p)
    _add_proc_args(p)
    p.add_argument("--threshold", type=float, default=0.15)
    p.add_argument("--save-raw", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("po-trace",
                       help="product-operator states at marked time points")
    _add_system_args(p)
    p.add_argument("--sequence", default="pe-hmqc")
    p.add_argument("--n-pe", dest="n_pe", type=int, default=1)
    p.add_argument("--delta", type=float, default=DEFAULT_DELTA)
    p.add_argument("--filters", choices=("on", "off"), default="on")
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--marks", default="all",
                   help="comma-separated mark labels, or 'all'")
    p.add_argument("--check", action="store_true",
                   help="verify the perfect-echo closed forms; exit 3 on mismatch")
    p.set_defaults(func=cmd_po_trace)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, spins.SystemFormatError, spins.SystemValidationError,
            sequences.SequenceFormatError, sequences.SequenceSemanticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except productop.UnsupportedCouplingError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failures
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
