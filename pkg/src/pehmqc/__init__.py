"""pehmqc: perfect-echo HMQC simulator for small liquid-state spin systems.

Simulates conventional and perfect-echo HMQC pulse sequences on
user-defined spin-1/2 systems with two independent propagation engines
(dense Hilbert-space and analytic product-operator), processes the raw
hypercomplex data into phased 2D spectra, and quantifies multiplet
collapse, sensitivity gain and remote-proton transfer factors.
"""

__version__ = "0.1.0"

from .acquire import AcqParams, RawData2D, run_experiment, run_fid
from .hilbert import DensityState, HamiltonianSpec
from .process import Spectrum2D, Trace1D, transform_2d
from .sequences import PulseSequence, build_hmqc, build_pe_hmqc, parse_sequence
from .spins import Coupling, Spin, SpinSystem, builtin_system, load_system

__all__ = [
    "AcqParams", "Coupling", "DensityState", "HamiltonianSpec",
    "PulseSequence", "RawData2D", "Spectrum2D", "Spin", "SpinSystem",
    "Trace1D", "build_hmqc", "build_pe_hmqc", "builtin_system",
    "load_system", "parse_sequence", "run_experiment", "run_fid",
    "transform_2d", "__version__",
]
