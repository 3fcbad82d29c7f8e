"""Spectral pseudo-lattice detection and monodromy for perturbed
integrable systems.

The package synthesizes the asymptotic eigenvalue clouds of weakly
non-selfadjoint perturbations of two-degree-of-freedom integrable
Hamiltonians, detects their local lattice structure blind from the point
cloud, and computes the integer monodromy of the resulting chart atlas
along loops in the value plane, validated against the classical monodromy
of the action atlas.
"""

from .averaging import AverageReport, average_report, q_infinity, time_average, torus_average
from .detect import (
    DetectionError,
    HChart,
    chi,
    chi_inverse,
    detect_basis,
    fit_hchart,
    invert_leading,
    label_lattice,
)
from .diophantine import (
    DiophantineParams,
    GoodValueSet,
    bad_measure_estimate,
    diophantine_margin,
    good_values,
    is_diophantine,
    is_good_value,
)
from .models import (
    ActionChart,
    ChampagneModel,
    FlatModel,
    ModelError,
    Rect,
    action_coords,
    chart_to_text,
    frequency,
    make_champagne_model,
    make_flat_model,
)
from .monodromy import (
    MonodromyClass,
    MonodromyError,
    PseudoChartAtlas,
    TransitionMatrix,
    classical_monodromy,
    cocycle_check,
    compare_monodromies,
    cover_loop,
    loop_monodromy,
    monodromy_report,
    transition_matrix,
)
from .pipeline import spectral_chart_at, spectral_loop_atlas, spectral_monodromy
from .synth import (
    GoodRectangle,
    NormalFormSymbol,
    SemiclassicalParams,
    SpectrumCloud,
    default_higher_coeffs,
    good_rectangle,
    spectral_band,
    synth_spectrum,
)

__version__ = "0.1.0"

__all__ = [
    "ActionChart",
    "AverageReport",
    "ChampagneModel",
    "DetectionError",
    "DiophantineParams",
    "FlatModel",
    "GoodRectangle",
    "GoodValueSet",
    "HChart",
    "ModelError",
    "MonodromyClass",
    "MonodromyError",
    "NormalFormSymbol",
    "PseudoChartAtlas",
    "Rect",
    "SemiclassicalParams",
    "SpectrumCloud",
    "TransitionMatrix",
    "action_coords",
    "average_report",
    "bad_measure_estimate",
    "chart_to_text",
    "chi",
    "chi_inverse",
    "classical_monodromy",
    "cocycle_check",
    "compare_monodromies",
    "cover_loop",
    "default_higher_coeffs",
    "detect_basis",
    "diophantine_margin",
    "fit_hchart",
    "frequency",
    "good_rectangle",
    "good_values",
    "invert_leading",
    "is_diophantine",
    "is_good_value",
    "label_lattice",
    "loop_monodromy",
    "make_champagne_model",
    "make_flat_model",
    "monodromy_report",
    "q_infinity",
    "spectral_band",
    "spectral_chart_at",
    "spectral_loop_atlas",
    "spectral_monodromy",
    "synth_spectrum",
    "time_average",
    "torus_average",
    "transition_matrix",
]
