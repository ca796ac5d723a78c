"""Thermodynamic formalism and level-1 large deviations for truncated countable Markov shifts.

The package computes pressures, Gibbs constants and constrained partition
sums on finite truncations, Legendre-transform rate functions, and the
continued-fraction digit-frequency rates with three cross-checking
ensembles (Lebesgue cylinders, periodic points, iterated preimages).
"""

from .errors import MarkovLDPError
from .gauss import cf_expand, continuants, cylinder_interval, periodic_point, sample_gauss
from .gibbs import (
    BernoulliProduct,
    GaussMeasure,
    MarkovChain,
    check_distortion,
    check_mixing_constant,
    estimate_gibbs_constant,
)
from .ldp import (
    check_rate_curve,
    deviation_rate_constrained,
    free_energy,
    mc_deviation,
    rate_legendre,
)
from .potential import Bernoulli, GaussLog, Indicator, LocallyConstant, constant, tilt
from .pressure import (
    pressure_periodic,
    pressure_preimage,
    pressure_spectral,
    pressure_transfer_bracket,
    pressure_word_sum,
)
from .shift import ShiftSpec, build_shift, enumerate_words, full_shift, golden_mean_shift
from .tightness import build_schedule, check_expo_bound, visit_distribution

__version__ = "0.1.0"

__all__ = [
    "Bernoulli", "BernoulliProduct", "GaussLog", "GaussMeasure", "Indicator", "LocallyConstant", "MarkovChain",
    "MarkovLDPError", "ShiftSpec", "build_schedule", "build_shift", "cf_expand", "check_distortion",
    "check_expo_bound", "check_mixing_constant", "check_rate_curve", "constant", "continuants",
    "cylinder_interval", "deviation_rate_constrained", "enumerate_words", "estimate_gibbs_constant",
    "free_energy", "full_shift", "golden_mean_shift", "mc_deviation", "periodic_point", "pressure_periodic",
    "pressure_preimage", "pressure_spectral", "pressure_transfer_bracket", "pressure_word_sum",
    "rate_legendre", "sample_gauss", "tilt", "visit_distribution",
]
