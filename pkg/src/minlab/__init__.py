"""Minimizers of randomly kicked Lagrangians on the circle: value-function
evolution, minimizer sets and shock maps, and the numerical experiments built
on top of them."""

from .forcing import (
    Distribution,
    KickPotential,
    KickSequence,
    PotentialBasis,
    check_distribution,
    check_embedding,
    make_fourier_basis,
    parse_basis,
    parse_distribution,
    parse_mode,
)
from .omega import OmegaSet, ShockMapTable, diameter, omega_set, shock_map
from .solver import (
    SolverConfig,
    ValueEvolution,
    WindingBoundError,
    backtrack,
    evolve,
    extend,
    lax_oleinik_step,
)

__version__ = "0.1.0"

__all__ = [
    "Distribution", "KickPotential", "KickSequence", "PotentialBasis", "check_distribution",
    "check_embedding", "make_fourier_basis", "parse_basis", "parse_distribution", "parse_mode",
    "OmegaSet", "ShockMapTable", "diameter", "omega_set", "shock_map",
    "SolverConfig", "ValueEvolution", "WindingBoundError", "backtrack", "evolve", "extend",
    "lax_oleinik_step",
]
