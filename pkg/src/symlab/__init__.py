"""Numerical principal symbols and trace formulas on periodic grids and small atlases."""

from .directions import DirectionSet
from .grid import GridFunction, GridSpec, bump, make_grid
from .linop import DenseOp, FreqDiagonal, LinOp, PosDiagonal
from .metric import MetricField
from .operators import commutator, compactness_score, dir_multiplier, mult_op, singular_values
from .symbol import FunctionSymbol, ProbeParams, Symbol, estimate_symbol_field, probe_symbol, theta_pullback
from .trace import calibrate_cd, connes_check, dixmier_estimate, dixmier_partials

__version__ = "0.1.0"

__all__ = [
    "DirectionSet",
    "GridFunction",
    "GridSpec",
    "bump",
    "make_grid",
    "DenseOp",
    "FreqDiagonal",
    "LinOp",
    "PosDiagonal",
    "MetricField",
    "commutator",
    "compactness_score",
    "dir_multiplier",
    "mult_op",
    "singular_values",
    "FunctionSymbol",
    "ProbeParams",
    "Symbol",
    "estimate_symbol_field",
    "probe_symbol",
    "theta_pullback",
    "calibrate_cd",
    "connes_check",
    "dixmier_estimate",
    "dixmier_partials",
]
