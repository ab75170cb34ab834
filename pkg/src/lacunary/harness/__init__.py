from .families import generate, unit_lattice
from .ratios import extrapolation_ratio, level_split, weak_type_ratio
from .runner import ExperimentSpec, FamilySpec, RunReport, full_spec, run, run_row, smoke_spec

__all__ = [
    "generate", "unit_lattice", "weak_type_ratio", "extrapolation_ratio", "level_split",
    "ExperimentSpec", "FamilySpec", "RunReport", "run", "run_row", "smoke_spec", "full_spec",
]
