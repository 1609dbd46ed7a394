"""Config-driven experiment runners and the ``uams`` command line tool."""

from .config import ExperimentSpec, load_preset, load_spec, preset_names, spec_from_dict
from .experiments import SummaryReport, fit_slope, run

__all__ = ["ExperimentSpec", "SummaryReport", "fit_slope", "load_preset", "load_spec",
           "preset_names", "run", "spec_from_dict"]
