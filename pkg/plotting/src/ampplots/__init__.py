"""Figure rendering for ampdetect experiment CSVs."""

from .render import DISPLAY_NAMES, PlotSchemaError, PlotSpec, build_figure, main, render

__version__ = "0.1.0"
