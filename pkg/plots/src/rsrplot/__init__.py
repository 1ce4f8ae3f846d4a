"""Figure rendering for robust-subspace-recovery sweep CSVs.

A pure view of the harness CSV schema: reads records, aggregates, and
draws; never imports the estimator library.
"""

from .render import PlotSpec, RenderResult, render

__version__ = "0.1.0"
