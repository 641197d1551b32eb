"""Figure rendering for estimator curve files.

This package is deliberately decoupled from the estimation library: it
consumes only the emitted ``curves.csv`` files, so the estimation suite runs
without it and vice versa.
"""

from .curves import CurveData, SchemaError, read_curves
from .plots import render

__version__ = "0.1.0"
