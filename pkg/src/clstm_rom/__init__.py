"""Two-stage (partitioning-averaging) C-LSTM forecaster for parametric
time-dependent systems, with POD reduction for high-dimensional data."""

__version__ = "0.1.0"

from ._accel import backend  # noqa: E402,F401
