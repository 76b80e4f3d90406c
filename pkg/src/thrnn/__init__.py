"""Joint next-item and return-time prediction.

A hierarchical GRU over sessions with a point-process head for the
inter-session gap, plus Hawkes and heuristic baselines, synthetic
corpus generators, and evaluation utilities.
"""

__version__ = "0.1.0"
