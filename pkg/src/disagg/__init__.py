"""Energy disaggregation toolkit.

Extract appliance activations from sub-metered power data, synthesise
training windows, train three small neural architectures from scratch,
disaggregate long aggregate sequences with sliding windows, and score
the results against combinatorial-optimisation and factorial-HMM
baselines.
"""

__version__ = "0.1.0"
