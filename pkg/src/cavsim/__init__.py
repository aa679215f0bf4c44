"""Hierarchical collision-avoidance control toolkit and scenario simulator.

Subpackages cover foundation numerics, vehicle plant models, reference-path
construction, delay-tolerant tracking control, CLF/CBF safety controllers,
value-based deep RL agents, the scenario harness, and a desk-scale UDP
state-sync link.
"""

__version__ = "0.1.0"
