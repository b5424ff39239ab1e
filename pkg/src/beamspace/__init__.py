"""Beamspace SU-MIMO over mmWave: link budgets, beam training, power
allocation, cooperative beam tracking and transmission synchronization on a
deterministic discrete-event kernel.
"""

__version__ = "0.1.0"
