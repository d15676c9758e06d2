"""Per-type active-node cardinality estimation with a mobile base station.

Slot-accurate simulators for the single-type baseline run once per type
(``trep``) and the two joint schemes (``hsrc_m1``, ``hsrc_m2``), closed-form
slot/energy expectations, and a stop-ordering optimiser.
"""
from .core import AccuracySpec, SlotOutcome, Symbol
from .engine import SCHEMES, run_replicate, run_scheme
from .scenario import ScenarioConfig, build_model

__all__ = [
    "AccuracySpec", "SlotOutcome", "Symbol", "SCHEMES", "run_replicate", "run_scheme",
    "ScenarioConfig", "build_model",
]
__version__ = "0.1.0"
