from .common import NumericalFailure, SoftOutput
from .graph import DetectionGraph, build_graph, count_four_cycles, girth
from .lmmse import SolverFailure, lmmse_detect
from .mp_g import mp_g_detect
from .mp_psi import mp_psi_detect

__all__ = ["NumericalFailure", "SoftOutput", "DetectionGraph", "build_graph",
           "count_four_cycles", "girth", "SolverFailure", "lmmse_detect", "mp_g_detect",
           "mp_psi_detect"]
