"""Bernstein-polynomial direct transcription for constrained optimal control."""

from .bernstein import BernsteinPoly, NodeGrid, node_grid
from .ocp import Fixed, FreeFinalTime, MinSeparationFromPoint, MinSeparationPairwise, NormBand, OcpProblem
from .solver import NlpSolution, SolverOptions, solve
from .transcription import TranscribedNlp, TranscriptionOptions, transcribe

__version__ = "0.1.0"

__all__ = [
    "BernsteinPoly",
    "Fixed",
    "FreeFinalTime",
    "MinSeparationFromPoint",
    "MinSeparationPairwise",
    "NlpSolution",
    "NodeGrid",
    "NormBand",
    "OcpProblem",
    "SolverOptions",
    "TranscribedNlp",
    "TranscriptionOptions",
    "node_grid",
    "solve",
    "transcribe",
]
