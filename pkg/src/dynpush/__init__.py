"""Push rumour spreading on edge-Markovian evolving graphs."""

__version__ = "0.1.0"

from .dyngraph import (  # noqa: E402
    EdgeMarkov,
    EdgeMarkovParams,
    GraphSnapshot,
    IndependentGnp,
    Initial,
    RngStream,
    Static,
    edge_markov,
)
from .protocol import RunRecord, run_protocol, source_only_run  # noqa: E402

__all__ = [
    "EdgeMarkov",
    "EdgeMarkovParams",
    "GraphSnapshot",
    "IndependentGnp",
    "Initial",
    "RngStream",
    "Static",
    "edge_markov",
    "RunRecord",
    "run_protocol",
    "source_only_run",
]
