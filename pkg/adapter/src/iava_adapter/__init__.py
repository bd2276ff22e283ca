"""Model host for the iava engine.

Runs a small instruction-conditioned attention model behind the engine's
wire protocol and exports offline trace files the engine can replay.
The engine is never imported; the only shared surface is the protocol
itself and the trace file format.
"""

from iava_adapter.export import ExportSummary, export_traces
from iava_adapter.model import (
    GENERAL_INSTRUCTION,
    HookConfig,
    Mask,
    Noise,
    TinyVLM,
    make_dataset,
)
from iava_adapter.selection import SELECTION_DEFAULTS, select_irrelevant
from iava_adapter.wire import AdapterServer

__all__ = [
    "AdapterServer",
    "ExportSummary",
    "GENERAL_INSTRUCTION",
    "HookConfig",
    "Mask",
    "Noise",
    "SELECTION_DEFAULTS",
    "TinyVLM",
    "export_traces",
    "make_dataset",
    "select_irrelevant",
]
