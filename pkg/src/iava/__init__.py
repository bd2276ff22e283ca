"""Instruction-aligned visual-token selection and contrastive decoding.

The pipeline: two attention passes (general instruction, actual query)
identify image tokens that are salient but irrelevant to the query; a
negative sample keeps only those tokens; decoding contrasts the base
pass against the negative pass to suppress attention-driven
hallucination.  A deterministic toy vision-language simulator, a wire
protocol for external models, offline traces, and POPE-style metrics
make the whole loop testable at desk scale.
"""

from iava.backend import BACKEND
from iava.decoder import (
    DecodeConfig,
    StepLogits,
    base_distribution,
    contrastive_distribution,
    decode_sequence,
    decode_with_strategy,
    pick_token,
)
from iava.evaluation import (
    EvalResult,
    SweepPoint,
    pope_metrics,
    run_benchmark,
    sweep_i,
)
from iava.negative_sample import (
    MaskSpec,
    NegativeStrategy,
    NoiseSpec,
    build_mask,
    describe_strategy,
)
from iava.protocol import (
    GENERAL_INSTRUCTION,
    CandidateAnswer,
    RemoteSession,
    TraceRecord,
    open_session,
    read_traces,
    write_traces,
)
from iava.selection import (
    AttentionStats,
    SelectionParams,
    TokenSelection,
    attention_stats,
    delta_attention,
    select_irrelevant,
)
from iava.toy_lvlm import (
    Scene,
    ToyConfig,
    ToyServer,
    ToySession,
    generate_scene,
    scene_rng,
    toy_attention,
    toy_step,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AttentionStats",
    "CandidateAnswer",
    "DecodeConfig",
    "EvalResult",
    "GENERAL_INSTRUCTION",
    "MaskSpec",
    "NegativeStrategy",
    "NoiseSpec",
    "RemoteSession",
    "Scene",
    "SelectionParams",
    "StepLogits",
    "SweepPoint",
    "TokenSelection",
    "ToyConfig",
    "ToyServer",
    "ToySession",
    "TraceRecord",
    "attention_stats",
    "base_distribution",
    "build_mask",
    "contrastive_distribution",
    "decode_sequence",
    "decode_with_strategy",
    "delta_attention",
    "describe_strategy",
    "generate_scene",
    "open_session",
    "pick_token",
    "pope_metrics",
    "read_traces",
    "run_benchmark",
    "scene_rng",
    "select_irrelevant",
    "sweep_i",
    "toy_attention",
    "toy_step",
    "write_traces",
]
