"""Gated claim rewriting and retrieve-verify evaluation for dialogue
fact-checking.

Public surface: data loading (`load_split`), staged rewriting
(`build_surfaces`), the consistency gate (`decide`, `gate_sweep`,
`calibrate_temperature`), BM25-cascade retrieval (`build_index`,
`run_cascade`) and the three evaluation protocols (`ir_eval`, `fv_eval`,
`e2e_eval`).
"""

from .backends import Backend, HttpBackend, StubBackend, make_backend
from .data import DialogueInstance, EvidenceItem, LABELS, compute_stats, load_split
from .errors import (
    BackendError,
    CapabilityError,
    ClaimgateError,
    ConfigError,
    ContractViolation,
    DataError,
    SplitFormatError,
    TransportError,
)
from .eval import ProtocolConfig, classwise_f1, e2e_eval, fv_eval, ir_eval
from .gate import (
    DEFAULT_TAU_GRID,
    GateConfig,
    GateWeights,
    calibrate_temperature,
    compute_signals,
    decide,
    gate_sweep,
)
from .pipeline import ClaimSurfaces, PipelineConfig, build_surfaces
from .retrieval import Bm25Params, CascadeConfig, InvertedIndex, build_index, run_cascade

__version__ = "0.1.0"

__all__ = [
    "Backend", "Bm25Params", "CascadeConfig", "ClaimSurfaces", "ClaimgateError",
    "BackendError", "CapabilityError", "ConfigError", "ContractViolation",
    "DEFAULT_TAU_GRID", "DataError", "DialogueInstance", "EvidenceItem",
    "GateConfig", "GateWeights", "HttpBackend", "InvertedIndex", "LABELS",
    "PipelineConfig", "ProtocolConfig", "SplitFormatError", "StubBackend",
    "TransportError", "build_index", "build_surfaces", "calibrate_temperature",
    "classwise_f1", "compute_signals", "compute_stats", "decide", "e2e_eval",
    "fv_eval", "gate_sweep", "ir_eval", "load_split", "make_backend",
    "run_cascade", "__version__",
]
