"""HTTP inference sidecar for the claimgate pipeline.

Implements every endpoint of the wire protocol (see ../docs/protocol.md in the
main repository): /health, /nli, /embed, /punctuate, /truecase,
/coref/propose, /coref/select, /rewrite, /cross_encode.
"""

from .app import PROTOCOL_VERSION, create_app
from .engine import CAPABILITIES, DeterministicEngine, format_rewrite_prompt

__version__ = "0.1.0"

__all__ = [
    "CAPABILITIES",
    "DeterministicEngine",
    "PROTOCOL_VERSION",
    "create_app",
    "format_rewrite_prompt",
]
