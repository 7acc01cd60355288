"""Basic-block segmentation and execution tracing for Python subject
programs; reports go out as schema-versioned JSON."""

from .cfg import BasicBlock, segment_basic_blocks
from .tracer import SCHEMA_VERSION, TraceReport, trace_run

__version__ = "0.1.0"
