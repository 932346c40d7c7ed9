"""pathforge: legislative articles -> validated, executable decision pathways.

Core surface re-exported here; CLI and HTTP service live in
pathforge.cli and pathforge.service.
"""

from .errors import PathforgeError
from .model import (
    Answer,
    Article,
    Difficulty,
    Edge,
    Node,
    NodeKind,
    Origin,
    Pathway,
    build_pathway,
    topological_order,
)
from .validation import (
    ErrorCode,
    LintWarning,
    ValidationError,
    ValidationReport,
    WarningCode,
    article_coverage,
    build_report,
    grounding_score,
    lint,
    validate_structure,
)

__version__ = "0.1.0"

__all__ = [
    "Answer",
    "Article",
    "Difficulty",
    "Edge",
    "ErrorCode",
    "LintWarning",
    "Node",
    "NodeKind",
    "Origin",
    "Pathway",
    "PathforgeError",
    "ValidationError",
    "ValidationReport",
    "WarningCode",
    "article_coverage",
    "build_pathway",
    "build_report",
    "grounding_score",
    "lint",
    "topological_order",
    "validate_structure",
    "__version__",
]
