"""adcut: advertising-video edit-draft toolkit.

Defines and validates the three-track JSON edit-draft protocol, plans
slow-fast frame sampling and token budgets, builds instruction-tuning
corpora against pluggable (mockable) model backends, post-processes drafts
into renderable timelines, and scores predictions with the six-metric
evaluation suite.
"""

__version__ = "0.1.0"

from .draft import (  # noqa: F401
    DecorationSetting,
    Draft,
    ValidationReport,
    VideoNode,
    VoiceSentence,
    parse_draft,
    serialize_draft,
    validate_draft,
)
from .taxonomy import TagTaxonomy, default_taxonomy  # noqa: F401
