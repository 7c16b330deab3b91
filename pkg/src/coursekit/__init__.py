"""coursekit: analysis, alignment, corruption, selection, and faithfulness
scoring for multi-document summaries of longitudinal note collections."""

__version__ = "0.1.0"
