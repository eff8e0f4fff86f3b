"""nmpzero command pipeline and artifact writers."""

from .pipeline import AnalysisPipeline, run
from .writers import ArtifactWriter

__all__ = ["AnalysisPipeline", "ArtifactWriter", "run"]
