"""Concept-annotated question embeddings for knowledge tracing.

Pipeline: annotate questions with solution steps and knowledge concepts via a
completion backend, cluster concept texts to identify paraphrases, train a
text encoder with a contrastive objective that treats same-cluster concepts
as non-negatives, export aggregated question embeddings, and inject them into
knowledge-tracing sequence models in place of randomly initialized tables.
"""

__version__ = "0.1.0"

from .errors import BackendError, InputError, KctraceError, NumericalError

__all__ = [
    "BackendError",
    "InputError",
    "KctraceError",
    "NumericalError",
    "__version__",
]
