"""Question answering over Ecore software models.

Two interchangeable strategies (direct full-context prompting and a
tool-using agent with a windowed file viewer), a question dataset
generator backed by a structural oracle, and an evaluation harness that
measures accuracy, claim-level precision/recall/F1, and token usage.
"""

from .errors import ModelQueryError

__all__ = ["ModelQueryError"]
__version__ = "0.1.0"
