"""gvlm: grouped-vocabulary language model head.

Predicts next tokens in two stages (group, then token within group) so the
full [batch, sequence, vocab] logits tensor is never materialised during
training, and reconstructs the complete vocabulary distribution at
inference time.
"""
from . import engine

__version__ = "0.1.0"
__all__ = ["engine", "__version__"]
