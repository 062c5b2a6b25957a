from .config import ModelConfig
from .estimator import DagRnnVAE, EncodeResult, ExtensionResult
from .losses import focal_loss, kl_divergence, total_loss
from .network import DagRnnVaeNet, GruCell, Mlp

__all__ = [
    "ModelConfig",
    "DagRnnVAE",
    "EncodeResult",
    "ExtensionResult",
    "DagRnnVaeNet",
    "GruCell",
    "Mlp",
    "focal_loss",
    "kl_divergence",
    "total_loss",
]
