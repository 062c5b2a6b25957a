"""Architecture and training hyperparameters."""

from __future__ import annotations

from dataclasses import asdict, dataclass


@dataclass(frozen=True)
class ModelConfig:
    embed_dim: int = 6
    gru_units: int = 64
    musigma_hidden: int = 32
    latent_dim: int = 32
    decoder_hidden: tuple[int, ...] = (64, 64, 32)
    edge_threshold: float = 0.2
    focal_alpha: float = 0.25
    focal_gamma: float = 2.0
    # Free-bits floor (nats per node) under which the latent term stops
    # pushing: the plain compound loss collapses the posterior on small
    # graphs, flattening every score row (see estimator training loop).
    kl_free_bits: float = 4.0
    lr_initial: float = 1e-3
    lr_decay_rate: float = 0.96
    lr_decay_steps: int = 1000
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "decoder_hidden", tuple(int(w) for w in self.decoder_hidden))
        for name in ("embed_dim", "gru_units", "musigma_hidden", "latent_dim"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if any(w <= 0 for w in self.decoder_hidden):
            raise ValueError("decoder widths must be positive")
        if not 0.0 < self.edge_threshold < 1.0:
            raise ValueError("edge_threshold must lie in (0, 1)")
        if not 0.0 < self.focal_alpha < 1.0:
            raise ValueError("focal_alpha must lie in (0, 1)")
        if self.focal_gamma < 0.0:
            raise ValueError("focal_gamma must be >= 0")
        if self.kl_free_bits < 0.0:
            raise ValueError("kl_free_bits must be >= 0")
        if self.lr_initial <= 0 or self.lr_decay_rate <= 0 or self.lr_decay_steps <= 0:
            raise ValueError("learning-rate schedule values must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["decoder_hidden"] = list(self.decoder_hidden)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        fields = dict(doc)
        if "decoder_hidden" in fields:
            fields["decoder_hidden"] = tuple(fields["decoder_hidden"])
        return cls(**fields)
