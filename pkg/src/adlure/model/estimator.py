"""Scikit-learn style estimator around the DAG-RNN VAE.

``fit`` trains on a dataset of AD graphs with Adam and an exponentially
decayed learning rate, keeping the parameters from the epoch with the best
validation loss. ``predict``/``reconstruct`` score edge reconstruction for
a single graph; ``extend`` samples new latent rows and grafts honeyuser
sinks wherever the decoder's score clears the edge threshold.
"""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..datasets import Dataset
from ..errors import MalformedInputError, TrainingDivergedError
from ..graph import ADGraph, ExtensionOutcome, GraphTensors, from_extension, to_matrices
from ..schema import NodeType
from .config import ModelConfig
from .losses import focal_loss, kl_divergence, total_loss
from .network import DagRnnVaeNet, load_arrays, named_arrays

CHECKPOINT_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EncodeResult:
    """Encoder outputs for one graph, rows following the topological order."""

    order: tuple[str, ...]
    n: int
    h: np.ndarray
    h_fwd: np.ndarray
    h_bwd: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    z: np.ndarray


@dataclass
class ExtensionResult:
    """A graph extended with new honeyuser sinks plus the raw evidence."""

    graph: ADGraph
    kept_ids: tuple[str, ...]
    discarded_ids: tuple[str, ...]
    added_edges: tuple[tuple[str, str], ...]
    scores: np.ndarray  # (n_new, n_original), columns follow topological order
    threshold: float
    records: list | None = None

    @property
    def n_kept(self) -> int:
        return len(self.kept_ids)


class DagRnnVAE(BaseEstimator):
    """Bidirectional DAG-RNN variational autoencoder for AD graphs.

    Parameters mirror :class:`ModelConfig`; see there for semantics.
    Fitted attributes: ``net_`` (the torch module), ``n_pad_`` (training
    pad width), ``history_`` (per-epoch loss rows) and ``best_val_loss_``.
    """

    def __init__(
        self,
        embed_dim: int = 6,
        gru_units: int = 64,
        musigma_hidden: int = 32,
        latent_dim: int = 32,
        decoder_hidden: tuple[int, ...] = (64, 64, 32),
        edge_threshold: float = 0.2,
        focal_alpha: float = 0.25,
        focal_gamma: float = 2.0,
        kl_free_bits: float = 4.0,
        lr_initial: float = 1e-3,
        lr_decay_rate: float = 0.96,
        lr_decay_steps: int = 1000,
        batch_size: int = 32,
        epochs: int = 50,
        seed: int = 0,
    ):
        self.embed_dim = embed_dim
        self.gru_units = gru_units
        self.musigma_hidden = musigma_hidden
        self.latent_dim = latent_dim
        self.decoder_hidden = decoder_hidden
        self.edge_threshold = edge_threshold
        self.focal_alpha = focal_alpha
        self.focal_gamma = focal_gamma
        self.kl_free_bits = kl_free_bits
        self.lr_initial = lr_initial
        self.lr_decay_rate = lr_decay_rate
        self.lr_decay_steps = lr_decay_steps
        self.batch_size = batch_size
        self.epochs = epochs
        self.seed = seed

    # -- configuration ---------------------------------------------------

    def make_config(self) -> ModelConfig:
        return ModelConfig(
            embed_dim=self.embed_dim,
            gru_units=self.gru_units,
            musigma_hidden=self.musigma_hidden,
            latent_dim=self.latent_dim,
            decoder_hidden=tuple(self.decoder_hidden),
            edge_threshold=self.edge_threshold,
            focal_alpha=self.focal_alpha,
            focal_gamma=self.focal_gamma,
            kl_free_bits=self.kl_free_bits,
            lr_initial=self.lr_initial,
            lr_decay_rate=self.lr_decay_rate,
            lr_decay_steps=self.lr_decay_steps,
            batch_size=self.batch_size,
            epochs=self.epochs,
            seed=self.seed,
        )

    # -- training ----------------------------------------------------------

    def fit(self, X: Dataset | Sequence[ADGraph], y=None, resume: bool = False) -> "DagRnnVAE":
        """Train on the train split of ``X`` (a Dataset or a plain graph list).

        A plain list trains on everything with no validation; a Dataset
        uses its split labels. ``resume=True`` continues from the current
        ``net_`` weights instead of reinitializing.
        """
        train_graphs, val_graphs, n_pad = _resolve_training_data(X)
        if not train_graphs:
            raise ValueError("no training graphs in the provided data")
        config = self.make_config()
        torch.manual_seed(config.seed)

        if resume and hasattr(self, "net_"):
            _check_same_architecture(self.net_.config, config)
            net = self.net_
        else:
            net = DagRnnVaeNet(config)
        self.net_ = net
        self.n_pad_ = n_pad

        train = _pack(train_graphs, n_pad, net)
        val = _pack(val_graphs, n_pad, net) if val_graphs else None

        optimizer = torch.optim.Adam(net.parameters(), lr=config.lr_initial)
        scheduler = torch.optim.lr_scheduler.LambdaLR(
            optimizer, lambda step: config.lr_decay_rate ** (step / config.lr_decay_steps)
        )
        noise_gen = torch.Generator().manual_seed(config.seed + 1)
        shuffle_rng = np.random.default_rng(config.seed + 2)

        n_train = train["type_idx"].shape[0]
        history: list[dict[str, float]] = []
        best_val = math.inf
        best_state = None

        for epoch in range(config.epochs):
            net.train()
            perm = shuffle_rng.permutation(n_train)
            sums = {"loss": 0.0, "focal": 0.0, "kl": 0.0}
            for start in range(0, n_train, config.batch_size):
                idx = torch.from_numpy(perm[start : start + config.batch_size].copy())
                batch = {k: v[idx] for k, v in train.items()}
                noise = torch.randn(
                    batch["mask"].shape[0],
                    n_pad,
                    config.latent_dim,
                    generator=noise_gen,
                    dtype=batch["adj"].dtype,
                )
                scores, enc = net.reconstruction_scores(
                    batch["type_idx"], batch["adj"], batch["adj_t"], batch["mask"], noise=noise
                )
                focal = focal_loss(
                    batch["adj"], scores, batch["mask"], config.focal_alpha, config.focal_gamma
                )
                kl = kl_divergence(enc["mu"], enc["sigma"], batch["mask"])
                per_graph = total_loss(focal, kl, batch["n_real"], config.latent_dim)
                # Optimize with the free-bits floor (otherwise the latent
                # collapses and score rows flatten); history still records
                # the plain compound loss.
                loss = total_loss(
                    focal,
                    kl.clamp(min=config.kl_free_bits),
                    batch["n_real"],
                    config.latent_dim,
                ).mean()
                if not torch.isfinite(loss):
                    raise TrainingDivergedError(
                        f"non-finite loss at epoch {epoch + 1}, batch starting at {start}"
                    )
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                scheduler.step()
                sums["loss"] += float(per_graph.detach().sum())
                sums["focal"] += float(focal.detach().sum())
                sums["kl"] += float(kl.detach().sum())

            row = {
                "epoch": epoch + 1,
                "train_loss": sums["loss"] / n_train,
                "train_focal": sums["focal"] / n_train,
                "train_kl": sums["kl"] / n_train,
                "val_loss": math.nan,
            }
            if val is not None:
                row["val_loss"] = _evaluation_loss(net, val, config)
                if row["val_loss"] < best_val:
                    best_val = row["val_loss"]
                    best_state = copy.deepcopy(net.state_dict())
            history.append(row)

        if best_state is not None:
            net.load_state_dict(best_state)
        self.history_ = history
        self.best_val_loss_ = best_val if best_state is not None else math.nan
        return self

    # -- single-graph inference ---------------------------------------------

    def encode(
        self,
        graph: ADGraph,
        rng: np.random.Generator | None = None,
        noise: np.ndarray | None = None,
    ) -> EncodeResult:
        """Encoder outputs for one graph.

        ``noise`` (or a generator drawing it) drives the reparameterized
        sample z = mu + sigma * noise; by default z equals mu.
        """
        check_is_fitted(self, "net_")
        tensors = to_matrices(graph, len(graph))
        packed = _pack_one(tensors, self.net_)
        if noise is None and rng is not None:
            noise = rng.standard_normal((tensors.n_pad, self.latent_dim))
        noise_t = None
        if noise is not None:
            noise_t = torch.as_tensor(
                np.asarray(noise, dtype=np.float64), dtype=packed["adj"].dtype
            ).reshape(1, tensors.n_pad, self.latent_dim)
        with torch.no_grad():
            enc = self.net_.encode(
                packed["type_idx"], packed["adj"], packed["adj_t"], packed["mask"], noise=noise_t
            )
        return EncodeResult(
            order=tensors.order,
            n=tensors.n,
            h=enc["h"][0].numpy(),
            h_fwd=enc["h_fwd"][0].numpy(),
            h_bwd=enc["h_bwd"][0].numpy(),
            mu=enc["mu"][0].numpy(),
            sigma=enc["sigma"][0].numpy(),
            z=enc["z"][0].numpy(),
        )

    def reconstruct(self, graph: ADGraph) -> np.ndarray:
        """Edge probability matrix (n, n); row i, column j scores edge j -> i.

        Rows follow the topological order; only the strictly lower triangle
        is meaningful. Uses the posterior mean (no sampling).
        """
        check_is_fitted(self, "net_")
        tensors = to_matrices(graph, len(graph))
        packed = _pack_one(tensors, self.net_)
        with torch.no_grad():
            scores, _ = self.net_.reconstruction_scores(
                packed["type_idx"], packed["adj"], packed["adj_t"], packed["mask"]
            )
        return scores[0].numpy()

    def predict(self, graph: ADGraph) -> np.ndarray:
        """Binary reconstructed adjacency at the configured edge threshold."""
        scores = self.reconstruct(graph)
        binary = (scores >= self.edge_threshold).astype(np.int8)
        return np.tril(binary, k=-1)

    def score(self, X: Dataset | Sequence[ADGraph], y=None) -> float:
        """Pooled edge-reconstruction F1 over the given graphs (test split of a Dataset)."""
        from .. import evaluation

        graphs = X.test_graphs if isinstance(X, Dataset) else tuple(X)
        counts = evaluation.pooled_confusion(self, graphs)
        return evaluation.prf1(counts)[2]

    def extend(
        self,
        graph: ADGraph,
        n_new: int = 5,
        rng: np.random.Generator | None = None,
        latent_source: str = "prior",
    ) -> ExtensionResult:
        """Place ``n_new`` honeyuser sinks on ``graph``.

        Latent rows are drawn from the standard Normal prior (or, with
        ``latent_source="posterior"``, from a Gaussian aggregating the
        per-node posterior parameters); the decoder scores them against
        every original node and edges at or above the threshold survive.
        Candidates with no surviving edge are discarded.
        """
        check_is_fitted(self, "net_")
        if n_new < 1:
            raise ValueError(f"n_new must be >= 1, got {n_new}")
        if latent_source not in ("prior", "posterior"):
            raise ValueError(f"unknown latent_source {latent_source!r}")
        if rng is None:
            rng = np.random.default_rng(self.seed)

        enc = self.encode(graph)
        eps = rng.standard_normal((n_new, self.latent_dim))
        if latent_source == "prior":
            z_new = eps
        else:
            real = slice(0, enc.n)
            z_new = enc.mu[real].mean(axis=0) + enc.sigma[real].mean(axis=0) * eps

        dtype = next(self.net_.parameters()).dtype
        with torch.no_grad():
            scores = self.net_.decode(
                torch.as_tensor(z_new, dtype=dtype).unsqueeze(0),
                torch.as_tensor(enc.h[: enc.n], dtype=dtype).unsqueeze(0),
            )[0].numpy()

        outcome: ExtensionOutcome = from_extension(
            graph, [NodeType.USER] * n_new, scores, self.edge_threshold
        )
        return ExtensionResult(
            graph=outcome.graph,
            kept_ids=outcome.kept_ids,
            discarded_ids=outcome.discarded_ids,
            added_edges=outcome.added_edges,
            scores=scores,
            threshold=self.edge_threshold,
        )

    # -- persistence -------------------------------------------------------

    def save(self, path: str | Path) -> Path:
        """Write a single-file checkpoint (npz with named parameter arrays)."""
        check_is_fitted(self, "net_")
        path = Path(path)
        meta = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "config": self.net_.config.to_dict(),
        }
        arrays = named_arrays(self.net_)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "DagRnnVAE":
        """Rebuild a fitted estimator from :meth:`save` output."""
        try:
            with np.load(Path(path), allow_pickle=False) as npz:
                meta = json.loads(str(npz["meta"][()]))
                arrays = {k: npz[k] for k in npz.files if k != "meta"}
        except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
            raise MalformedInputError(f"cannot read checkpoint {path}: {exc}") from exc
        if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise MalformedInputError(
                f"unsupported checkpoint format version {meta.get('format_version')!r}"
            )
        config = ModelConfig.from_dict(meta["config"])
        est = cls(**config.to_dict())
        est.net_ = DagRnnVaeNet(config)
        load_arrays(est.net_, arrays)
        est.history_ = []
        est.best_val_loss_ = math.nan
        return est


def write_history_csv(history: Iterable[dict[str, float]], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["epoch", "train_loss", "train_focal", "train_kl", "val_loss"]
        )
        writer.writeheader()
        for row in history:
            writer.writerow(row)
    return path


# -- helpers -----------------------------------------------------------------

def _resolve_training_data(
    X: Dataset | Sequence[ADGraph],
) -> tuple[tuple[ADGraph, ...], tuple[ADGraph, ...], int]:
    if isinstance(X, Dataset):
        return X.train_graphs, X.validation_graphs, X.max_nodes
    graphs = tuple(X)
    if not graphs:
        raise ValueError("no graphs provided")
    return graphs, (), max(len(g) for g in graphs)


def _check_same_architecture(old: ModelConfig, new: ModelConfig) -> None:
    arch_fields = ("embed_dim", "gru_units", "musigma_hidden", "latent_dim", "decoder_hidden")
    for name in arch_fields:
        if getattr(old, name) != getattr(new, name):
            raise ValueError(
                f"cannot resume: architecture field {name} changed "
                f"({getattr(old, name)} -> {getattr(new, name)})"
            )


def _pack(graphs: Sequence[ADGraph], n_pad: int, net: DagRnnVaeNet) -> dict[str, torch.Tensor]:
    dtype = next(net.parameters()).dtype
    tensors = [to_matrices(g, n_pad) for g in graphs]
    return {
        "type_idx": torch.from_numpy(np.stack([t.type_indices for t in tensors])),
        "adj": torch.from_numpy(np.stack([t.adj for t in tensors])).to(dtype),
        "adj_t": torch.from_numpy(np.stack([t.adj_t for t in tensors])).to(dtype),
        "mask": torch.from_numpy(np.stack([t.mask for t in tensors])).to(dtype),
        "n_real": torch.tensor([t.n for t in tensors], dtype=torch.int64),
    }


def _pack_one(tensors: GraphTensors, net: DagRnnVaeNet) -> dict[str, torch.Tensor]:
    dtype = next(net.parameters()).dtype
    return {
        "type_idx": torch.from_numpy(tensors.type_indices[None, :].copy()),
        "adj": torch.from_numpy(tensors.adj[None, :, :].copy()).to(dtype),
        "adj_t": torch.from_numpy(tensors.adj_t[None, :, :].copy()).to(dtype),
        "mask": torch.from_numpy(tensors.mask[None, :].copy()).to(dtype),
    }


def _evaluation_loss(
    net: DagRnnVaeNet, packed: dict[str, torch.Tensor], config: ModelConfig
) -> float:
    """Deterministic (posterior-mean) compound loss over a packed split."""
    net.eval()
    n = packed["type_idx"].shape[0]
    totals = 0.0
    with torch.no_grad():
        for start in range(0, n, config.batch_size):
            batch = {k: v[start : start + config.batch_size] for k, v in packed.items()}
            scores, enc = net.reconstruction_scores(
                batch["type_idx"], batch["adj"], batch["adj_t"], batch["mask"]
            )
            focal = focal_loss(
                batch["adj"], scores, batch["mask"], config.focal_alpha, config.focal_gamma
            )
            kl = kl_divergence(enc["mu"], enc["sigma"], batch["mask"])
            totals += float(total_loss(focal, kl, batch["n_real"], config.latent_dim).sum())
    return totals / n
