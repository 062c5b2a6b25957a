"""Bidirectional DAG-RNN variational autoencoder network.

The encoder walks the nodes in topological order; the recurrent state fed
into each GRU step is the sum of the hidden states of the node's direct
predecessors, selected by the matching adjacency-matrix row. A second GRU
walks the transposed graph in reverse order, and the two directional state
matrices are summed. Per-node mean and scale MLPs parametrize a diagonal
Gaussian over the latent space; the decoder scores node pairs
(latent-of-target, hidden-of-source) with an MLP ending in a sigmoid.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import Tensor, nn

from ..schema import NUM_NODE_TYPES
from .config import ModelConfig

_GATES = ("update", "reset", "candidate")


class GruCell(nn.Module):
    """GRU cell with separate per-gate parameters.

    Convention: the update gate retains the previous state,
    ``h' = u * h + (1 - u) * candidate``.
    """

    def __init__(self, input_dim: int, units: int):
        super().__init__()
        self.input_dim = input_dim
        self.units = units
        for gate in _GATES:
            self.register_parameter(f"w_{gate}", nn.Parameter(torch.empty(input_dim, units)))
            self.register_parameter(f"u_{gate}", nn.Parameter(torch.empty(units, units)))
            self.register_parameter(f"b_{gate}", nn.Parameter(torch.zeros(units)))
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for gate in _GATES:
            nn.init.xavier_uniform_(getattr(self, f"w_{gate}"))
            nn.init.xavier_uniform_(getattr(self, f"u_{gate}"))
            nn.init.zeros_(getattr(self, f"b_{gate}"))

    def forward(self, x: Tensor, h: Tensor) -> Tensor:
        update = torch.sigmoid(x @ self.w_update + h @ self.u_update + self.b_update)
        reset = torch.sigmoid(x @ self.w_reset + h @ self.u_reset + self.b_reset)
        candidate = torch.tanh(x @ self.w_candidate + (reset * h) @ self.u_candidate + self.b_candidate)
        return update * h + (1.0 - update) * candidate


class Mlp(nn.Module):
    """Dense stack with ReLU between layers; the final layer stays linear."""

    def __init__(self, widths: tuple[int, ...], zero_output: bool = False):
        super().__init__()
        if len(widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        self.layers = nn.ModuleList(
            nn.Linear(widths[i], widths[i + 1]) for i in range(len(widths) - 1)
        )
        self.zero_output = zero_output
        self.reset_parameters()

    def reset_parameters(self) -> None:
        for layer in self.layers:
            nn.init.xavier_uniform_(layer.weight)
            nn.init.zeros_(layer.bias)
        if self.zero_output:
            nn.init.zeros_(self.layers[-1].weight)

    def forward(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = torch.relu(layer(x))
        return self.layers[-1](x)


class DagRnnVaeNet(nn.Module):
    """Encoder/decoder pair operating on padded graph tensors.

    All methods accept batched inputs: ``type_idx`` (B, n_pad) int64,
    ``adj``/``adj_t`` (B, n_pad, n_pad) and ``mask`` (B, n_pad) float.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.embedding = nn.Parameter(torch.empty(NUM_NODE_TYPES, config.embed_dim))
        self.gru_fwd = GruCell(config.embed_dim, config.gru_units)
        self.gru_bwd = GruCell(config.embed_dim, config.gru_units)
        self.mlp_mu = Mlp((config.gru_units, config.musigma_hidden, config.latent_dim))
        self.mlp_sigma = Mlp(
            (config.gru_units, config.musigma_hidden, config.latent_dim), zero_output=True
        )
        self.decoder = Mlp(
            (config.latent_dim + config.gru_units, *config.decoder_hidden, 1)
        )
        nn.init.xavier_uniform_(self.embedding)

    def embed(self, type_idx: Tensor, mask: Tensor) -> Tensor:
        """Look up type embeddings; padded rows come out all-zero."""
        if type_idx.min() < 0 or type_idx.max() >= self.embedding.shape[0]:
            raise IndexError("node-type index out of range")
        return nn.functional.embedding(type_idx, self.embedding) * mask.unsqueeze(-1)

    def direction(
        self, x_embed: Tensor, adj: Tensor, mask: Tensor, cell: GruCell, reverse: bool = False
    ) -> Tensor:
        """One directional recurrent pass; returns the (B, n_pad, units) state matrix.

        ``adj`` row i selects the already-processed neighbors whose states
        are summed into the recurrent input for node i. The forward pass
        needs a strictly lower-triangular matrix, the reverse pass the
        strictly upper-triangular transpose.
        """
        n_pad = x_embed.shape[1]
        bad = torch.triu(adj, diagonal=0) if not reverse else torch.tril(adj, diagonal=0)
        if bad.abs().sum() > 0:
            raise ValueError("adjacency matrix is not strictly triangular for this direction")

        batch = x_embed.shape[0]
        zero = x_embed.new_zeros(batch, cell.units)
        rows: list[Tensor] = [zero] * n_pad
        steps = range(n_pad - 1, -1, -1) if reverse else range(n_pad)
        for t in steps:
            if reverse:
                done = rows[t + 1 :]
                weights = adj[:, t : t + 1, t + 1 :]
            else:
                done = rows[:t]
                weights = adj[:, t : t + 1, :t]
            if done:
                prev = torch.bmm(weights, torch.stack(done, dim=1)).squeeze(1)
            else:
                prev = zero
            rows[t] = cell(x_embed[:, t], prev) * mask[:, t : t + 1]
        return torch.stack(rows, dim=1)

    def encode(
        self,
        type_idx: Tensor,
        adj: Tensor,
        adj_t: Tensor,
        mask: Tensor,
        noise: Tensor | None = None,
    ) -> dict[str, Tensor]:
        """Full encoder pass; ``noise`` of latent shape drives reparameterization.

        ``noise=None`` means no sampling (z equals mu).
        """
        x_embed = self.embed(type_idx, mask)
        h_fwd = self.direction(x_embed, adj, mask, self.gru_fwd)
        h_bwd = self.direction(x_embed, adj_t, mask, self.gru_bwd, reverse=True)
        h = h_fwd + h_bwd
        expanded = mask.unsqueeze(-1)
        mu = self.mlp_mu(h) * expanded
        # clamp guards against softplus underflow when training blows up
        sigma = nn.functional.softplus(self.mlp_sigma(h)).clamp(min=1e-6) * expanded
        z = mu if noise is None else (mu + sigma * noise) * expanded
        return {"h": h, "h_fwd": h_fwd, "h_bwd": h_bwd, "mu": mu, "sigma": sigma, "z": z}

    def decode(self, z_rows: Tensor, h_rows: Tensor) -> Tensor:
        """Edge scores for the Cartesian product of latent and hidden rows.

        ``z_rows`` (B, k, latent) are the candidate targets, ``h_rows``
        (B, n, units) the potential sources; the result is (B, k, n) of
        sigmoid probabilities.
        """
        b, k, _ = z_rows.shape
        n = h_rows.shape[1]
        zz = z_rows.unsqueeze(2).expand(b, k, n, z_rows.shape[-1])
        hh = h_rows.unsqueeze(1).expand(b, k, n, h_rows.shape[-1])
        pairs = torch.cat([zz, hh], dim=-1)
        logits = self.decoder(pairs.reshape(b * k * n, -1))
        return torch.sigmoid(logits).reshape(b, k, n)

    def reconstruction_scores(
        self,
        type_idx: Tensor,
        adj: Tensor,
        adj_t: Tensor,
        mask: Tensor,
        noise: Tensor | None = None,
    ) -> tuple[Tensor, dict[str, Tensor]]:
        """Scores for every ordered node pair, plus the encoder outputs."""
        enc = self.encode(type_idx, adj, adj_t, mask, noise=noise)
        return self.decode(enc["z"], enc["h"]), enc


def named_arrays(net: DagRnnVaeNet) -> dict[str, np.ndarray]:
    """Flat name -> array view of all parameters, stable across versions."""
    out: dict[str, np.ndarray] = {"embedding": net.embedding.detach().cpu().numpy()}
    for prefix, cell in (("gru_fwd", net.gru_fwd), ("gru_bwd", net.gru_bwd)):
        for gate in _GATES:
            for kind in ("w", "u", "b"):
                out[f"{prefix}.{gate}.{kind}"] = (
                    getattr(cell, f"{kind}_{gate}").detach().cpu().numpy()
                )
    for prefix, mlp in (
        ("mlp_mu", net.mlp_mu),
        ("mlp_sigma", net.mlp_sigma),
        ("decoder", net.decoder),
    ):
        for i, layer in enumerate(mlp.layers):
            out[f"{prefix}.{i}.w"] = layer.weight.detach().cpu().numpy()
            out[f"{prefix}.{i}.b"] = layer.bias.detach().cpu().numpy()
    return out


def load_arrays(net: DagRnnVaeNet, arrays: dict[str, np.ndarray]) -> None:
    """Copy checkpoint arrays into ``net``, verifying shapes."""
    expected = named_arrays(net)
    missing = sorted(set(expected) - set(arrays))
    if missing:
        raise ValueError(f"checkpoint is missing parameters: {missing}")
    with torch.no_grad():
        tensors = dict(net.named_parameters())
        mapping = _parameter_name_map(net)
        for name, value in arrays.items():
            if name not in mapping:
                continue
            param = tensors[mapping[name]]
            value = np.asarray(value)
            if tuple(param.shape) != value.shape:
                raise ValueError(
                    f"parameter {name} has shape {value.shape}, expected {tuple(param.shape)}"
                )
            param.copy_(torch.from_numpy(value.copy()).to(param.dtype))


def _parameter_name_map(net: DagRnnVaeNet) -> dict[str, str]:
    """Checkpoint key -> torch parameter name."""
    mapping = {"embedding": "embedding"}
    for prefix in ("gru_fwd", "gru_bwd"):
        for gate in _GATES:
            for kind in ("w", "u", "b"):
                mapping[f"{prefix}.{gate}.{kind}"] = f"{prefix}.{kind}_{gate}"
    for prefix in ("mlp_mu", "mlp_sigma", "decoder"):
        mlp: Mlp = getattr(net, prefix)
        for i in range(len(mlp.layers)):
            mapping[f"{prefix}.{i}.w"] = f"{prefix}.layers.{i}.weight"
            mapping[f"{prefix}.{i}.b"] = f"{prefix}.layers.{i}.bias"
    return mapping
