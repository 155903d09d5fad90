"""Graph convolution layers and the seed classifier built from them.

All four layer families operate on a node feature matrix ``x`` (N, d) and a
directed ``edge_index`` (2, E) whose columns are (source, target) pairs.
Callers pass both directions of every undirected edge; self loops are each
layer's own business.  Implemented with index_add/scatter primitives so the
only hard dependency is torch itself.
"""

from __future__ import annotations

import torch
from torch import Tensor, nn

MODEL_NAMES = ("gcn", "sage", "gat", "gin")

HIDDEN = 256
LAYERS = 2
DROPOUT = 0.1
GAT_HEADS = 8


def _with_self_loops(edge_index: Tensor, n: int) -> Tensor:
    loops = torch.arange(n, device=edge_index.device)
    loops = torch.stack([loops, loops])
    return torch.cat([edge_index, loops], dim=1)


class GCNLayer(nn.Module):
    """Symmetric-normalized aggregation: D^-1/2 (A + I) D^-1/2 X W."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.lin = nn.Linear(in_dim, out_dim)

    def forward(self, x: Tensor, edge_index: Tensor) -> Tensor:
        n = x.shape[0]
        ei = _with_self_loops(edge_index, n)
        src, dst = ei[0], ei[1]
        deg = torch.zeros(n, device=x.device)
        deg.index_add_(0, dst, torch.ones_like(dst, dtype=deg.dtype))
        inv_sqrt = deg.pow(-0.5)
        coef = (inv_sqrt[src] * inv_sqrt[dst]).unsqueeze(1)
        h = self.lin(x)
        out = torch.zeros_like(h)
        out.index_add_(0, dst, coef * h[src])
        return out


class SageLayer(nn.Module):
    """Mean-of-neighbors aggregation plus a separate root transform."""

    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.lin_root = nn.Linear(in_dim, out_dim)
        self.lin_neigh = nn.Linear(in_dim, out_dim, bias=False)

    def forward(self, x: Tensor, edge_index: Tensor) -> Tensor:
        n = x.shape[0]
        src, dst = edge_index[0], edge_index[1]
        agg = torch.zeros_like(x)
        agg.index_add_(0, dst, x[src])
        deg = torch.zeros(n, device=x.device)
        deg.index_add_(0, dst, torch.ones_like(dst, dtype=deg.dtype))
        agg = agg / deg.clamp(min=1).unsqueeze(1)
        return self.lin_root(x) + self.lin_neigh(agg)


class GATLayer(nn.Module):
    """Multi-head additive attention over in-edges, heads concatenated.

    out_dim must divide evenly by heads; each head attends in an
    out_dim/heads subspace and the head outputs are concatenated back.
    """

    def __init__(self, in_dim: int, out_dim: int, heads: int = GAT_HEADS):
        super().__init__()
        if out_dim % heads:
            raise ValueError(f"out_dim {out_dim} not divisible by {heads} heads")
        self.heads = heads
        self.dim = out_dim // heads
        self.lin = nn.Linear(in_dim, out_dim, bias=False)
        self.att_src = nn.Parameter(torch.empty(heads, self.dim))
        self.att_dst = nn.Parameter(torch.empty(heads, self.dim))
        self.bias = nn.Parameter(torch.zeros(out_dim))
        nn.init.xavier_uniform_(self.att_src)
        nn.init.xavier_uniform_(self.att_dst)

    def forward(self, x: Tensor, edge_index: Tensor) -> Tensor:
        n = x.shape[0]
        ei = _with_self_loops(edge_index, n)
        src, dst = ei[0], ei[1]
        h = self.lin(x).view(n, self.heads, self.dim)
        alpha_src = (h * self.att_src).sum(dim=2)        # (N, H)
        alpha_dst = (h * self.att_dst).sum(dim=2)
        logits = nn.functional.leaky_relu(
            alpha_src[src] + alpha_dst[dst], negative_slope=0.2)  # (E, H)
        # Softmax grouped by destination: subtract the per-dst max before
        # exponentiating, otherwise big graphs overflow.
        peak = torch.full((n, self.heads), float("-inf"), device=x.device)
        peak.scatter_reduce_(0, dst.unsqueeze(1).expand_as(logits), logits,
                             reduce="amax", include_self=False)
        expo = torch.exp(logits - peak[dst])
        denom = torch.zeros(n, self.heads, device=x.device)
        denom.index_add_(0, dst, expo)
        alpha = expo / denom[dst]
        out = torch.zeros(n, self.heads, self.dim, device=x.device)
        out.index_add_(0, dst, alpha.unsqueeze(2) * h[src])
        return out.reshape(n, self.heads * self.dim) + self.bias


class GINLayer(nn.Module):
    """Sum aggregation mapped through a two-layer perceptron."""

    def __init__(self, in_dim: int, out_dim: int, mlp_hidden: int = HIDDEN):
        super().__init__()
        self.eps = nn.Parameter(torch.zeros(1))
        self.mlp = nn.Sequential(
            nn.Linear(in_dim, mlp_hidden),
            nn.ReLU(),
            nn.Linear(mlp_hidden, out_dim),
        )

    def forward(self, x: Tensor, edge_index: Tensor) -> Tensor:
        src, dst = edge_index[0], edge_index[1]
        agg = torch.zeros_like(x)
        agg.index_add_(0, dst, x[src])
        return self.mlp((1.0 + self.eps) * x + agg)


_LAYER_FACTORY = {
    "gcn": GCNLayer,
    "sage": SageLayer,
    "gat": GATLayer,
    "gin": GINLayer,
}


class SeedClassifier(nn.Module):
    """Two graph layers, ReLU, dropout, then a linear head on seed rows.

    The forward pass embeds every node of the (batched) graph but only the
    rows named by ``seed_rows`` reach the classification head: one logit
    vector per seed entity.
    """

    def __init__(self, model: str, in_dim: int, n_classes: int,
                 hidden: int = HIDDEN, layers: int = LAYERS,
                 dropout: float = DROPOUT, heads: int = GAT_HEADS):
        super().__init__()
        if model not in _LAYER_FACTORY:
            raise ValueError(f"unknown model {model!r}, expected one of "
                             f"{MODEL_NAMES}")
        if layers < 1:
            raise ValueError("need at least one layer")
        self.model = model
        factory = _LAYER_FACTORY[model]
        dims = [in_dim] + [hidden] * layers
        if model == "gat":
            convs = [factory(a, b, heads) for a, b in zip(dims, dims[1:])]
        else:
            convs = [factory(a, b) for a, b in zip(dims, dims[1:])]
        self.convs = nn.ModuleList(convs)
        self.drop = nn.Dropout(dropout)
        self.head = nn.Linear(hidden, n_classes)

    def forward(self, x: Tensor, edge_index: Tensor,
                seed_rows: Tensor) -> Tensor:
        h = x
        for conv in self.convs:
            h = self.drop(torch.relu(conv(h, edge_index)))
        return self.head(h[seed_rows])
