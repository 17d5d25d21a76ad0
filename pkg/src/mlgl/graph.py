"""Node embeddings, gated graph convolutions, fusion, and the full model.

Node layout is fixed everywhere: fine event nodes keep their taxonomy
order, coarse nodes theirs, and the annoyance node comes last.  The
three local graphs are built by concatenating embedding blocks
(fine+annoyance, fine+coarse, coarse+annoyance); the global graph
concatenates the three fused sets in the same fine/coarse/annoyance
order.
"""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .backbone import Backbone
from .modules import Dropout, Linear, Module, ModuleList, kaiming_uniform
from .tensor import Tensor

FUSION_MODES = ("attention", "addition", "concat", "hadamard", "gating")


class NodeEmbedding(Module):
    """Per-node linear maps from a shared feature vector.

    Each node owns a (n_in, dim) weight slice, so perturbing node k's
    weights can only change row k of the output.
    """

    def __init__(self, n_nodes: int, n_in: int, dim: int, rng, dtype):
        super().__init__()
        self.n_nodes = n_nodes
        self.dim = dim
        self.weight = Tensor(kaiming_uniform(rng, (n_nodes, n_in, dim), n_in, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros((n_nodes, dim), dtype=dtype), requires_grad=True)

    def forward(self, feat: Tensor) -> Tensor:
        n = feat.shape[0]
        x = T.reshape(feat, (n, 1, 1, feat.shape[1]))
        out = T.matmul(x, self.weight)
        return T.add(T.reshape(out, (n, self.n_nodes, self.dim)), self.bias)


class HeadBlock(Module):
    """One scalar readout per node, each node with its own weight row."""

    def __init__(self, n_nodes: int, dim: int, rng, dtype):
        super().__init__()
        self.weight = Tensor(kaiming_uniform(rng, (n_nodes, dim), dim, dtype),
                             requires_grad=True)
        self.bias = Tensor(np.zeros(n_nodes, dtype=dtype), requires_grad=True)

    def forward(self, emb: Tensor) -> Tensor:
        return T.add(T.tsum(T.mul(emb, self.weight), axis=-1), self.bias)


class GatedGcnLayer(Module):
    """Dense edge-gated update on a fully connected graph without self-loops:

        eta_ij = sigmoid(A h_i + B h_j + c)
        h_i'   = relu(U h_i + b + mean_{j != i} eta_ij * V h_j) + h_i
    """

    def __init__(self, dim: int, rng, dtype):
        super().__init__()
        self.u = Tensor(kaiming_uniform(rng, (dim, dim), dim, dtype), requires_grad=True)
        self.v = Tensor(kaiming_uniform(rng, (dim, dim), dim, dtype), requires_grad=True)
        self.a = Tensor(kaiming_uniform(rng, (dim, dim), dim, dtype), requires_grad=True)
        self.b = Tensor(kaiming_uniform(rng, (dim, dim), dim, dtype), requires_grad=True)
        self.bias_u = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
        self.bias_g = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)

    def forward(self, h: Tensor) -> Tensor:
        n, nodes, dim = h.shape
        pre = T.add(T.matmul(h, self.u), self.bias_u)
        if nodes > 1:
            vh = T.matmul(h, self.v)
            ah = T.reshape(T.matmul(h, self.a), (n, nodes, 1, dim))
            bh = T.reshape(T.matmul(h, self.b), (n, 1, nodes, dim))
            gate = T.sigmoid(T.add(T.add(ah, bh), self.bias_g))
            msg = T.mul(gate, T.reshape(vh, (n, 1, nodes, dim)))
            mask = Tensor((1.0 - np.eye(nodes, dtype=h.dtype))[None, :, :, None])
            agg = T.mul(T.tsum(T.mul(msg, mask), axis=2), 1.0 / (nodes - 1))
            pre = T.add(pre, agg)
        return T.add(T.relu(pre), h)


class Gcn(Module):
    def __init__(self, dim: int, n_layers: int, dropout_p: float, rng, dtype):
        super().__init__()
        self.layers = ModuleList(GatedGcnLayer(dim, rng, dtype) for _ in range(n_layers))
        self.drops = ModuleList(Dropout(dropout_p) for _ in range(n_layers))

    def forward(self, h: Tensor, rng=None) -> Tensor:
        for layer, drop in zip(self.layers, self.drops):
            h = drop(layer(h), rng)
        return h


class Fusion(Module):
    """Combine two aligned node sets.  The first argument plays the query
    role, the second the key/value role; only concat and gating carry
    parameters of their own.
    """

    def __init__(self, mode: str, dim: int, rng, dtype,
                 attention_projections: bool = False,
                 gating_shared_bias: bool = True):
        super().__init__()
        if mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {mode!r}, expected one of {FUSION_MODES}")
        self.mode = mode
        self.dim = dim
        self.gating_shared_bias = gating_shared_bias
        object.__setattr__(self, "last_attention", None)
        if mode == "attention" and attention_projections:
            self.proj_q = Linear(dim, dim, rng, dtype)
            self.proj_k = Linear(dim, dim, rng, dtype)
        elif mode == "concat":
            self.lin = Linear(2 * dim, dim, rng, dtype)
        elif mode == "gating":
            self.w1 = Tensor(kaiming_uniform(rng, (dim, dim), dim, dtype), requires_grad=True)
            self.w2 = Tensor(kaiming_uniform(rng, (dim, dim), dim, dtype), requires_grad=True)
            self.b1 = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)
            if not gating_shared_bias:
                self.b2 = Tensor(np.zeros(dim, dtype=dtype), requires_grad=True)

    def forward(self, ev1: Tensor, ev2: Tensor) -> Tensor:
        if self.mode == "attention":
            q, k = ev1, ev2
            if hasattr(self, "proj_q"):
                q = self.proj_q(q)
                k = self.proj_k(k)
            scores = T.mul(T.matmul(q, T.swapaxes(k, -1, -2)), 1.0 / math.sqrt(self.dim))
            att = T.softmax(scores, axis=-1)
            object.__setattr__(self, "last_attention", att.data)
            return T.matmul(att, k)
        if self.mode == "addition":
            return T.add(ev1, ev2)
        if self.mode == "hadamard":
            return T.mul(ev1, ev2)
        if self.mode == "concat":
            return self.lin(T.concat([ev1, ev2], axis=-1))
        # gating: linear map of ev1 passed through a sigmoid gate of ev2;
        # by default the same bias vector appears in both branches
        b2 = self.b1 if self.gating_shared_bias else self.b2
        lin1 = T.add(T.matmul(ev1, self.w1), self.b1)
        lin2 = T.add(T.matmul(ev2, self.w2), b2)
        return T.mul(lin1, T.sigmoid(lin2))


class MlglModel(Module):
    """Three backbones, per-node embeddings, three local graphs, fusion,
    one global graph, and per-level readout heads.

    forward returns raw scores and probabilities for every level so the
    losses, the metrics and the analysis all read from one dict:
    keys l{1,2,3}_fae / l{1,2,3}_cae are sigmoid probabilities with
    matching *_logit entries, l{1,2,3}_ar are raw regression outputs,
    and h_fag / h_fcg / h_cag / h_global expose the graph states.
    """

    def __init__(self, n_fae: int, n_cae: int, rng, dtype,
                 channels: list[list[int]] | None = None,
                 embed_dim: int = 64, gcn_layers: int = 3,
                 dropout_p: float = 0.2, fusion_mode: str = "attention",
                 attention_projections: bool = False,
                 gating_shared_bias: bool = True):
        super().__init__()
        if channels is None:
            channels = [[64], [128], [256, 256]]
        self.n_fae = n_fae
        self.n_cae = n_cae
        self.embed_dim = embed_dim

        # construction order fixes the init draw order; keep it stable
        self.backbone_fae = Backbone(channels, rng, dtype)
        self.backbone_cae = Backbone(channels, rng, dtype)
        self.backbone_ar = Backbone(channels, rng, dtype)
        feat = self.backbone_fae.out_dim

        self.embed_fae = NodeEmbedding(n_fae, feat, embed_dim, rng, dtype)
        self.embed_cae = NodeEmbedding(n_cae, feat, embed_dim, rng, dtype)
        self.embed_ar = NodeEmbedding(1, feat, embed_dim, rng, dtype)
        self.drop_fae = Dropout(dropout_p)
        self.drop_cae = Dropout(dropout_p)
        self.drop_ar = Dropout(dropout_p)

        self.head1_fae = HeadBlock(n_fae, embed_dim, rng, dtype)
        self.head1_cae = HeadBlock(n_cae, embed_dim, rng, dtype)
        self.head1_ar = HeadBlock(1, embed_dim, rng, dtype)

        self.gcn_fag = Gcn(embed_dim, gcn_layers, dropout_p, rng, dtype)
        self.gcn_fcg = Gcn(embed_dim, gcn_layers, dropout_p, rng, dtype)
        self.gcn_cag = Gcn(embed_dim, gcn_layers, dropout_p, rng, dtype)

        self.fuse_fine = Fusion(fusion_mode, embed_dim, rng, dtype,
                                attention_projections, gating_shared_bias)
        self.fuse_coarse = Fusion(fusion_mode, embed_dim, rng, dtype,
                                  attention_projections, gating_shared_bias)
        self.fuse_ar = Fusion(fusion_mode, embed_dim, rng, dtype,
                              attention_projections, gating_shared_bias)

        self.head2_fae = HeadBlock(n_fae, embed_dim, rng, dtype)
        self.head2_cae = HeadBlock(n_cae, embed_dim, rng, dtype)
        self.head2_ar = HeadBlock(1, embed_dim, rng, dtype)

        self.gcn_global = Gcn(embed_dim, gcn_layers, dropout_p, rng, dtype)

        self.head3_fae = HeadBlock(n_fae, embed_dim, rng, dtype)
        self.head3_cae = HeadBlock(n_cae, embed_dim, rng, dtype)
        self.head3_ar = HeadBlock(1, embed_dim, rng, dtype)

    def forward(self, x: Tensor, rng=None) -> dict[str, Tensor]:
        nb = x.shape[0]
        nf, nc = self.n_fae, self.n_cae
        out: dict[str, Tensor] = {}

        e_f = self.drop_fae(self.embed_fae(self.backbone_fae(x)), rng)
        e_c = self.drop_cae(self.embed_cae(self.backbone_cae(x)), rng)
        e_a = self.drop_ar(self.embed_ar(self.backbone_ar(x)), rng)

        out["l1_fae_logit"] = self.head1_fae(e_f)
        out["l1_cae_logit"] = self.head1_cae(e_c)
        out["l1_fae"] = T.sigmoid(out["l1_fae_logit"])
        out["l1_cae"] = T.sigmoid(out["l1_cae_logit"])
        out["l1_ar"] = T.reshape(self.head1_ar(e_a), (nb,))

        h_fag = self.gcn_fag(T.concat([e_f, e_a], axis=1), rng)
        h_fcg = self.gcn_fcg(T.concat([e_f, e_c], axis=1), rng)
        h_cag = self.gcn_cag(T.concat([e_c, e_a], axis=1), rng)
        out["h_fag"], out["h_fcg"], out["h_cag"] = h_fag, h_fcg, h_cag

        fused_f = self.fuse_fine(T.narrow(h_fag, 1, 0, nf), T.narrow(h_fcg, 1, 0, nf))
        fused_c = self.fuse_coarse(T.narrow(h_cag, 1, 0, nc), T.narrow(h_fcg, 1, nf, nc))
        fused_a = self.fuse_ar(T.narrow(h_cag, 1, nc, 1), T.narrow(h_fag, 1, nf, 1))

        out["l2_fae_logit"] = self.head2_fae(fused_f)
        out["l2_cae_logit"] = self.head2_cae(fused_c)
        out["l2_fae"] = T.sigmoid(out["l2_fae_logit"])
        out["l2_cae"] = T.sigmoid(out["l2_cae_logit"])
        out["l2_ar"] = T.reshape(self.head2_ar(fused_a), (nb,))

        h_g = self.gcn_global(T.concat([fused_f, fused_c, fused_a], axis=1), rng)
        out["h_global"] = h_g

        out["l3_fae_logit"] = self.head3_fae(T.narrow(h_g, 1, 0, nf))
        out["l3_cae_logit"] = self.head3_cae(T.narrow(h_g, 1, nf, nc))
        out["l3_fae"] = T.sigmoid(out["l3_fae_logit"])
        out["l3_cae"] = T.sigmoid(out["l3_cae_logit"])
        out["l3_ar"] = T.reshape(self.head3_ar(T.narrow(h_g, 1, nf + nc, 1)), (nb,))
        return out
