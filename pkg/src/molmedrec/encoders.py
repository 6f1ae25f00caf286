"""Molecular backbones: a 2D graph isomorphism encoder and a 3D geometric
vector perceptron encoder, each pooling to a 128-dim molecule embedding.

Both encoders consume batched disjoint-union graphs so a whole corpus batch
is one tape pass. Single-molecule helpers wrap a batch of one.

Equivariance structure of the 3D path: scalar channels only ever see input
scalars and vector norms; vector channels are mixed by channel-linear maps
and gated by scalars. Pooled scalars are therefore invariant under rigid
rotation/translation of the input coordinates, which the tests assert.
"""

from __future__ import annotations

import numpy as np

from .autograd import Linear, MLP, Tensor, concat, matmul, scatter_add
from .chem import (
    ATOM_FIELD_SIZES,
    BOND_FIELD_SIZES,
    MolError,
    MolGraph2D,
    MolGraph3D,
    encode_atom_features,
    encode_bond_features,
)

__all__ = ["Batch2D", "Batch3D", "Gin2DEncoder", "GvpUnit", "Gvp3DEncoder",
           "gin_encode", "gvp_encode", "HIDDEN_DIM"]

HIDDEN_DIM = 128
GVP_VECTOR_DIM = 64
GVP_EDGE_SCALAR_DIM = 32
VECTOR_EPS = 1e-8


class Batch2D:
    """Disjoint union of 2D molecular graphs with encoded feature indices."""

    def __init__(self, mols: list[MolGraph2D]):
        if not mols:
            raise MolError("empty batch")
        if any(m.n_atoms == 0 for m in mols):
            raise MolError("cannot encode an empty graph")
        node_codes, edge_codes, src, dst, graph_id = [], [], [], [], []
        offset = 0
        for g, m in enumerate(mols):
            node_codes.append(encode_atom_features(m.node_features))
            graph_id.extend([g] * m.n_atoms)
            for b in m.bonds:
                code = encode_bond_features(
                    np.array([b.order_code(), b.stereo, int(b.conjugated)]))[0]
                for u, v in ((b.u, b.v), (b.v, b.u)):
                    src.append(offset + u)
                    dst.append(offset + v)
                    edge_codes.append(code)
            offset += m.n_atoms
        self.node_codes = np.concatenate(node_codes, axis=0)
        self.edge_codes = (np.stack(edge_codes) if edge_codes
                           else np.zeros((0, 3), dtype=np.int64))
        self.edge_src = np.array(src, dtype=np.intp)
        self.edge_dst = np.array(dst, dtype=np.intp)
        self.graph_id = np.array(graph_id, dtype=np.intp)
        self.n_nodes = offset
        self.n_graphs = len(mols)


class Batch3D:
    """Disjoint union of conformer graphs (radius edges, RBF, unit vectors)."""

    def __init__(self, graphs: list[MolGraph3D]):
        if not graphs:
            raise MolError("empty batch")
        if any(g.n_atoms == 0 for g in graphs):
            raise MolError("cannot encode an empty graph")
        node_codes, node_vec, rbf, evec, src, dst, graph_id = [], [], [], [], [], [], []
        offset = 0
        for g, gr in enumerate(graphs):
            node_codes.append(encode_atom_features(gr.node_scalar))
            node_vec.append(gr.node_vector)
            graph_id.extend([g] * gr.n_atoms)
            src.append(gr.edge_src + offset)
            dst.append(gr.edge_dst + offset)
            rbf.append(gr.edge_scalar)
            evec.append(gr.edge_vector)
            offset += gr.n_atoms
        self.node_codes = np.concatenate(node_codes, axis=0)
        self.node_vector = np.concatenate(node_vec, axis=0)
        self.edge_src = np.concatenate(src).astype(np.intp)
        self.edge_dst = np.concatenate(dst).astype(np.intp)
        self.edge_rbf = np.concatenate(rbf, axis=0)
        self.edge_vector = np.concatenate(evec, axis=0)
        self.graph_id = np.array(graph_id, dtype=np.intp)
        self.n_nodes = offset
        self.n_graphs = len(graphs)
        counts = np.bincount(self.edge_dst, minlength=self.n_nodes).astype(np.float64)
        counts[counts == 0] = 1.0  # empty neighborhood mean defined as zero
        self.inv_degree = 1.0 / counts


class _FieldEmbedding:
    """Sum of per-field codebook embeddings, one table per feature column."""

    def __init__(self, rng, sizes: tuple[int, ...], dim: int):
        self.tables = [Tensor(rng.normal(scale=0.1, size=(s, dim)),
                              requires_grad=True) for s in sizes]

    def __call__(self, codes: np.ndarray) -> Tensor:
        total = self.tables[0][codes[:, 0]]
        for f in range(1, len(self.tables)):
            total = total + self.tables[f][codes[:, f]]
        return total

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        return {f"{prefix}.field{f}": t for f, t in enumerate(self.tables)}


class Gin2DEncoder:
    """4 message-passing layers with learnable epsilon and edge features,
    sum readout, linear map to the 128-dim molecule embedding."""

    def __init__(self, rng: np.random.Generator, n_layers: int = 4,
                 dim: int = HIDDEN_DIM):
        self.n_layers = n_layers
        self.dim = dim
        self.node_embed = _FieldEmbedding(rng, ATOM_FIELD_SIZES, dim)
        self.edge_embed = _FieldEmbedding(rng, BOND_FIELD_SIZES, dim)
        self.eps = [Tensor(0.0, requires_grad=True) for _ in range(n_layers)]
        self.mlps = [MLP(rng, dim, dim, dim) for _ in range(n_layers)]
        self.readout = Linear(rng, dim, dim)

    def encode(self, batch: Batch2D) -> Tensor:
        h = self.node_embed(batch.node_codes)
        edge = self.edge_embed(batch.edge_codes) if len(batch.edge_codes) \
            else Tensor(np.zeros((0, self.dim)))
        for k in range(self.n_layers):
            msg = (h[batch.edge_src] + edge).relu()
            agg = scatter_add(msg, batch.edge_dst, batch.n_nodes)
            h = self.mlps[k]((1.0 + self.eps[k]) * h + agg)
        pooled = scatter_add(h, batch.graph_id, batch.n_graphs)
        return self.readout(pooled)

    def parameters(self, prefix: str = "gin") -> dict[str, Tensor]:
        out = self.node_embed.parameters(f"{prefix}.node_embed")
        out.update(self.edge_embed.parameters(f"{prefix}.edge_embed"))
        for k in range(self.n_layers):
            out[f"{prefix}.layer{k}.eps"] = self.eps[k]
            out.update(self.mlps[k].parameters(f"{prefix}.layer{k}.mlp"))
        out.update(self.readout.parameters(f"{prefix}.readout"))
        return out


def gin_encode(mol: MolGraph2D, enc: Gin2DEncoder) -> Tensor:
    """128-dim embedding of one molecule."""
    return enc.encode(Batch2D([mol])).reshape(enc.dim)


def _channel_mix(v: Tensor, w: Tensor) -> Tensor:
    # v: (N, C_in, 3), w: (C_in, C_out) -> (N, C_out, 3); spatial axis untouched.
    # Flattened to one 2D matmul: batched 3D matmul against a shared weight
    # would materialize a per-row outer product in the backward pass.
    n, c_in, _ = v.shape
    c_out = w.shape[1]
    flat = v.swapaxes(1, 2).reshape(n * 3, c_in)
    return matmul(flat, w).reshape(n, 3, c_out).swapaxes(1, 2)


class GvpUnit:
    """One geometric vector perceptron: channel-linear vector maps, scalar
    path fed by vector norms, sigmoid vector gating from the scalar output."""

    def __init__(self, rng, in_s: int, in_v: int, out_s: int, out_v: int,
                 scalar_act: bool = True):
        hidden_v = max(in_v, out_v)
        bound_h = np.sqrt(6.0 / (in_v + hidden_v))
        bound_v = np.sqrt(6.0 / (hidden_v + out_v))
        self.wh = Tensor(rng.uniform(-bound_h, bound_h, (in_v, hidden_v)),
                         requires_grad=True)
        self.wv = Tensor(rng.uniform(-bound_v, bound_v, (hidden_v, out_v)),
                         requires_grad=True)
        self.ws = Linear(rng, in_s + hidden_v, out_s)
        self.gate = Linear(rng, out_s, out_v)
        self.scalar_act = scalar_act

    def __call__(self, s: Tensor, v: Tensor) -> tuple[Tensor, Tensor]:
        vh = _channel_mix(v, self.wh)
        norms = ((vh * vh).sum(axis=2) + VECTOR_EPS).sqrt()
        s_out = self.ws(concat([s, norms], axis=1))
        if self.scalar_act:
            s_out = s_out.relu()
        vu = _channel_mix(vh, self.wv)
        g = self.gate(s_out).sigmoid()
        n, c = g.shape
        return s_out, vu * g.reshape(n, c, 1)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {f"{prefix}.wh": self.wh, f"{prefix}.wv": self.wv}
        out.update(self.ws.parameters(f"{prefix}.ws"))
        out.update(self.gate.parameters(f"{prefix}.gate"))
        return out


class _GvpStack:
    def __init__(self, rng, in_s, in_v, out_s, out_v, depth=3):
        dims = [(in_s, in_v)] + [(out_s, out_v)] * depth
        self.units = [GvpUnit(rng, dims[i][0], dims[i][1], dims[i + 1][0], dims[i + 1][1])
                      for i in range(depth)]

    def __call__(self, s, v):
        for unit in self.units:
            s, v = unit(s, v)
        return s, v

    def parameters(self, prefix):
        out = {}
        for i, u in enumerate(self.units):
            out.update(u.parameters(f"{prefix}.unit{i}"))
        return out


class Gvp3DEncoder:
    """3 residual message-passing blocks, each built from two sequences of
    three geometric vector perceptrons (message and update), mean-aggregated
    over radius-graph neighbors; global additive pooling of node scalars."""

    def __init__(self, rng: np.random.Generator, n_layers: int = 3,
                 dim: int = HIDDEN_DIM, vec_dim: int = GVP_VECTOR_DIM):
        self.n_layers = n_layers
        self.dim = dim
        self.vec_dim = vec_dim
        self.node_embed = _FieldEmbedding(rng, ATOM_FIELD_SIZES, dim)
        self.edge_scalar = Linear(rng, 16, GVP_EDGE_SCALAR_DIM)
        self.input_unit = GvpUnit(rng, dim, 1, dim, vec_dim)
        es = GVP_EDGE_SCALAR_DIM
        self.msg = [_GvpStack(rng, dim + es, vec_dim + 1, dim, vec_dim)
                    for _ in range(n_layers)]
        self.upd = [_GvpStack(rng, dim, vec_dim, dim, vec_dim)
                    for _ in range(n_layers)]
        self.readout = Linear(rng, dim, dim)

    def encode(self, batch: Batch3D) -> Tensor:
        s, v = self.input_unit(self.node_embed(batch.node_codes),
                               Tensor(batch.node_vector))
        es = self.edge_scalar(Tensor(batch.edge_rbf))
        ev = Tensor(batch.edge_vector)
        inv = batch.inv_degree
        for layer in range(self.n_layers):
            ms = concat([s[batch.edge_src], es], axis=1)
            mv = concat([v[batch.edge_src], ev], axis=1)
            ms, mv = self.msg[layer](ms, mv)
            agg_s = scatter_add(ms, batch.edge_dst, batch.n_nodes) * inv[:, None]
            agg_v = scatter_add(mv, batch.edge_dst, batch.n_nodes) * inv[:, None, None]
            ds, dv = self.upd[layer](s + agg_s, v + agg_v)
            s = s + ds
            v = v + dv
        pooled = scatter_add(s, batch.graph_id, batch.n_graphs)
        return self.readout(pooled)

    def parameters(self, prefix: str = "gvp") -> dict[str, Tensor]:
        out = self.node_embed.parameters(f"{prefix}.node_embed")
        out.update(self.edge_scalar.parameters(f"{prefix}.edge_scalar"))
        out.update(self.input_unit.parameters(f"{prefix}.input"))
        for k in range(self.n_layers):
            out.update(self.msg[k].parameters(f"{prefix}.layer{k}.msg"))
            out.update(self.upd[k].parameters(f"{prefix}.layer{k}.upd"))
        out.update(self.readout.parameters(f"{prefix}.readout"))
        return out


def gvp_encode(graph: MolGraph3D, enc: Gvp3DEncoder) -> Tensor:
    """128-dim rotation/translation-invariant embedding of one conformer."""
    return enc.encode(Batch3D([graph])).reshape(enc.dim)
