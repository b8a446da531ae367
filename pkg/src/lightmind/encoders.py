"""Graph encoder (basis-decomposed R-GCN with highway gates), hashed n-gram text
encoder, and the bi-directional attention aggregator."""
from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import MLP, ParamStore


class DimensionMismatch(ValueError):
    pass


_WORD_RE = re.compile(r"[a-z0-9']+")


def words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


@lru_cache(maxsize=200_000)
def bucket_of(token: str, n_buckets: int, seed: int) -> int:
    digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8,
                             key=seed.to_bytes(8, "little")).digest()
    return int.from_bytes(digest, "little") % n_buckets


@dataclass
class TextEncoding:
    pooled: Tensor   # [d]
    tokens: Tensor   # [T, d]

    @property
    def n_tokens(self) -> int:
        return self.tokens.shape[0]


class HashedTextEncoder:
    """Bag of hashed unigrams and bigrams, mean-pooled, then a two-layer MLP.

    Per-token vectors are the unigram bucket embeddings.  An empty input
    encodes to exact zeros.
    """

    def __init__(self, store: ParamStore, dim: int = 64, n_buckets: int = 4096, max_tokens: int = 64,
                 hash_seed: int = 0, name: str = "text"):
        self.dim, self.n_buckets, self.max_tokens, self.hash_seed = dim, n_buckets, max_tokens, hash_seed
        self.table = store.create(f"{name}.emb", (n_buckets, dim), init="normal", scale=0.3)
        self.mlp = MLP(store, f"{name}.mlp", dim, dim, dim, acts=("tanh", "none"))

    def bucket_ids(self, tokens: list[str]) -> tuple[list[int], list[int]]:
        tokens = tokens[-self.max_tokens:]
        uni = [bucket_of(t, self.n_buckets, self.hash_seed) for t in tokens]
        bi = [bucket_of(f"{a} {b}", self.n_buckets, self.hash_seed) for a, b in zip(tokens, tokens[1:])]
        return uni, bi

    def encode(self, tokens: list[str] | str) -> TextEncoding:
        if isinstance(tokens, str):
            tokens = words(tokens)
        uni, bi = self.bucket_ids(tokens)
        if not uni:
            return TextEncoding(Tensor(np.zeros(self.dim)), Tensor(np.zeros((0, self.dim))))
        rows = self.table[np.array(uni + bi)]
        pooled = self.mlp(rows.mean(axis=0))
        return TextEncoding(pooled, rows[0:len(uni)])

    def encode_many(self, texts: list[list[str] | str], raw: bool = False) -> Tensor:
        """Pooled encodings of several texts as a [k, d] matrix in one gather.

        With ``raw`` the mean bucket embeddings are returned without the MLP.
        """
        ids, weights, rows_of = [], [], []
        empty = []
        for i, toks in enumerate(texts):
            if isinstance(toks, str):
                toks = words(toks)
            uni, bi = self.bucket_ids(toks)
            allb = uni + bi
            if not allb:
                empty.append(i)
                continue
            for b in allb:
                ids.append(b)
                rows_of.append(i)
                weights.append(1.0 / len(allb))
        k = len(texts)
        if not ids:
            return Tensor(np.zeros((k, self.dim)))
        avg = np.zeros((k, len(ids)))
        avg[rows_of, np.arange(len(ids))] = weights
        pooled = Tensor(avg) @ self.table[np.array(ids)]
        if raw:
            return pooled
        pooled = self.mlp(pooled)
        if empty:
            keep = np.ones((k, 1))
            keep[empty] = 0.0
            pooled = pooled * keep
        return pooled


class RGCN:
    """Relational graph convolution with basis decomposition and highway gates.

    Per layer: ``h'_i = tanh(sum_r sum_j A[r, j, i] W_r h_j + W_0 h_i)`` with
    ``W_r = sum_b a[r, b] B_b``, then ``h <- g * h' + (1 - g) * h`` where
    ``g = sigmoid(W_g h + b_g)``.
    """

    def __init__(self, store: ParamStore, dim: int = 64, n_relations: int = 8, layers: int = 6,
                 bases: int = 3, name: str = "rgcn"):
        self.dim, self.n_relations, self.n_layers, self.n_bases = dim, n_relations, layers, bases
        self.layers = []
        for l in range(layers):
            p = f"{name}.{l}"
            self.layers.append({
                "bases": store.create(f"{p}.bases", (dim, bases * dim), scale=0.5),
                "coef": store.create(f"{p}.coef", (n_relations, bases), init="normal", scale=0.5),
                "self": store.create(f"{p}.self", (dim, dim)),
                "gate_w": store.create(f"{p}.gate_w", (dim, dim)),
                "gate_b": store.create(f"{p}.gate_b", (dim,), init="zeros"),
            })

    @staticmethod
    def params_per_layer(dim: int, n_relations: int, bases: int) -> int:
        return bases * dim * dim + n_relations * bases + dim * dim + (dim * dim + dim)

    def __call__(self, features: Tensor, adjacency) -> tuple[Tensor, Tensor]:
        """Return (node embeddings [n, d], pooled graph vector [d])."""
        A = ad.as_tensor(adjacency)
        n = features.shape[0]
        if features.ndim != 2 or features.shape[1] != self.dim:
            raise DimensionMismatch(f"node features {features.shape}, expected (n, {self.dim})")
        if A.shape != (self.n_relations, n, n):
            raise DimensionMismatch(f"adjacency {A.shape}, expected ({self.n_relations}, {n}, {n})")
        R, B, d = self.n_relations, self.n_bases, self.dim
        # C_b = sum_r a[r, b] A_r^T, shared by every layer's coefficients
        A_flat = A.reshape(R, n * n)
        h = features
        for layer in self.layers:
            C = (layer["coef"].T @ A_flat).reshape(B, n, n)
            C = ad.transpose(C, (0, 2, 1))
            hb = ad.transpose((h @ layer["bases"]).reshape(n, B, d), (1, 0, 2))
            msg = (C @ hb).sum(axis=0)
            h_new = ad.tanh(msg + h @ layer["self"])
            g = ad.sigmoid(h @ layer["gate_w"] + layer["gate_b"])
            h = g * h_new + (1.0 - g) * h
        return h, h.mean(axis=0)


class BiAttention:
    """BiDAF-style fusion of graph nodes and text tokens into a [4d] vector.

    ``S[i, j] = w . [g_i ; t_j ; g_i * t_j]``.  Each token attends over nodes
    (softmax over i) giving attended graph vectors; each node attends over
    tokens (softmax over j) giving attended text vectors.  The fused vector is
    ``[mean(t) ; mean(g_att) ; mean(t) * mean(g_att) ; mean(t_att)]``.
    With no tokens the attended graph summary falls back to the node mean and
    the text parts are zero.
    """

    def __init__(self, store: ParamStore, dim: int = 64, name: str = "biatt"):
        self.dim = dim
        self.w_g = store.create(f"{name}.w_g", (dim,), init="normal", scale=0.1)
        self.w_t = store.create(f"{name}.w_t", (dim,), init="normal", scale=0.1)
        self.w_gt = store.create(f"{name}.w_gt", (dim,), init="normal", scale=0.1)

    def similarity(self, G: Tensor, T: Tensor) -> Tensor:
        sg = (G @ self.w_g).reshape(-1, 1)
        st = (T @ self.w_t).reshape(1, -1)
        return sg + st + (G * self.w_gt) @ T.T

    def attention(self, G: Tensor, T: Tensor) -> tuple[Tensor, Tensor]:
        """(token->node weights [T, n], node->token weights [n, T])."""
        S = self.similarity(G, T)
        return ad.softmax(S.T, axis=1), ad.softmax(S, axis=1)

    def __call__(self, G: Tensor, T: Tensor) -> Tensor:
        d = self.dim
        if G.ndim != 2 or G.shape[1] != d or T.ndim != 2 or T.shape[1] != d:
            raise DimensionMismatch(f"graph {G.shape} / text {T.shape}, expected (*, {d})")
        if T.shape[0] == 0:
            zero = Tensor(np.zeros(d))
            return ad.concat([zero, G.mean(axis=0), zero, zero])
        a_tg, a_gt = self.attention(G, T)
        g_att = a_tg @ G          # [T, d]
        t_att = a_gt @ T          # [n, d]
        t_mean = T.mean(axis=0)
        g_mean = g_att.mean(axis=0)
        return ad.concat([t_mean, g_mean, t_mean * g_mean, t_att.mean(axis=0)])
