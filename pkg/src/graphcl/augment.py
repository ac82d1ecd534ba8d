"""Stochastic graph views: per-edge dropping and per-element feature masking."""

from dataclasses import dataclass

import numpy as np

from .graph import _undirected_pairs, edges_to_adjacency, normalize_adjacency
from .seeding import AUGMENT, derive_rng


@dataclass
class AugmentConfig:
    p_e: float = 0.0  # edge drop rate
    p_f: float = 0.0  # feature mask rate

    def __post_init__(self):
        if not (0.0 <= self.p_e <= 1.0 and 0.0 <= self.p_f <= 1.0):
            raise ValueError("augmentation rates must lie in [0, 1]")


@dataclass
class ViewPair:
    features1: np.ndarray
    adj_norm1: object  # scipy CSR
    features2: np.ndarray
    adj_norm2: object


def drop_edges(adj, p_e, rng):
    """One Bernoulli draw per undirected edge; both directions share its fate."""
    src, dst = _undirected_pairs(adj)
    keep = rng.random(src.size) >= p_e
    return edges_to_adjacency(src[keep], dst[keep], adj.shape[0])


def mask_features(x, p_f, rng):
    """Zero each matrix entry independently with probability p_f."""
    mask = rng.random(x.shape) >= p_f
    return x * mask.astype(x.dtype)


def make_views(g, cfg, seed, epoch=0):
    """Two fresh stochastic views of the graph, each normalized for GCN use.

    The two views draw from distinct streams derived from (seed, epoch), so a
    repeated call with the same arguments reproduces the pair exactly.
    """
    views = []
    for view_id in (1, 2):
        rng = derive_rng(seed, f"{AUGMENT}-view{view_id}", epoch)
        feats = mask_features(g.features, cfg.p_f, rng)
        adj = drop_edges(g.adjacency, cfg.p_e, rng)
        views.append((feats, normalize_adjacency(adj)))
    (f1, a1), (f2, a2) = views
    return ViewPair(features1=f1, adj_norm1=a1, features2=f2, adj_norm2=a2)
