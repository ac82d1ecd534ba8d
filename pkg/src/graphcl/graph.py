"""Graph data model: on-disk bundles, GCN normalization, edge noise, SBM fixtures.

A bundle directory holds a transductive node-classification dataset as plain
files (see `save_bundle` for the layout). In memory the adjacency is a
symmetric scipy CSR matrix with no stored self-loops; undirected edges appear
in both directions.
"""

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .seeding import PERTURB, SBM, derive_rng


class LoadError(ValueError):
    """A bundle directory failed validation while loading."""


class CapacityError(ValueError):
    """The graph has too few absent node pairs for the requested perturbation."""


@dataclass
class GraphBundle:
    n_nodes: int
    feature_dim: int
    n_classes: int
    adjacency: sp.csr_matrix  # symmetric, no self-loops
    features: np.ndarray      # (n_nodes, feature_dim) float32
    labels: np.ndarray        # (n_nodes,) int
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray

    @property
    def n_edges_undirected(self):
        return int(self.adjacency.nnz // 2)

    @property
    def n_edges_directed(self):
        return int(self.adjacency.nnz)


def _undirected_pairs(adj):
    """(src, dst) arrays with src < dst, one entry per undirected edge."""
    coo = adj.tocoo()
    keep = coo.row < coo.col
    return coo.row[keep], coo.col[keep]


def edges_to_adjacency(src, dst, n_nodes):
    """Symmetric CSR from undirected edge lists (src < dst), collapsing duplicates."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    data = np.ones(rows.size, dtype=np.float64)
    adj = sp.coo_matrix((data, (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()
    adj.data[:] = 1.0  # collapse duplicates
    return adj


def load_bundle(path):
    """Read and validate a bundle directory. Raises LoadError on any defect."""
    path = Path(path)
    if not path.is_dir():
        raise LoadError(f"not a directory: {path}")
    meta_path = path / "meta.txt"
    if not meta_path.is_file():
        raise LoadError("missing meta.txt")
    meta = {}
    for line in meta_path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise LoadError(f"malformed meta line: {line!r}")
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    try:
        n_nodes = int(meta["n_nodes"])
        n_edges_directed = int(meta["n_edges_directed"])
        feature_dim = int(meta["feature_dim"])
        n_classes = int(meta["n_classes"])
    except KeyError as e:
        raise LoadError(f"meta.txt missing key {e}") from None

    edges_path = path / "edges.tsv"
    if not edges_path.is_file():
        raise LoadError("missing edges.tsv")
    src, dst = [], []
    for ln, line in enumerate(edges_path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise LoadError(f"edges.tsv line {ln}: expected src<TAB>dst")
        a, b = int(parts[0]), int(parts[1])
        if a == b:
            raise LoadError(f"edges.tsv line {ln}: self-loop {a}")
        if a > b:
            raise LoadError(f"edges.tsv line {ln}: edge not stored with src < dst")
        if not (0 <= a < n_nodes and 0 <= b < n_nodes):
            raise LoadError(f"edges.tsv line {ln}: node index out of range")
        src.append(a)
        dst.append(b)
    adjacency = edges_to_adjacency(src, dst, n_nodes)

    bin_path = path / "features.bin"
    tsv_path = path / "features.tsv"
    if bin_path.is_file():
        features = read_matrix_bin(bin_path)
    elif tsv_path.is_file():
        features = np.loadtxt(tsv_path, delimiter="\t", dtype=np.float32, ndmin=2)
    else:
        raise LoadError("missing features.bin / features.tsv")
    if features.shape != (n_nodes, feature_dim):
        raise LoadError(f"features shape {features.shape} != ({n_nodes}, {feature_dim})")
    if not np.all(np.isfinite(features)):
        raise LoadError("non-finite feature value")

    labels_path = path / "labels.tsv"
    if not labels_path.is_file():
        raise LoadError("missing labels.tsv")
    labels = np.loadtxt(labels_path, dtype=np.int64, ndmin=1)
    if labels.shape != (n_nodes,):
        raise LoadError(f"labels length {labels.shape[0]} != n_nodes {n_nodes}")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise LoadError(f"label outside [0, {n_classes})")

    splits = []
    for name in ("train.idx", "val.idx", "test.idx"):
        p = path / name
        if not p.is_file():
            raise LoadError(f"missing {name}")
        text = p.read_text().split()
        idx = np.array([int(t) for t in text], dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n_nodes):
            raise LoadError(f"{name}: index out of range")
        splits.append(idx)
    train_idx, val_idx, test_idx = splits
    seen = set()
    for name, idx in zip(("train", "val", "test"), splits):
        s = set(idx.tolist())
        if len(s) != idx.size:
            raise LoadError(f"{name} split has duplicate indices")
        if seen & s:
            raise LoadError(f"{name} split overlaps another split")
        seen |= s

    g = GraphBundle(
        n_nodes=n_nodes,
        feature_dim=feature_dim,
        n_classes=n_classes,
        adjacency=adjacency,
        features=features.astype(np.float32),
        labels=labels,
        train_idx=train_idx,
        val_idx=val_idx,
        test_idx=test_idx,
    )
    if g.n_edges_directed != n_edges_directed:
        raise LoadError(
            f"meta n_edges_directed={n_edges_directed} but adjacency has {g.n_edges_directed}"
        )
    return g


def save_bundle(g, path):
    """Write a bundle directory (features stored in the binary layout)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "meta.txt").write_text(
        f"n_nodes = {g.n_nodes}\n"
        f"n_edges_directed = {g.n_edges_directed}\n"
        f"feature_dim = {g.feature_dim}\n"
        f"n_classes = {g.n_classes}\n"
    )
    src, dst = _undirected_pairs(g.adjacency)
    order = np.lexsort((dst, src))
    lines = [f"{s}\t{d}" for s, d in zip(src[order], dst[order])]
    (path / "edges.tsv").write_text("\n".join(lines) + ("\n" if lines else ""))
    write_matrix_bin(path / "features.bin", g.features)
    (path / "labels.tsv").write_text("\n".join(str(l) for l in g.labels) + "\n")
    for name, idx in (("train.idx", g.train_idx), ("val.idx", g.val_idx), ("test.idx", g.test_idx)):
        (path / name).write_text("\n".join(str(i) for i in idx) + ("\n" if idx.size else ""))


def read_matrix_bin(path):
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise LoadError(f"{path}: truncated header")
    rows, cols = struct.unpack("<QQ", raw[:16])
    expect = 16 + rows * cols * 4
    if len(raw) != expect:
        raise LoadError(f"{path}: expected {expect} bytes, got {len(raw)}")
    return np.frombuffer(raw[16:], dtype="<f4").reshape(rows, cols).copy()


def write_matrix_bin(path, matrix):
    matrix = np.asarray(matrix, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QQ", matrix.shape[0], matrix.shape[1]))
        fh.write(matrix.tobytes(order="C"))


def normalize_adjacency(adj):
    """GCN propagation matrix: D^{-1/2} (A + I) D^{-1/2}, symmetric CSR."""
    n = adj.shape[0]
    a_tilde = (adj + sp.identity(n, format="csr", dtype=np.float64)).tocsr()
    deg = np.asarray(a_tilde.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(inv_sqrt)
    return (d @ a_tilde @ d).tocsr()


def perturb_edges(adj, p, seed):
    """Add exactly floor(|A| * p) random absent undirected edges (no loops).

    |A| counts undirected edges. Existing edges are never touched; added
    edges are sampled uniformly without replacement from the absent pairs.
    """
    n = adj.shape[0]
    n_edges = adj.nnz // 2
    n_add = int(np.floor(n_edges * p))
    if n_add == 0:
        return adj.copy()
    total_pairs = n * (n - 1) // 2
    absent = total_pairs - n_edges
    if n_add > absent:
        raise CapacityError(f"need {n_add} absent pairs, only {absent} available")
    rng = derive_rng(seed, PERTURB)
    existing = set()
    src, dst = _undirected_pairs(adj)
    for a, b in zip(src.tolist(), dst.tolist()):
        existing.add((a, b))
    chosen = set()
    if absent <= 4 * n_add or n <= 64:
        # small slack: enumerate all absent pairs and choose exactly
        pool = [
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if (i, j) not in existing
        ]
        picks = rng.choice(len(pool), size=n_add, replace=False)
        chosen = {pool[k] for k in picks}
    else:
        while len(chosen) < n_add:
            i = int(rng.integers(0, n))
            j = int(rng.integers(0, n))
            if i == j:
                continue
            pair = (i, j) if i < j else (j, i)
            if pair in existing or pair in chosen:
                continue
            chosen.add(pair)
    add_src = np.array([a for a, _ in chosen], dtype=np.int64)
    add_dst = np.array([b for _, b in chosen], dtype=np.int64)
    new_src = np.concatenate([src, add_src])
    new_dst = np.concatenate([dst, add_dst])
    return edges_to_adjacency(new_src, new_dst, n)


def generate_sbm(block_sizes, p_in, p_out, class_mean_shift, noise_std, seed):
    """Stochastic block model test fixture with class-informative features.

    Features are the one-hot class mean scaled by `class_mean_shift` plus
    iid Gaussian noise; splits are a stratified 1:1:8 partition per class.
    """
    if not block_sizes:
        raise ValueError("block_sizes must be nonempty")
    if not (0.0 <= p_in <= 1.0 and 0.0 <= p_out <= 1.0):
        raise ValueError("edge probabilities must lie in [0, 1]")
    rng = derive_rng(seed, SBM)
    block_sizes = [int(b) for b in block_sizes]
    n = sum(block_sizes)
    k = len(block_sizes)
    labels = np.repeat(np.arange(k), block_sizes)
    starts = np.cumsum([0] + block_sizes)

    src_list, dst_list = [], []
    for bi in range(k):
        for bj in range(bi, k):
            prob = p_in if bi == bj else p_out
            if prob <= 0.0:
                continue
            lo_i, hi_i = starts[bi], starts[bi + 1]
            lo_j, hi_j = starts[bj], starts[bj + 1]
            draws = rng.random((hi_i - lo_i, hi_j - lo_j)) < prob
            ii, jj = np.nonzero(draws)
            ii = ii + lo_i
            jj = jj + lo_j
            if bi == bj:
                keep = ii < jj
                ii, jj = ii[keep], jj[keep]
            src_list.append(ii)
            dst_list.append(jj)
    if src_list:
        src = np.concatenate(src_list)
        dst = np.concatenate(dst_list)
    else:
        src = np.empty(0, dtype=np.int64)
        dst = np.empty(0, dtype=np.int64)
    adjacency = edges_to_adjacency(src, dst, n)

    features = np.zeros((n, k), dtype=np.float64)
    features[np.arange(n), labels] = class_mean_shift
    if noise_std > 0:
        features += rng.normal(0.0, noise_std, size=(n, k))
    features = features.astype(np.float32)

    train, val, test = [], [], []
    for c in range(k):
        members = np.nonzero(labels == c)[0]
        members = rng.permutation(members)
        nc = members.size
        n_tr = max(1, int(round(nc * 0.1)))
        n_va = max(1, int(round(nc * 0.1)))
        train.extend(members[:n_tr])
        val.extend(members[n_tr:n_tr + n_va])
        test.extend(members[n_tr + n_va:])
    return GraphBundle(
        n_nodes=n,
        feature_dim=k,
        n_classes=k,
        adjacency=adjacency,
        features=features,
        labels=labels,
        train_idx=np.array(sorted(train), dtype=np.int64),
        val_idx=np.array(sorted(val), dtype=np.int64),
        test_idx=np.array(sorted(test), dtype=np.int64),
    )


def validate_bundle(g):
    """List of invariant violations; empty means the bundle is valid."""
    problems = []
    adj = g.adjacency
    if adj.shape != (g.n_nodes, g.n_nodes):
        problems.append("adjacency shape does not match n_nodes")
    else:
        if (adj != adj.T).nnz != 0:
            problems.append("adjacency is not symmetric")
        if adj.diagonal().sum() != 0:
            problems.append("adjacency stores self-loops")
    if g.features.shape != (g.n_nodes, g.feature_dim):
        problems.append("feature matrix shape mismatch")
    elif not np.all(np.isfinite(g.features)):
        problems.append("non-finite feature value")
    if g.labels.shape != (g.n_nodes,):
        problems.append("labels length mismatch")
    elif g.labels.size and (g.labels.min() < 0 or g.labels.max() >= g.n_classes):
        problems.append("label outside class range")
    seen = set()
    for name, idx in (("train", g.train_idx), ("val", g.val_idx), ("test", g.test_idx)):
        s = set(np.asarray(idx).tolist())
        if len(s) != len(idx):
            problems.append(f"{name} split contains duplicates")
        if idx.size and (np.min(idx) < 0 or np.max(idx) >= g.n_nodes):
            problems.append(f"{name} split index out of range")
        if seen & s:
            problems.append(f"{name} split overlaps another split")
        seen |= s
    return problems
