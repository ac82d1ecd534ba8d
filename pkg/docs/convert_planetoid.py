#!/usr/bin/env python3
"""Convert the raw Planetoid Cora files into a graphcl dataset bundle.

The acceptance tests that need Cora look for a bundle at ``data/cora``
(or ``$GRAPHCL_CORA``). This machine-independent script builds that
bundle from the eight raw Planetoid files::

    ind.cora.x  ind.cora.y  ind.cora.tx  ind.cora.ty
    ind.cora.allx  ind.cora.ally  ind.cora.graph  ind.cora.test.index

Download them on a networked machine from
https://github.com/kimiyoung/planetoid/tree/master/data and run::

    python3 docs/convert_planetoid.py --raw-dir /path/to/planetoid/data \
        --out data/cora

The public split is preserved: train = the 140 labelled nodes, val = the
next 500, test = the 1000 held-out nodes listed in ``test.index``.
"""

import argparse
import pickle
import sys
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from graphcl.graph import GraphBundle, edges_to_adjacency, save_bundle


def load_pickle(path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def build_bundle(raw_dir, name="cora"):
    raw_dir = Path(raw_dir)

    def part(suffix):
        return raw_dir / f"ind.{name}.{suffix}"

    x, tx, allx = (sp.csr_matrix(load_pickle(part(s))) for s in ("x", "tx", "allx"))
    y, ty, ally = (np.asarray(load_pickle(part(s))) for s in ("y", "ty", "ally"))
    graph = load_pickle(part("graph"))
    test_idx = np.loadtxt(part("test.index"), dtype=np.int64)

    n = allx.shape[0] + tx.shape[0]
    features = sp.vstack([allx, tx]).toarray().astype(np.float32)
    onehot = np.vstack([ally, ty])
    # the raw test rows are shuffled; put them back at their node ids
    order = np.arange(n)
    order[test_idx] = np.arange(allx.shape[0], n)
    features = features[order]
    labels = onehot[order].argmax(axis=1).astype(np.int64)

    pairs = set()
    for src, nbrs in graph.items():
        for dst in nbrs:
            if src == dst:
                continue
            pairs.add((min(src, dst), max(src, dst)))
    edges = np.array(sorted(pairs), dtype=np.int64)
    adjacency = edges_to_adjacency(edges[:, 0], edges[:, 1], n)

    n_train = x.shape[0]
    return GraphBundle(
        n_nodes=n,
        feature_dim=features.shape[1],
        n_classes=int(labels.max()) + 1,
        adjacency=adjacency,
        features=features,
        labels=labels,
        train_idx=np.arange(n_train, dtype=np.int64),
        val_idx=np.arange(n_train, n_train + 500, dtype=np.int64),
        test_idx=np.sort(test_idx),
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--raw-dir", required=True,
                        help="directory with the ind.cora.* files")
    parser.add_argument("--out", required=True, help="bundle output directory")
    parser.add_argument("--name", default="cora")
    args = parser.parse_args()
    bundle = build_bundle(args.raw_dir, args.name)
    save_bundle(bundle, args.out)
    print(
        f"wrote {args.out}: {bundle.n_nodes} nodes, "
        f"{bundle.n_edges_undirected} undirected edges, "
        f"{bundle.feature_dim} features, {bundle.n_classes} classes"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
