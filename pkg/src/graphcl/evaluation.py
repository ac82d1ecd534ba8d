"""Second-stage evaluation: linear probe, alignment/uniformity, clustering scores."""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from scipy.special import logsumexp

from .objective import Adam
from .seeding import PROBE, derive_rng


class DegenerateError(ValueError):
    """Input too degenerate for the metric to be defined."""


@dataclass
class ProbeConfig:
    lr2: float = 5e-3
    wd2: float = 1e-4
    probe_epochs: int = 300
    patience: int = 30

    def __post_init__(self):
        if self.lr2 <= 0 or self.probe_epochs < 1 or self.patience < 1:
            raise ValueError("probe hyperparameters must be positive")


class _Param:
    # bare holder so the shared Adam can update plain arrays
    def __init__(self, data):
        self.data = data


def _softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def linear_probe(embeddings, labels, splits, cfg=None, seed=0):
    """Multinomial logistic regression on frozen embeddings.

    Full-batch Adam on the train split, early stopping on validation
    accuracy, test accuracy reported with the best validation weights.
    Returns (test_accuracy, (W, b)).
    """
    cfg = cfg or ProbeConfig()
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] == 0:
        raise DegenerateError("embeddings must be a nonempty 2-D matrix")
    if not np.all(np.isfinite(x)):
        raise DegenerateError("non-finite embedding value")
    labels = np.asarray(labels, dtype=np.int64)
    train_idx, val_idx, test_idx = (np.asarray(s, dtype=np.int64) for s in splits)
    if np.unique(labels[train_idx]).size < 2:
        raise DegenerateError("train split covers fewer than 2 classes")
    k = int(labels.max()) + 1
    f = x.shape[1]
    rng = derive_rng(seed, PROBE)
    w = _Param(rng.normal(0.0, 0.01, size=(f, k)))
    b = _Param(np.zeros((1, k)))
    opt = Adam([w, b])
    x_tr, y_tr = x[train_idx], labels[train_idx]
    onehot = np.eye(k)[y_tr]
    n_tr = x_tr.shape[0]

    def accuracy(idx):
        if idx.size == 0:
            return 0.0
        pred = np.argmax(x[idx] @ w.data + b.data, axis=1)
        return float(np.mean(pred == labels[idx]))

    best_val, best_w, best_b, stall = -1.0, w.data.copy(), b.data.copy(), 0
    for _ in range(cfg.probe_epochs):
        probs = _softmax(x_tr @ w.data + b.data)
        delta = (probs - onehot) / n_tr
        opt.step([x_tr.T @ delta, delta.sum(axis=0, keepdims=True)], cfg.lr2, cfg.wd2)
        val_acc = accuracy(val_idx)
        if val_acc > best_val:
            best_val, best_w, best_b, stall = val_acc, w.data.copy(), b.data.copy(), 0
        else:
            if val_acc == best_val:
                # prefer the most-trained weights among validation ties
                best_w, best_b = w.data.copy(), b.data.copy()
            stall += 1
            if stall >= cfg.patience:
                break
    w.data, b.data = best_w, best_b
    return accuracy(test_idx), (best_w, best_b)


def alignment(u, v, alpha=2.0):
    """Mean ||u_i - v_i||^alpha over matched (positive-pair) rows."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    d = np.linalg.norm(u - v, axis=1)
    return float(np.mean(d ** alpha))


def uniformity(e, t=2.0):
    """log mean_{i != j} exp(-t ||x_i - x_j||^2), stably via log-sum-exp."""
    e = np.asarray(e, dtype=np.float64)
    n = e.shape[0]
    if n < 2:
        raise DegenerateError("uniformity needs at least 2 rows")
    sq = cdist(e, e, "sqeuclidean")
    off = ~np.eye(n, dtype=bool)
    return float(logsumexp(-t * sq[off]) - np.log(n * (n - 1)))


def _class_groups(labels):
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise DegenerateError("clustering scores need at least 2 classes")
    return classes, [np.nonzero(labels == c)[0] for c in classes]


def silhouette(e, labels):
    """Mean silhouette coefficient; singleton-cluster nodes contribute 0."""
    e = np.asarray(e, dtype=np.float64)
    classes, groups = _class_groups(labels)
    dist = cdist(e, e)
    n = e.shape[0]
    scores = np.zeros(n)
    for gi, members in enumerate(groups):
        size = members.size
        for i in members:
            if size == 1:
                continue  # singleton convention: 0
            a = dist[i, members].sum() / (size - 1)
            b = min(
                dist[i, other].mean()
                for gj, other in enumerate(groups)
                if gj != gi
            )
            denom = max(a, b)
            scores[i] = (b - a) / denom if denom > 0 else 0.0
    return float(scores.mean())


def davies_bouldin(e, labels):
    """Average worst-pair cluster similarity (S_i + S_j) / M_ij."""
    e = np.asarray(e, dtype=np.float64)
    classes, groups = _class_groups(labels)
    k = classes.size
    centroids = np.stack([e[m].mean(axis=0) for m in groups])
    spread = np.array([
        np.linalg.norm(e[m] - centroids[gi], axis=1).mean()
        for gi, m in enumerate(groups)
    ])
    m_dist = cdist(centroids, centroids)
    total = 0.0
    for i in range(k):
        worst = 0.0
        for j in range(k):
            if j == i:
                continue
            if m_dist[i, j] == 0.0:
                raise DegenerateError("coincident centroids give an infinite ratio")
            worst = max(worst, (spread[i] + spread[j]) / m_dist[i, j])
        total += worst
    return float(total / k)


def calinski_harabasz(e, labels):
    """Between/within dispersion ratio scaled by (N - K) / (K - 1)."""
    e = np.asarray(e, dtype=np.float64)
    classes, groups = _class_groups(labels)
    n, k = e.shape[0], classes.size
    if n <= k:
        raise DegenerateError("needs more points than classes")
    overall = e.mean(axis=0)
    tr_b = sum(
        m.size * float(np.sum((e[m].mean(axis=0) - overall) ** 2)) for m in groups
    )
    tr_w = sum(
        float(np.sum((e[m] - e[m].mean(axis=0)) ** 2)) for m in groups
    )
    if tr_w == 0.0:
        raise DegenerateError("zero within-cluster dispersion gives an infinite score")
    return float((tr_b / tr_w) * (n - k) / (k - 1))


CSV_HEADER = "dataset,method,dim,seed,accuracy,align,unif,sc,db,ch,seconds"


@dataclass
class MetricsReport:
    dataset: str
    method: str
    dim: int
    seed: int
    accuracy: float | None
    align: float | None
    unif: float | None
    sc: float | None
    db: float | None
    ch: float | None
    seconds: float

    def csv_row(self):
        def fmt(x):
            return "" if x is None else f"{x:.6f}"

        return (
            f"{self.dataset},{self.method},{self.dim},{self.seed},"
            f"{fmt(self.accuracy)},{fmt(self.align)},{fmt(self.unif)},"
            f"{fmt(self.sc)},{fmt(self.db)},{fmt(self.ch)},{self.seconds:.6f}"
        )
