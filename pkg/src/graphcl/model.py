"""Shared encoder (GCN or MLP), postprocessing variants, and full-graph inference.

Postprocessor kinds:
  none   - identity
  bn     - column standardization (subtract column mean, divide by column std)
  dbn    - ZCA whitening; covariance inverse square root via Newton-Schulz
  mlp    - row-wise 2-layer head with a nonlinear activation
  mlp_bn - mlp head followed by column standardization
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .graph import normalize_adjacency
from .seeding import INIT, derive_rng

VALID_KINDS = ("none", "bn", "dbn", "mlp", "mlp_bn")


@dataclass
class EncoderConfig:
    arch: str = "gcn"          # gcn | mlp
    n_layers: int = 2
    in_dim: int = 0            # set from the dataset
    hidden_dim: int = 512
    out_dim: int = 512
    activation: str = "relu"   # relu | elu | prelu

    def __post_init__(self):
        if self.arch not in ("gcn", "mlp"):
            raise ValueError(f"unknown arch {self.arch!r}")
        if self.n_layers not in (1, 2, 3):
            raise ValueError("n_layers must be 1, 2, or 3")
        if self.activation not in ("relu", "elu", "prelu"):
            raise ValueError(f"unknown activation {self.activation!r}")

    def layer_dims(self):
        dims = [self.in_dim] + [self.hidden_dim] * (self.n_layers - 1) + [self.out_dim]
        return list(zip(dims[:-1], dims[1:]))


@dataclass
class PostprocessorKind:
    kind: str = "bn"
    newton_schulz_iters: int = 6
    head_hidden: int | None = None  # defaults to out_dim
    head_activation: str = "elu"

    def __post_init__(self):
        if self.kind not in VALID_KINDS:
            raise ValueError(f"unknown postprocessor kind {self.kind!r}")


@dataclass
class ModelParams:
    encoder: EncoderConfig
    post: PostprocessorKind
    weights: list = field(default_factory=list)       # per-layer Vars
    slopes: list = field(default_factory=list)        # per-layer prelu slopes (or empty)
    head_w1: ad.Var | None = None
    head_w2: ad.Var | None = None
    eps: float = 1e-5  # variance floor for bn / covariance ridge for dbn

    def all_params(self):
        out = list(self.weights) + list(self.slopes)
        if self.head_w1 is not None:
            out.append(self.head_w1)
        if self.head_w2 is not None:
            out.append(self.head_w2)
        return out

    def n_extra_head_params(self):
        total = 0
        for w in (self.head_w1, self.head_w2):
            if w is not None:
                total += w.data.size
        return total


def _glorot(rng, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def init_params(cfg, post, seed, dtype=np.float64):
    """Glorot-uniform weights, deterministic per seed."""
    rng = derive_rng(seed, INIT)
    params = ModelParams(encoder=cfg, post=post)
    for fan_in, fan_out in cfg.layer_dims():
        params.weights.append(ad.Var(_glorot(rng, fan_in, fan_out, dtype), requires_grad=True))
        if cfg.activation == "prelu":
            params.slopes.append(ad.Var(np.array([[0.25]], dtype=dtype), requires_grad=True))
    if post.kind in ("mlp", "mlp_bn"):
        hidden = post.head_hidden or cfg.out_dim
        params.head_w1 = ad.Var(_glorot(rng, cfg.out_dim, hidden, dtype), requires_grad=True)
        params.head_w2 = ad.Var(_glorot(rng, hidden, cfg.out_dim, dtype), requires_grad=True)
    return params


def encode(params, adj_norm, x):
    """Raw embeddings Z: stacked (normalized-adjacency) linear layers + activation.

    The activation is applied after every layer including the last. For the
    mlp arch the adjacency is ignored entirely.
    """
    cfg = params.encoder
    h = x if isinstance(x, ad.Var) else ad.Var(x)
    for layer, w in enumerate(params.weights):
        h = ad.matmul(h, w)
        if cfg.arch == "gcn":
            h = ad.spmm(adj_norm, h)
        slope = params.slopes[layer] if params.slopes else None
        h = ad.activation(cfg.activation, h, slope)
    return h


def batch_standardize(z, eps):
    """Column standardization with population moments and a variance floor."""
    means, variances = ad.column_moments(z)
    inv_std = ad.reciprocal(ad.sqrt(ad.add_const(variances, eps)))
    return ad.mul(ad.sub(z, means), inv_std)


def zca_whiten(z, eps, n_iters):
    """Center, then multiply by the inverse square root of the column covariance.

    The inverse square root comes from the coupled Newton-Schulz iteration on
    the trace-normalized covariance, so the whole map is a chain of matrix
    products and stays differentiable on the tape.
    """
    n, f = z.shape
    means = ad.col_mean(z)
    zc = ad.sub(z, means)
    eye = ad.Var(np.eye(f, dtype=z.data.dtype))
    cov = ad.add(ad.scale(ad.matmul(ad.transpose(zc), zc), 1.0 / n),
                 ad.scale(eye, eps))
    tr = ad.sum_all(ad.diag_part(cov))
    inv_tr = ad.reciprocal(tr)
    a = ad.mul(cov, inv_tr)  # eigenvalues in (0, 1]
    y, zmat = a, eye
    for _ in range(n_iters):
        t = ad.scale(ad.sub(ad.scale(eye, 3.0), ad.matmul(zmat, y)), 0.5)
        y = ad.matmul(y, t)
        zmat = ad.matmul(t, zmat)
    # zmat ~ (cov/tr)^{-1/2}; undo the trace scaling
    inv_sqrt = ad.mul(zmat, ad.reciprocal(ad.sqrt(tr)))
    return ad.matmul(zc, inv_sqrt)


def head_forward(params, z):
    hidden = ad.matmul(z, params.head_w1)
    hidden = ad.activation(params.post.head_activation, hidden)
    return ad.matmul(hidden, params.head_w2)


def postprocess(kind, z, params):
    """Apply one of the postprocessing variants to raw embeddings (a Var)."""
    name = kind.kind if isinstance(kind, PostprocessorKind) else kind
    if name in ("bn", "dbn") and z.shape[0] < 2:
        raise ad.ContractError("column statistics need at least 2 rows")
    if name == "none":
        return z
    if name == "bn":
        return batch_standardize(z, params.eps)
    if name == "dbn":
        return zca_whiten(z, params.eps, params.post.newton_schulz_iters)
    if name == "mlp":
        return head_forward(params, z)
    if name == "mlp_bn":
        return batch_standardize(head_forward(params, z), params.eps)
    raise ValueError(f"unknown postprocessor kind {name!r}")


def project_sphere(u):
    """Scale each row to unit L2 norm; zero rows stay (near) zero."""
    return ad.row_normalize(u, eps=1e-12)


def forward_embeddings(params, adj_norm, x):
    """encode -> postprocess -> sphere projection, all on the tape."""
    z = encode(params, adj_norm, x)
    u = postprocess(params.post, z, params)
    return project_sphere(u)


def embed_full(params, g, project=True):
    """Inference embeddings for the whole graph: no augmentation, full-node stats."""
    adj_norm = normalize_adjacency(g.adjacency)
    x = g.features.astype(params.weights[0].data.dtype)
    z = encode(params, adj_norm, x)
    u = postprocess(params.post, z, params)
    if project:
        u = project_sphere(u)
    return u.data.copy()


# -- checkpoint format: text header + named binary float64 blocks -------------

CKPT_MAGIC = "clnr-ckpt v1"


def _named_weights(params):
    named = [(f"layer{i}", w) for i, w in enumerate(params.weights)]
    named += [(f"slope{i}", s) for i, s in enumerate(params.slopes)]
    if params.head_w1 is not None:
        named.append(("head_w1", params.head_w1))
    if params.head_w2 is not None:
        named.append(("head_w2", params.head_w2))
    return named


def save_checkpoint(params, path, seed=0):
    cfg, post = params.encoder, params.post
    with open(path, "wb") as fh:
        header = (
            f"{CKPT_MAGIC}\n"
            f"arch = {cfg.arch}\n"
            f"layers = {cfg.n_layers}\n"
            f"in_dim = {cfg.in_dim}\n"
            f"hidden_dim = {cfg.hidden_dim}\n"
            f"out_dim = {cfg.out_dim}\n"
            f"activation = {cfg.activation}\n"
            f"kind = {post.kind}\n"
            f"ns_iters = {post.newton_schulz_iters}\n"
            f"head_hidden = {post.head_hidden or 0}\n"
            f"head_activation = {post.head_activation}\n"
            f"seed = {seed}\n"
            f"end-meta\n"
        )
        fh.write(header.encode("utf-8"))
        for name, w in _named_weights(params):
            rows, cols = w.shape
            fh.write(f"{name} {rows} {cols}\n".encode("utf-8"))
            fh.write(np.asarray(w.data, dtype="<f8").tobytes(order="C"))


def load_checkpoint(path):
    raw = Path(path).read_bytes()
    end = raw.index(b"end-meta\n") + len(b"end-meta\n")
    lines = raw[:end].decode("utf-8").splitlines()
    if lines[0] != CKPT_MAGIC:
        raise ValueError(f"bad checkpoint magic: {lines[0]!r}")
    meta = {}
    for line in lines[1:-1]:
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    cfg = EncoderConfig(
        arch=meta["arch"],
        n_layers=int(meta["layers"]),
        in_dim=int(meta["in_dim"]),
        hidden_dim=int(meta["hidden_dim"]),
        out_dim=int(meta["out_dim"]),
        activation=meta["activation"],
    )
    post = PostprocessorKind(
        kind=meta["kind"],
        newton_schulz_iters=int(meta["ns_iters"]),
        head_hidden=int(meta["head_hidden"]) or None,
        head_activation=meta["head_activation"],
    )
    params = ModelParams(encoder=cfg, post=post)
    pos = end
    blocks = {}
    while pos < len(raw):
        nl = raw.index(b"\n", pos)
        name, rows, cols = raw[pos:nl].decode("utf-8").split()
        rows, cols = int(rows), int(cols)
        nbytes = rows * cols * 8
        data = np.frombuffer(raw[nl + 1:nl + 1 + nbytes], dtype="<f8").reshape(rows, cols)
        blocks[name] = ad.Var(data.copy(), requires_grad=True)
        pos = nl + 1 + nbytes
    i = 0
    while f"layer{i}" in blocks:
        params.weights.append(blocks[f"layer{i}"])
        i += 1
    i = 0
    while f"slope{i}" in blocks:
        params.slopes.append(blocks[f"slope{i}"])
        i += 1
    params.head_w1 = blocks.get("head_w1")
    params.head_w2 = blocks.get("head_w2")
    return params, int(meta["seed"])
