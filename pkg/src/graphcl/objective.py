"""Training objectives (subsampled NT-Xent, CCA-style), Adam, and the train loop."""

import time
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .augment import AugmentConfig, make_views
from .model import EncoderConfig, PostprocessorKind, encode, init_params, postprocess
from .seeding import SUBSAMPLE, derive_rng


@dataclass
class TrainConfig:
    epochs: int = 50
    m: int = 1024              # loss subsample size
    tau: float = 0.5           # temperature
    lr1: float = 1e-3
    wd1: float = 0.0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    post: PostprocessorKind = field(default_factory=PostprocessorKind)
    loss: str = "nt_xent"      # nt_xent | cca_ssg
    lam: float = 1e-3          # CCA trade-off
    seed: int = 0
    dtype: type = np.float32   # training may run single precision

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.m < 1:
            raise ValueError("subsample size m must be >= 1")
        if self.tau <= 0:
            raise ValueError("temperature must be positive")
        if self.loss not in ("nt_xent", "cca_ssg"):
            raise ValueError(f"unknown loss {self.loss!r}")


def nt_xent(u, v, batch, tau):
    """Subsampled contrastive loss over matched rows of u and v (as a Var).

    For each batch node the positive is its counterpart in the other view;
    negatives are the other batch nodes in both views (inter- and intra-view).
    Similarities are cosine; the log-sum-exp is max-stabilized. Returns the
    negated symmetrized objective, i.e. the quantity to minimize.
    """
    batch = np.asarray(batch, dtype=np.int64)
    m = batch.size
    if len(set(batch.tolist())) != m:
        raise ad.ContractError("duplicate batch indices")
    if m and (batch.min() < 0 or batch.max() >= u.shape[0]):
        raise ad.ContractError("batch index out of range")
    un = ad.row_normalize(ad.take_rows(u, batch))
    vn = ad.row_normalize(ad.take_rows(v, batch))
    s_uv = ad.scale(ad.matmul(un, ad.transpose(vn)), 1.0 / tau)
    s_uu = ad.scale(ad.matmul(un, ad.transpose(un)), 1.0 / tau)
    s_vv = ad.scale(ad.matmul(vn, ad.transpose(vn)), 1.0 / tau)
    s_vu = ad.transpose(s_uv)
    # denominator: the positive plus all k != i from both views; the
    # intra-view diagonal (the node with itself) is excluded.
    exclude = np.concatenate(
        [np.zeros((m, m), dtype=bool), np.eye(m, dtype=bool)], axis=1
    )
    l_uv = ad.sub(ad.diag_part(s_uv), ad.logsumexp_rows(ad.concat_cols(s_uv, s_uu), exclude))
    l_vu = ad.sub(ad.diag_part(s_vu), ad.logsumexp_rows(ad.concat_cols(s_vu, s_vv), exclude))
    return ad.scale(ad.add(ad.sum_all(l_uv), ad.sum_all(l_vu)), -0.5 / m)


def cca_ssg_loss(u, v, lam):
    """Invariance + decorrelation loss: ||U-V||_F^2 + lam (||U'U-I||_F^2 + ||V'V-I||_F^2).

    Callers are expected to pass column-standardized embeddings scaled by
    1/sqrt(N) so the quadratic terms penalize the correlation matrix.
    """
    if u.shape != v.shape:
        raise ad.ShapeError(f"shape mismatch {u.shape} vs {v.shape}")
    eye = ad.Var(np.eye(u.shape[1], dtype=u.data.dtype))

    def frob2(x):
        return ad.sum_all(ad.mul(x, x))

    diff = ad.sub(u, v)
    c_u = ad.sub(ad.matmul(ad.transpose(u), u), eye)
    c_v = ad.sub(ad.matmul(ad.transpose(v), v), eye)
    return ad.add(frob2(diff), ad.scale(ad.add(frob2(c_u), frob2(c_v)), lam))


def standardize_for_cca(x, eps=1e-5):
    """Column-standardize and scale by 1/sqrt(rows) (CCA loss preprocessing)."""
    means, variances = ad.column_moments(x)
    inv_std = ad.reciprocal(ad.sqrt(ad.add_const(variances, eps)))
    return ad.scale(ad.mul(ad.sub(x, means), inv_std), 1.0 / np.sqrt(x.shape[0]))


class Adam:
    """Classic Adam with bias correction and coupled L2 weight decay."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads, lr, wd=0.0):
        for g in grads:
            if not np.all(np.isfinite(g)):
                raise ad.NumericError("non-finite gradient; aborting step")
        self.step_count += 1
        t = self.step_count
        for i, (p, g) in enumerate(zip(self.params, grads)):
            if wd:
                g = g + wd * p.data
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1 ** t)
            v_hat = self.v[i] / (1 - self.beta2 ** t)
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)


def adam_step(state, grads, lr, wd=0.0):
    """One optimizer step on state.params; functional alias for Adam.step."""
    state.step(grads, lr, wd)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    seconds: float


def history_to_csv(history):
    lines = ["epoch,loss,seconds"]
    for rec in history:
        lines.append(f"{rec.epoch},{rec.loss:.6f},{rec.seconds:.6f}")
    return "\n".join(lines) + "\n"


class TrainingAborted(RuntimeError):
    """Numeric failure mid-run; carries the partial history."""

    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


def train(g, cfg):
    """Contrastive pretraining: one optimizer step per epoch on fresh views.

    Returns (params, history). Fully determined by (bundle, config, seed).
    """
    params = init_params(cfg.encoder, cfg.post, cfg.seed, dtype=cfg.dtype)
    opt = Adam(params.all_params())
    history = []
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        try:
            vp = make_views(g, cfg.augment, cfg.seed, epoch=epoch)
            x1 = vp.features1.astype(cfg.dtype)
            x2 = vp.features2.astype(cfg.dtype)
            z1 = encode(params, vp.adj_norm1, x1)
            z2 = encode(params, vp.adj_norm2, x2)
            u = postprocess(cfg.post, z1, params)
            v = postprocess(cfg.post, z2, params)
            m_eff = min(cfg.m, g.n_nodes)
            batch = derive_rng(cfg.seed, SUBSAMPLE, epoch).choice(
                g.n_nodes, size=m_eff, replace=False
            )
            if cfg.loss == "nt_xent":
                loss = nt_xent(u, v, batch, cfg.tau)
            else:
                ub = standardize_for_cca(ad.take_rows(u, batch))
                vb = standardize_for_cca(ad.take_rows(v, batch))
                loss = cca_ssg_loss(ub, vb, cfg.lam)
            loss_value = loss.item()
            if not np.isfinite(loss_value):
                raise ad.NumericError(f"non-finite loss at epoch {epoch}")
            for p in params.all_params():
                p.grad = None
            grads = ad.backward(loss, params.all_params())
            opt.step([grads[id(p)] for p in params.all_params()], cfg.lr1, cfg.wd1)
        except ad.NumericError as e:
            raise TrainingAborted(str(e), history) from e
        history.append(EpochRecord(epoch, loss_value, time.perf_counter() - t0))
    return params, history
