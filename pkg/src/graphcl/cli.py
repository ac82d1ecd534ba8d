"""Command-line front end: train, eval, sweep, plot, gen-sbm, validate.

Every command is deterministic given its inputs and the config seed. All
randomness is derived from the single master seed via per-purpose streams
(see `seeding.derive_rng`): weight init, the two augmentation draws per
epoch, the per-epoch loss subsample, and the probe each get their own
stream keyed by a purpose tag and the epoch index.

Exit codes: 0 ok, 2 usage/config error, 3 numeric failure.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, make_views
from .evaluation import (
    CSV_HEADER,
    MetricsReport,
    ProbeConfig,
    alignment,
    calinski_harabasz,
    davies_bouldin,
    linear_probe,
    silhouette,
    uniformity,
)
from .graph import (
    generate_sbm,
    load_bundle,
    perturb_edges,
    read_matrix_bin,
    save_bundle,
    validate_bundle,
    write_matrix_bin,
)
from .model import (
    EncoderConfig,
    PostprocessorKind,
    embed_full,
    forward_embeddings,
    load_checkpoint,
    save_checkpoint,
)
from .objective import TrainConfig, TrainingAborted, history_to_csv, train


class ConfigError(ValueError):
    pass


# key -> (parser, default); dataset is the only required key
CONFIG_SCHEMA = {
    "dataset": (str, None),
    "epochs": (int, 50),
    "layers": (int, 2),
    "dim": (int, 512),
    "tau": (float, 0.5),
    "lr1": (float, 1e-3),
    "wd1": (float, 0.0),
    "pf": (float, 0.0),
    "pe": (float, 0.0),
    "lr2": (float, 5e-3),
    "wd2": (float, 1e-4),
    "m": (int, 1024),
    "encoder": (str, "gcn"),
    "postproc": (str, "bn"),
    "loss": (str, "nt_xent"),
    "lambda": (float, 1e-3),
    "seed": (int, 0),
    "out_dir": (str, "run"),
}


def parse_config(path, overrides=None):
    """Flat `key = value` config file; '#' starts a comment; unknown keys rejected."""
    values = {k: d for k, (_, d) in CONFIG_SCHEMA.items()}
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{ln}: expected `key = value`")
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{ln}: unknown key {key!r}")
        caster = CONFIG_SCHEMA[key][0]
        try:
            values[key] = caster(raw.strip())
        except ValueError:
            raise ConfigError(f"{path}:{ln}: bad value for {key}") from None
    for key, value in (overrides or {}).items():
        values[key] = value
    if values["dataset"] is None:
        raise ConfigError("config is missing the required `dataset` key")
    return values


def build_train_config(values, in_dim):
    return TrainConfig(
        epochs=values["epochs"],
        m=values["m"],
        tau=values["tau"],
        lr1=values["lr1"],
        wd1=values["wd1"],
        augment=AugmentConfig(p_e=values["pe"], p_f=values["pf"]),
        encoder=EncoderConfig(
            arch=values["encoder"],
            n_layers=values["layers"],
            in_dim=in_dim,
            hidden_dim=values["dim"],
            out_dim=values["dim"],
        ),
        post=PostprocessorKind(kind=values["postproc"]),
        loss=values["loss"],
        lam=values["lambda"],
        seed=values["seed"],
    )


def echo_config(values):
    return "\n".join(f"{k} = {values[k]}" for k in CONFIG_SCHEMA) + "\n"


def run_training(values, g=None):
    """Train from a parsed config; returns (params, history, bundle)."""
    if g is None:
        g = load_bundle(values["dataset"])
    cfg = build_train_config(values, g.feature_dim)
    params, history = train(g, cfg)
    return params, history, g


def cmd_train(args):
    try:
        values = parse_config(args.config)
    except (ConfigError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out_dir = Path(values["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    try:
        g = load_bundle(values["dataset"])
    except Exception as e:
        print(f"dataset error: {e}", file=sys.stderr)
        return 2
    try:
        params, history, _ = run_training(values, g)
    except TrainingAborted as e:
        (out_dir / "history.csv").write_text(history_to_csv(e.history))
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    save_checkpoint(params, out_dir / "checkpoint.ckpt", seed=values["seed"])
    write_matrix_bin(out_dir / "embeddings.bin", embed_full(params, g))
    (out_dir / "history.csv").write_text(history_to_csv(history))
    (out_dir / "run_config.txt").write_text(echo_config(values))
    print(f"wrote artifacts to {out_dir}")
    return 0


def _append_results(path, row):
    path = Path(path)
    if not path.exists():
        path.write_text(CSV_HEADER + "\n")
    with open(path, "a") as fh:
        fh.write(row + "\n")


def evaluate_run(
    g,
    embeddings,
    dataset_name,
    method,
    seed,
    probe=True,
    probe_cfg=None,
    params=None,
    pf=0.0,
    pe=0.0,
):
    """Compute a MetricsReport for full-graph embeddings (plus optional pair metrics)."""
    t0 = time.perf_counter()
    accuracy = None
    if probe:
        accuracy, _ = linear_probe(
            embeddings,
            g.labels,
            (g.train_idx, g.val_idx, g.test_idx),
            probe_cfg,
            seed=seed,
        )
    align = unif = None
    if params is not None:
        vp = make_views(g, AugmentConfig(p_e=pe, p_f=pf), seed, epoch=0)
        dtype = params.weights[0].data.dtype
        u = forward_embeddings(params, vp.adj_norm1, vp.features1.astype(dtype)).data
        v = forward_embeddings(params, vp.adj_norm2, vp.features2.astype(dtype)).data
        align = alignment(u, v)
        unif = 0.5 * (uniformity(u) + uniformity(v))
    else:
        unif = uniformity(embeddings)
    return MetricsReport(
        dataset=dataset_name,
        method=method,
        dim=int(embeddings.shape[1]),
        seed=seed,
        accuracy=accuracy,
        align=align,
        unif=unif,
        sc=silhouette(embeddings, g.labels),
        db=davies_bouldin(embeddings, g.labels),
        ch=calinski_harabasz(embeddings, g.labels),
        seconds=time.perf_counter() - t0,
    )


def cmd_eval(args):
    try:
        g = load_bundle(args.dataset)
    except Exception as e:
        print(f"dataset error: {e}", file=sys.stderr)
        return 2
    params = None
    if args.checkpoint:
        if not Path(args.checkpoint).is_file():
            print(f"missing artifact: {args.checkpoint}", file=sys.stderr)
            return 2
        params, _ = load_checkpoint(args.checkpoint)
        embeddings = embed_full(params, g, project=not args.pre_projection)
        method = params.post.kind
    else:
        if not Path(args.embeddings).is_file():
            print(f"missing artifact: {args.embeddings}", file=sys.stderr)
            return 2
        embeddings = read_matrix_bin(args.embeddings).astype(np.float64)
        method = "embeddings"
    probe_cfg = ProbeConfig(lr2=args.lr2, wd2=0.0 if args.no_probe_decay else args.wd2)
    report = evaluate_run(
        g,
        embeddings,
        dataset_name=Path(args.dataset).name,
        method=method,
        seed=args.seed,
        probe=not args.no_probe,
        probe_cfg=probe_cfg,
        params=params,
        pf=args.pf,
        pe=args.pe,
    )
    row = report.csv_row()
    _append_results(args.out, row)
    print(row)
    return 0


def cmd_sweep(args):
    try:
        values = parse_config(args.config)
        grid = [t.strip() for t in args.grid.split(",") if t.strip()]
        if not grid:
            raise ConfigError("empty grid")
        seeds = [int(t) for t in args.seeds.split(",")]
    except (ConfigError, ValueError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        g = load_bundle(values["dataset"])
    except Exception as e:
        print(f"dataset error: {e}", file=sys.stderr)
        return 2
    out_dir = Path(values["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    results = out_dir / "results.csv"
    dataset_name = Path(values["dataset"]).name
    failures = 0
    for point in grid:
        for seed in seeds:
            v = dict(values)
            v["seed"] = seed
            bundle = g
            if args.mode == "dims":
                v["dim"] = int(point)
            else:
                p = float(point)
                if p > 0:
                    perturbed = perturb_edges(g.adjacency, p, seed)
                    print(
                        f"perturb p={p}: edges {g.n_edges_undirected} -> "
                        f"{perturbed.nnz // 2}"
                    )
                    bundle = type(g)(
                        n_nodes=g.n_nodes,
                        feature_dim=g.feature_dim,
                        n_classes=g.n_classes,
                        adjacency=perturbed,
                        features=g.features,
                        labels=g.labels,
                        train_idx=g.train_idx,
                        val_idx=g.val_idx,
                        test_idx=g.test_idx,
                    )
            try:
                params, _, _ = run_training(v, bundle)
                embeddings = embed_full(params, bundle)
                report = evaluate_run(
                    g,
                    embeddings,
                    dataset_name=dataset_name,
                    method=f"{v['postproc']}@{args.mode}={point}",
                    seed=seed,
                    probe_cfg=ProbeConfig(lr2=v["lr2"], wd2=v["wd2"]),
                    pf=v["pf"],
                    pe=v["pe"],
                )
                report.dim = v["dim"]
                _append_results(results, report.csv_row())
                print(report.csv_row())
            except (TrainingAborted, ValueError) as e:
                failures += 1
                print(f"point {point} seed {seed} failed: {e}", file=sys.stderr)
    return 3 if failures else 0


def _read_csv(path):
    lines = Path(path).read_text().splitlines()
    if len(lines) < 2:
        return None, []
    header = lines[0].split(",")
    rows = [line.split(",") for line in lines[1:] if line.strip()]
    return header, rows


def cmd_plot(args):
    header, rows = _read_csv(args.results)
    if header is None or not rows:
        print("results file is empty", file=sys.stderr)
        return 2
    for col in (args.x, args.y, args.color):
        if col not in header:
            print(f"missing column {col!r}", file=sys.stderr)
            return 2
    ix, iy, ic = header.index(args.x), header.index(args.y), header.index(args.color)
    im = header.index("method") if "method" in header else None
    pts = []
    for row in rows:
        try:
            pts.append((
                float(row[ix]),
                float(row[iy]),
                float(row[ic]) if row[ic] else 0.0,
                row[im] if im is not None else "",
            ))
        except ValueError:
            continue
    if not pts:
        print("no plottable rows", file=sys.stderr)
        return 2
    Path(args.out).write_text(render_scatter_svg(pts, args.x, args.y))
    print(f"wrote {args.out}")
    return 0


def render_scatter_svg(points, x_label, y_label, width=640, height=480, margin=60):
    """Standalone SVG scatter; colors run blue -> red with the third value."""
    xs = [p[0] for p in points]
    ys = [p[1] for p in points]
    cs = [p[2] for p in points]

    def padded(lo, hi):
        span = (hi - lo) or 1.0
        return lo - 0.05 * span, hi + 0.05 * span

    x0, x1 = padded(min(xs), max(xs))
    y0, y1 = padded(min(ys), max(ys))
    c0, c1 = min(cs), max(cs)

    def sx(x):
        return margin + (x - x0) / (x1 - x0) * (width - 2 * margin)

    def sy(y):
        return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin)

    def color(c):
        t = 0.5 if c1 == c0 else (c - c0) / (c1 - c0)
        return f"rgb({int(255 * t)},60,{int(255 * (1 - t))})"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - margin / 3}" '
        f'text-anchor="middle">{x_label}</text>',
        f'<text x="{margin / 3}" y="{height / 2}" text-anchor="middle" '
        f'transform="rotate(-90 {margin / 3} {height / 2})">{y_label}</text>',
        f'<text x="{margin}" y="{height - margin + 15}" font-size="10">{x0:.3g}</text>',
        f'<text x="{width - margin}" y="{height - margin + 15}" font-size="10" '
        f'text-anchor="end">{x1:.3g}</text>',
        f'<text x="{margin - 5}" y="{height - margin}" font-size="10" '
        f'text-anchor="end">{y0:.3g}</text>',
        f'<text x="{margin - 5}" y="{margin}" font-size="10" '
        f'text-anchor="end">{y1:.3g}</text>',
    ]
    for x, y, c, label in points:
        parts.append(
            f'<circle class="glyph" cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="5" '
            f'fill="{color(c)}"><title>{label}</title></circle>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_gen_sbm(args):
    blocks = [int(t) for t in args.blocks.split(",")]
    g = generate_sbm(blocks, args.p_in, args.p_out, args.shift, args.noise, args.seed)
    save_bundle(g, args.out)
    print(f"wrote SBM bundle ({g.n_nodes} nodes, {g.n_edges_undirected} edges) to {args.out}")
    return 0


def cmd_validate(args):
    try:
        g = load_bundle(args.dataset)
    except Exception as e:
        print(f"load error: {e}", file=sys.stderr)
        return 2
    problems = validate_bundle(g)
    if problems:
        for p in problems:
            print(f"violation: {p}")
        return 1
    print("bundle ok")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="graphcl")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="pretrain and write run artifacts")
    p.add_argument("config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or embeddings file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--checkpoint")
    src.add_argument("--embeddings")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", default="results.csv")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr2", type=float, default=5e-3)
    p.add_argument("--wd2", type=float, default=1e-4)
    p.add_argument("--no-probe", action="store_true")
    p.add_argument("--no-probe-decay", action="store_true",
                   help="zero the probe weight decay")
    p.add_argument("--pre-projection", action="store_true",
                   help="probe the embeddings before sphere projection")
    p.add_argument("--pf", type=float, default=0.0,
                   help="feature mask rate for the pair metrics' views")
    p.add_argument("--pe", type=float, default=0.0,
                   help="edge drop rate for the pair metrics' views")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="grid sweep over dims or perturbation rates")
    p.add_argument("--mode", choices=("dims", "perturb"), required=True)
    p.add_argument("--grid", required=True, help="comma-separated grid points")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", default="0")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="scatter plot of a results file as SVG")
    p.add_argument("results")
    p.add_argument("--x", default="align")
    p.add_argument("--y", default="unif")
    p.add_argument("--color", default="accuracy")
    p.add_argument("--out", default="plot.svg")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("gen-sbm", help="write a synthetic SBM bundle")
    p.add_argument("--blocks", default="100,100,100")
    p.add_argument("--p-in", type=float, default=0.1)
    p.add_argument("--p-out", type=float, default=0.005)
    p.add_argument("--shift", type=float, default=1.0)
    p.add_argument("--noise", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_sbm)

    p = sub.add_parser("validate", help="check a bundle's invariants")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
