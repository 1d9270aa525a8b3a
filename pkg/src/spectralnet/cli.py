"""``spectralnet`` command line.

Exit status: 0 on success, 2 for usage errors (argparse), 1 for runtime
errors, which are reported as a single ``error:`` line on stderr.
"""

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .affinity import SCALE_MODES, AffinityConfig
from .bundle import load_bundle, save_bundle
from .cluster import acc, assign, nmi
from .config import TrainConfig, load_config
from .data import KINDS, DatasetSpec, generate, load_csv, load_labels, save_csv, save_labels, save_matrix
from .errors import SpectralNetError
from .linalg import grassmann_sq
from .oracle import exact_spectral_clustering
from .pipeline import fit
from .shatter import build_shatter_instance, dichotomies, sigma_sweep, verify_shattering


def _add_affinity_flags(p):
    p.add_argument("--n-neighbors", type=int, default=10, help="neighbors per point in the affinity graph (default 10)")
    p.add_argument("--scale-mode", choices=SCALE_MODES, default="global-median-kth", help="Gaussian scale rule")
    p.add_argument("--scale-k", type=int, default=3, help="neighbor index for the median scale rule (default 3)")
    p.add_argument("--sigma", type=float, default=None, help="fixed Gaussian scale (implies --scale-mode fixed)")


def _affinity_from(args):
    mode = "fixed" if args.sigma is not None else args.scale_mode
    return AffinityConfig(args.n_neighbors, mode, args.scale_k, args.sigma)


def build_parser():
    parser = argparse.ArgumentParser(prog="spectralnet", description="Spectral clustering with a learned embedding map.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("generate", help="write a toy dataset CSV")
    p.add_argument("--kind", required=True, choices=KINDS, help="dataset shape")
    p.add_argument("--n", type=int, required=True, help="number of points")
    p.add_argument("--noise", type=float, default=None, help="per-coordinate noise std (default depends on kind)")
    p.add_argument("--noise-dims", type=int, default=0, help="extra pure-noise coordinates to append (default 0)")
    p.add_argument("--noise-dim-std", type=float, default=0.5, help="std of the extra coordinates (default 0.5)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", required=True, help="output CSV path")

    p = sub.add_parser("train", help="fit a model bundle on a data CSV")
    p.add_argument("--data", required=True, help="input data CSV")
    p.add_argument("--k", type=int, default=None, help="number of clusters (overrides the config)")
    p.add_argument("--out", required=True, help="output directory for the bundle and training outputs")
    p.add_argument("--config", default=None, help="key = value configuration file")
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    p.add_argument("--no-siamese", action="store_true", help="use Euclidean distance for affinities")
    p.add_argument("--labels-frac", type=float, default=None, help="fraction of ground-truth labels to reveal")
    p.add_argument("--grassmann", action="store_true", help="log the Grassmann distance to the exact eigenvectors of the Euclidean affinity")

    p = sub.add_parser("predict", help="label points with a trained bundle")
    p.add_argument("--model", required=True, help="bundle directory written by train")
    p.add_argument("--data", required=True, help="input data CSV")
    p.add_argument("--out", required=True, help="output labels CSV")

    p = sub.add_parser("eval", help="print ACC and NMI of predicted labels")
    p.add_argument("--truth", required=True, help="labels CSV or data CSV with a label column")
    p.add_argument("--pred", required=True, help="predicted labels CSV")

    p = sub.add_parser("oracle", help="exact spectral clustering by full eigendecomposition")
    p.add_argument("--data", required=True, help="input data CSV")
    p.add_argument("--k", type=int, required=True, help="number of clusters")
    p.add_argument("--out", required=True, help="output labels CSV")
    p.add_argument("--vectors", default=None, help="optional CSV for the bottom-k eigenvectors")
    p.add_argument("--seed", type=int, default=0, help="k-means seed (default 0)")
    _add_affinity_flags(p)

    p = sub.add_parser("shatter", help="check the shattering construction")
    p.add_argument("--m", type=int, required=True, help="number of base points")
    which = p.add_mutually_exclusive_group()
    which.add_argument("--exhaustive", action="store_true", help="test all 2^m dichotomies")
    which.add_argument("--mask", type=int, default=None, help="single dichotomy as a bitmask (bit i = base point i)")
    p.add_argument("--seed", type=int, default=0, help="seed for the balancing assignment (default 0)")
    p.add_argument("--out", default=None, help="report CSV path (default stdout)")

    p = sub.add_parser("grassmann", help="squared Grassmann distance between two embedding CSVs")
    p.add_argument("--a", required=True, help="first n x k CSV")
    p.add_argument("--b", required=True, help="second n x k CSV")
    return parser


def cmd_generate(args):
    spec = DatasetSpec(args.kind, args.n, args.noise, args.seed, args.noise_dims, args.noise_dim_std)
    save_csv(generate(spec), args.out)


def _train_config(args):
    cfg = load_config(args.config) if args.config else TrainConfig()
    spectral = cfg.spectral
    if args.k is not None:
        spectral = replace(spectral, k=args.k)
    if args.seed is not None:
        spectral = replace(spectral, seed=args.seed)
    if args.no_siamese:
        spectral = replace(spectral, affinity=replace(spectral.affinity, distance="euclidean"))
    cfg = replace(cfg, spectral=spectral)
    if args.labels_frac is not None:
        if not 0.0 <= args.labels_frac <= 1.0:
            raise ValueError("--labels-frac must be in [0, 1]")
        cfg = replace(cfg, labels_frac=args.labels_frac)
    return cfg


def cmd_train(args):
    cfg = _train_config(args)
    data = load_csv(args.data)
    oracle_vectors = None
    if args.grassmann:
        oracle_vectors = exact_spectral_clustering(data.features, cfg.spectral.k, replace(cfg.spectral.affinity, distance="euclidean")).vectors
    result = fit(data.features, cfg, truth=data.labels, oracle_vectors=oracle_vectors)
    out = Path(args.out)
    save_bundle(result.bundle, out)
    save_matrix(result.embeddings, out / "embeddings.csv")
    save_labels(result.labels, out / "labels.csv")
    columns = ["iter", "loss", "val_loss", "lr"] + (["grassmann_sq"] if args.grassmann else [])
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in result.training.history:
            writer.writerow([row["iter"]] + [f"{row[c]:.17g}" for c in columns[1:]])


def cmd_predict(args):
    bundle = load_bundle(args.model)
    data = load_csv(args.data)
    save_labels(assign(bundle.model, data.features), args.out)


def cmd_eval(args):
    truth = load_labels(args.truth)
    pred = load_labels(args.pred)
    print(f"acc={acc(truth, pred):.6f} nmi={nmi(truth, pred):.6f}")


def cmd_oracle(args):
    data = load_csv(args.data)
    sol = exact_spectral_clustering(data.features, args.k, _affinity_from(args), seed=args.seed)
    save_labels(sol.labels, args.out)
    if args.vectors:
        save_matrix(sol.vectors, args.vectors)


def cmd_shatter(args):
    if args.m < 1:
        raise ValueError("--m must be >= 1")
    if args.exhaustive:
        cases = list(dichotomies(args.m))
    else:
        mask = 0 if args.mask is None else args.mask
        if not 0 <= mask < 2**args.m:
            raise ValueError(f"--mask must be in [0, {2 ** args.m - 1}]")
        cases = [(mask, tuple((mask >> i) & 1 for i in range(args.m)))]
    sweep = sigma_sweep()
    rows, ok = [], 0
    for mask, bits in cases:
        inst = build_shatter_instance(args.m, bits, seed=args.seed)
        res = verify_shattering(inst, sweep)
        ok += res.success
        sigma = "" if res.sigma is None else f"{res.sigma:.6g}"
        rows.append([mask, sigma, int(res.success)])
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dichotomy", "sigma", "success"])
        writer.writerows(rows)
    finally:
        if args.out:
            fh.close()
    print(f"{ok}/{len(cases)} dichotomies realized", file=sys.stderr)
    if ok < len(cases):
        return 1
    return 0


def cmd_grassmann(args):
    a = load_csv(args.a).features
    b = load_csv(args.b).features
    print(f"{grassmann_sq(a, b):.17g}")


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "predict": cmd_predict,
    "eval": cmd_eval,
    "oracle": cmd_oracle,
    "shatter": cmd_shatter,
    "grassmann": cmd_grassmann,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        status = COMMANDS[args.command](args)
    except (SpectralNetError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return int(status or 0)


if __name__ == "__main__":
    sys.exit(main())
