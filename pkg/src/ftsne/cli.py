"""``ftsne`` command line: gen | embed | eval | heatmap.

Exit codes: 0 success, 2 parameter/config/input error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import io
from ._threads import set_num_threads
from .affinity import (
    DegenerateInputError,
    conditional_affinities,
    joint_affinities,
    latent_affinity,
    student_conditional,
)
from .datagen import SyntheticSpec, generate
from .divergence import DivergenceDomainError, NumericalError, heatmap_grids, parse_divergence
from .metrics import epsilon_grid, knn_kfn_curve, pr_curve_xy, pr_curve_zy
from .primal import NumericalAbort, run_primal
from .variational import UnsupportedConfiguration, run_variational

log = logging.getLogger("ftsne")

EXIT_OK, EXIT_PARAM, EXIT_NUMERIC = 0, 2, 3
METRICS = ("xy", "zy", "knn-kfn")


class UsageError(ValueError):
    pass


def _range(text):
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected LO:HI, got {text!r}") from None
    if not 0 < lo < hi:
        raise argparse.ArgumentTypeError(f"need 0 < LO < HI, got {text!r}")
    return lo, hi


def _exaggeration(text):
    try:
        factor, epochs = text.split(":")
        return float(factor), int(epochs)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected FACTOR:EPOCHS, got {text!r}") from None


def _widths(text):
    try:
        out = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated widths, got {text!r}") from None
    if not out:
        raise argparse.ArgumentTypeError("need at least one layer width")
    return out


def _k_grid(text):
    """``1:20`` (inclusive) or ``1,2,5,10``."""
    try:
        if ":" in text:
            lo, hi = (int(v) for v in text.split(":"))
            return list(range(lo, hi + 1))
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad K grid {text!r}") from None


def _metrics(text):
    out = [v.strip() for v in text.split(",") if v.strip()]
    bad = [v for v in out if v not in METRICS]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"metrics must be drawn from {','.join(METRICS)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ftsne", description="f-divergence stochastic neighbour embedding")
    parser.add_argument("--threads", type=int, help="cap on worker threads (default: FTSNE_THREADS or CPU count)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="write a synthetic dataset CSV")
    gen.add_argument("--kind", required=True, choices=("swiss_roll", "gaussian_blobs"))
    gen.add_argument("--m", type=int, required=True)
    gen.add_argument("--noise", type=float, default=0.0)
    gen.add_argument("--separation", type=float, default=10.0)
    gen.add_argument("--std", type=float, default=1.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("-o", "--output", help="output CSV (default: stdout)")

    emb = sub.add_parser("embed", help="compute an embedding")
    emb.add_argument("--config", help="RunConfig JSON; flags override it")
    emb.add_argument("--save-config", help="write the effective config here")
    emb.add_argument("--input")
    emb.add_argument("--output")
    emb.add_argument("--trace")
    emb.add_argument("--divergence", help="kl, rkl, js, ch, hl or interp:ALPHA")
    emb.add_argument("--optimizer", choices=("primal", "variational"))
    emb.add_argument("--perplexity", type=float)
    emb.add_argument("--d", type=int)
    emb.add_argument("--seed", type=int)
    emb.add_argument("--lr0", type=float)
    emb.add_argument("--momentum0", type=float)
    emb.add_argument("--lr-decay", type=float)
    emb.add_argument("--momentum-decay", type=float)
    emb.add_argument("--epochs", type=int)
    emb.add_argument("--decay", choices=("inverse", "recursive"))
    emb.add_argument("--exaggeration", type=_exaggeration, metavar="F:E")
    emb.add_argument("--rounds", type=int)
    emb.add_argument("--j-steps", type=int)
    emb.add_argument("--k-steps", type=int)
    emb.add_argument("--disc-lr", type=float)
    emb.add_argument("--enc-widths", type=_widths)
    emb.add_argument("--head-widths", type=_widths)
    emb.add_argument("--plateau", action="store_true", default=None)
    emb.add_argument("--trace-every", type=int)

    ev = sub.add_parser("eval", help="neighbourhood-retrieval curves for an embedding")
    ev.add_argument("--data", required=True)
    ev.add_argument("--embedding", required=True)
    ev.add_argument("--out-dir", required=True)
    ev.add_argument("--metrics", type=_metrics, default=list(METRICS))
    ev.add_argument("--perplexity", type=float, default=30.0, help="perplexity for the data-space reference")
    ev.add_argument("--latent", choices=("auto", "discrete", "continuous"), default="auto")
    ev.add_argument("--n-eps", type=int, default=50)
    ev.add_argument("--k-grid", type=_k_grid, default=list(range(1, 21)))
    ev.add_argument("--dataset-name")
    ev.add_argument("--divergence-name", default="unknown")
    ev.add_argument("--seed", type=int, help="seed of the embedding run, recorded in the summary")
    ev.add_argument("--summary", help="summary JSON (default: OUT_DIR/summary.json); existing entries are merged")

    hm = sub.add_parser("heatmap", help="loss and gradient grids over (p, q)")
    hm.add_argument("--divergence", required=True)
    hm.add_argument("--out-dir", required=True)
    hm.add_argument("--p-range", type=_range, default=(1e-4, 1e-1))
    hm.add_argument("--q-range", type=_range, default=(1e-4, 1e-1))
    hm.add_argument("--resolution", type=int, default=100)
    return parser


def _cmd_gen(args):
    spec = SyntheticSpec(args.kind, args.m, args.noise, args.separation, args.std, args.seed)
    data = generate(spec)
    io.write_dataset(args.output or sys.stdout, data)
    return EXIT_OK


def resolve_config(args) -> io.RunConfig:
    """Defaults, then the config file, then explicit flags."""
    base = io.RunConfig.load(args.config).__dict__ if args.config else {}
    cfg = dict(base)
    names = {f.name for f in fields(io.RunConfig)}
    for name in names:
        value = getattr(args, name, None)
        if value is not None:
            cfg[name] = value
    if args.exaggeration is not None:
        cfg["exaggeration"], cfg["exaggeration_epochs"] = args.exaggeration
    return io.RunConfig.from_dict(cfg).validate()


def _cmd_embed(args):
    cfg = resolve_config(args)
    if not cfg.input or not cfg.output:
        raise UsageError("embed needs --input and --output (on the command line or in the config)")
    if args.save_config:
        Path(args.save_config).write_text(cfg.to_json(), encoding="utf-8")
    div = cfg.div()
    if cfg.optimizer == "variational" and div.interpolated:
        raise UnsupportedConfiguration("the variational optimizer does not support interpolated divergences")
    data = io.read_dataset(cfg.input)
    P = joint_affinities(data, cfg.perplexity)
    try:
        if cfg.optimizer == "primal":
            res = run_primal(div, P, cfg.schedule(), d=cfg.d, trace_every=cfg.trace_every)
            if cfg.trace:
                io.write_primal_trace(cfg.trace, res.epochs, res.losses)
            where = "epoch"
        else:
            res = run_variational(div, P, data, cfg.minimax(), d=cfg.d, trace_every=cfg.trace_every)
            if cfg.trace:
                io.write_variational_trace(cfg.trace, res.rounds, res.objectives, res.primal_losses,
                                           res.clip_events)
            where = "round"
    except NumericalAbort as exc:
        unit = "epoch" if cfg.optimizer == "primal" else "round"
        print(f"numerical abort at {unit} {exc.step}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    io.write_embedding(cfg.output, res.embedding.coords, data.labels)
    clips = int(np.sum(res.clip_events))
    if clips:
        log.warning("gradient clipping triggered %d times", clips)
    log.info("finished after %s %d", where, res.embedding.epoch)
    print(f"final_loss={io.fmt(res.final_loss)}")
    return EXIT_OK


def _latent_kind(labels, requested):
    if requested != "auto":
        return requested
    labels = np.asarray(labels)
    if labels.dtype.kind in "iubUSO":
        return "discrete"
    return "continuous"


def _merge_summary(path, record):
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {"results": []}
    key = ("dataset", "divergence", "metric", "seed")
    results = [r for r in doc.get("results", []) if any(r.get(k) != record[k] for k in key)]
    results.append(record)
    results.sort(key=lambda r: tuple(str(r.get(k)) for k in key))
    doc["results"] = results
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _cmd_eval(args):
    data = io.read_dataset(args.data)
    coords, _ = io.read_embedding(args.embedding)
    if coords.shape[0] != data.m:
        raise UsageError(f"row count mismatch: data has {data.m} rows, embedding has {coords.shape[0]}")
    if "zy" in args.metrics and data.labels is None:
        raise UsageError("zy metric needs a label column in the dataset")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    q_cond = student_conditional(coords)
    found = {}
    if "xy" in args.metrics or "zy" in args.metrics:
        refs = {}
        if "xy" in args.metrics:
            refs["xy"] = conditional_affinities(data, args.perplexity)
        if "zy" in args.metrics:
            refs["zy"] = latent_affinity(data.labels, _latent_kind(data.labels, args.latent))
        for name, ref in refs.items():
            grid = epsilon_grid(ref, q_cond, n=args.n_eps)
            curve = pr_curve_xy(ref, q_cond, grid) if name == "xy" else pr_curve_zy(ref, q_cond, grid)
            io.write_curves(out / f"{name}.csv", curve)
            found[name] = curve.max_fscore
    if "knn-kfn" in args.metrics:
        curve = knn_kfn_curve(data, coords, args.k_grid)
        io.write_curves(out / "knn_kfn.csv", curve)
        found["knn-kfn"] = curve.max_fscore
    dataset = args.dataset_name or Path(args.data).stem
    summary = args.summary or out / "summary.json"
    for metric, value in found.items():
        _merge_summary(summary, {
            "dataset": dataset, "divergence": args.divergence_name, "metric": metric,
            "max_fscore": value, "seed": args.seed, "perplexity": args.perplexity,
        })
        print(f"{metric}_max_fscore={io.fmt(value)}")
    return EXIT_OK


def _cmd_heatmap(args):
    div = parse_divergence(args.divergence)
    ps, qs, loss, grad = heatmap_grids(div, args.p_range, args.q_range, args.resolution)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.write_heatmap(out / f"{div.name.lower()}_loss.csv", ps, qs, loss)
    io.write_heatmap(out / f"{div.name.lower()}_gradient.csv", ps, qs, grad)
    return EXIT_OK


COMMANDS = {"gen": _cmd_gen, "embed": _cmd_embed, "eval": _cmd_eval, "heatmap": _cmd_heatmap}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        if args.threads is not None:
            set_num_threads(args.threads)
        return COMMANDS[args.command](args)
    except (NumericalError, FloatingPointError) as exc:
        print(f"ftsne: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, UnsupportedConfiguration, DegenerateInputError, DivergenceDomainError,
            io.FormatError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"ftsne {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_PARAM


if __name__ == "__main__":
    sys.exit(main())
