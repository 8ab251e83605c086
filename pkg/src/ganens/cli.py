"""Command line entry point: ``ganens run|eval|summarize``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, GanEnsError
from .evaluation import dhat_curve, knn_distances, wilcoxon_signed_rank, write_distance_matrix_csv
from .runner import report_summary, run_experiment
from .synthdata import block_normalize, read_pointset

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _cmd_run(args) -> int:
    try:
        manifest = run_experiment(args.config, out_dir=args.out_dir, master_seed=args.seed, jobs=args.jobs)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    out = Path(manifest["config"]["output_dir"])
    print(f"manifest: {out / 'manifest.json'}")
    if manifest["status"] != "ok":
        failed = [r["rep"] for r in manifest["repetitions"] if r["status"] != "ok"]
        print(f"repetitions failed: {failed}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_eval(args) -> int:
    try:
        gen = read_pointset(args.generated)
        test = read_pointset(args.test)
        base = read_pointset(args.baseline) if args.baseline else None
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    sets = [test, gen] + ([base] if base is not None else [])
    if args.reference:
        _, sets = block_normalize(read_pointset(args.reference), sets, seed=args.seed)
    test, gen = sets[0], sets[1]
    if args.k > len(gen) or (base is not None and args.k > len(sets[2])):
        print(f"error: k={args.k} exceeds the number of generated points", file=sys.stderr)
        return EXIT_INVALID
    dm = knn_distances(test, gen, args.k, label="generated", jobs=args.jobs)
    report = {"n_test": dm.n_test, "k": dm.k, "mean_distance": dm.column_means().tolist()}
    if base is not None:
        bm = knn_distances(test, sets[2], args.k, label="baseline", jobs=args.jobs)
        w = wilcoxon_signed_rank(dm.d[:, 0], bm.d[:, 0], args.alpha)
        report["dhat"] = dhat_curve(dm, bm).tolist()
        report["wilcoxon_vs_baseline"] = {"n_effective": w.n_effective, "w_plus": w.w_plus,
                                          "p_value": w.p_value, "code": w.code, "alpha": w.alpha}
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_distance_matrix_csv(out / "distances.csv", dm)
        (out / "eval.json").write_text(json.dumps(report, indent=1) + "\n")
    print(json.dumps(report, indent=1))
    return EXIT_OK


def _cmd_summarize(args) -> int:
    try:
        summary = report_summary(args.manifest)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    text = json.dumps(summary, indent=1)
    out = Path(args.out_dir) if args.out_dir else Path(args.manifest).parent
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(text + "\n")
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ganens", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, default=None, help="override master_seed")
    r.add_argument("--out-dir", default=None, help="override output_dir")
    r.add_argument("--jobs", type=int, default=1, help="repetitions run in parallel")
    r.set_defaults(func=_cmd_run)

    e = sub.add_parser("eval", help="k-NN evaluation of a generated point set")
    e.add_argument("generated")
    e.add_argument("test")
    e.add_argument("--k", type=int, default=10)
    e.add_argument("--alpha", type=float, default=0.05)
    e.add_argument("--baseline", help="train-set sample used as the ideal generator")
    e.add_argument("--reference", help="point set whose mean pairwise distance normalizes features")
    e.add_argument("--out-dir", default=None)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--seed", type=int, default=0, help="seed for sampled normalization pairs")
    e.set_defaults(func=_cmd_eval)

    s = sub.add_parser("summarize", help="consolidate a run manifest")
    s.add_argument("manifest")
    s.add_argument("--out-dir", default=None)
    s.set_defaults(func=_cmd_summarize)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(over="ignore", under="ignore")
    try:
        return args.func(args)
    except GanEnsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
