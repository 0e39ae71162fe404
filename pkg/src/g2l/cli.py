"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data validation error, 3 some items
failed (the rest of the output is still written, with an error sidecar).
Every command that writes files also writes ``<output>.config.json`` with
the fully resolved arguments.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import warnings
from pathlib import Path

from . import __version__
from .analysis import export_heatmap, sweep
from .features import (
    METRICS,
    AnchorSet,
    DataError,
    aggregate_kmeans,
    aggregate_mean,
    dataset_divergence,
    load_vectors,
    write_vectors,
)
from .labeling import Labeler, PolicyError, count_policies, count_policies_by_length, parse_policy, resolve_threads
from .synth import generate, load_specs, outlier_scenario, save_specs

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PARTIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["version"] = __version__
    return cfg


def _write_config(out: Path, args) -> None:
    _atomic_write(out.with_name(out.name + ".config.json"), json.dumps(_config(args), indent=2, sort_keys=True) + "\n")


def _threads(args) -> int:
    try:
        return resolve_threads(args.threads)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _out_dir_ok(path: Path) -> Path:
    if not path.parent.is_dir():
        raise UsageError(f"output directory {path.parent} does not exist")
    return path


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_aggregate(args) -> int:
    sources = {}
    for item in args.source:
        name, sep, path = item.partition("=")
        if not sep or not name or not path:
            raise UsageError(f"--source expects name=path, got {item!r}")
        if name in sources:
            raise UsageError(f"duplicate source name {name!r}")
        sources[name] = path
    if args.method == "kmeans" and (args.k is None or args.k < 1):
        raise UsageError("--method kmeans needs --k >= 1")
    if not 0 < args.fraction <= 1:
        raise UsageError("--fraction must be in (0, 1]")
    out = _out_dir_ok(Path(args.out))

    reps = []
    for name, path in sources.items():
        ds = load_vectors(path, args.format, name=name)
        if len(ds) == 0:
            raise DataError(f"source {name!r} is empty")
        if args.method == "mean":
            reps.append(aggregate_mean(ds, args.fraction, args.seed))
        else:
            reps.extend(aggregate_kmeans(ds, args.k, args.seed, args.max_iters))
    anchors = AnchorSet(tuple(reps), args.metric)
    _atomic_write(out, json.dumps(anchors.to_json()) + "\n")
    _write_config(out, args)
    return EXIT_OK


def _load_anchors(args) -> AnchorSet:
    return AnchorSet.load(args.anchors, args.metric)


def cmd_label(args) -> int:
    try:
        policy = parse_policy(args.policy)
    except PolicyError as exc:
        raise UsageError(str(exc)) from None
    threads = _threads(args)
    out = _out_dir_ok(Path(args.out))

    anchors = _load_anchors(args)
    targets = load_vectors(args.targets, args.format)
    labeler = Labeler(anchors)
    labeler.check(policy)
    batch = labeler.label_batch(targets, policy, threads)
    lines = [
        json.dumps(lab.to_json(targets.ids[i], policy))
        for i, lab in enumerate(batch.labels)
        if lab is not None
    ]
    _atomic_write(out, "".join(line + "\n" for line in lines))
    _write_config(out, args)
    err_path = out.with_name(out.name + ".errors.jsonl")
    if batch.errors:
        _atomic_write(
            err_path,
            "".join(json.dumps({"index": e.index, "id": e.id, "error": e.message}) + "\n" for e in batch.errors),
        )
        print(f"{len(batch.errors)} of {len(targets)} items failed; see {err_path}", file=sys.stderr)
        return EXIT_PARTIAL
    err_path.unlink(missing_ok=True)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not 1 <= args.d <= 8:
        raise UsageError("--d must be in [1, 8]")
    threads = _threads(args)
    out = _out_dir_ok(Path(args.out))

    anchors = _load_anchors(args)
    targets = load_vectors(args.targets, args.format)
    result = sweep(targets, anchors, args.d, threads)
    if args.heatmap in ("csv", "both"):
        export_heatmap(result, out.with_name(out.name + ".csv"), "csv")
    if args.heatmap in ("pgm", "both"):
        export_heatmap(result, out.with_name(out.name + ".pgm"), "pgm")
    counts = sorted(result.unique_counts.items(), key=lambda kv: (kv[1], kv[0]))
    _atomic_write(
        out.with_name(out.name + ".counts.csv"),
        "policy,count\n" + "".join(f"{p},{c}\n" for p, c in counts),
    )
    _write_config(out, args)
    if result.item_errors:
        _atomic_write(
            out.with_name(out.name + ".item_errors.json"),
            json.dumps(result.item_errors, indent=2) + "\n",
        )
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_divergence(args) -> int:
    if not args.epsilon > 0:
        raise UsageError("--epsilon must be positive")
    if not 0 < args.fraction <= 1:
        raise UsageError("--fraction must be in (0, 1]")
    target = load_vectors(args.target, args.format)
    reference = load_vectors(args.reference, args.format)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        value = dataset_divergence(target, reference, args.fraction, args.seed, args.epsilon)
    report = {
        "target": args.target,
        "reference": args.reference,
        "divergence": value,
        "warnings": [str(w.message) for w in caught],
        "config": _config(args),
    }
    text = json.dumps(report, indent=2) + "\n"
    if args.out:
        out = _out_dir_ok(Path(args.out))
        _atomic_write(out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_synth(args) -> int:
    out_dir = Path(args.out_dir)
    if args.spec:
        specs, dim = load_specs(args.spec)
        dim = args.dim or dim or (len(specs[0].center) if specs else None)
    else:
        dim = args.dim or 256
        specs = outlier_scenario(dim=dim, count=args.count)
    out_dir.mkdir(parents=True, exist_ok=True)
    parts, combined = generate(specs, dim, args.seed)
    ext = args.format
    for ds in parts + [combined]:
        write_vectors(ds, out_dir / f"{ds.name}.{ext}", ext)
    save_specs(specs, out_dir / "clusters.json", dim)
    _atomic_write(out_dir / "synth.config.json", json.dumps(_config(args), indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_count(args) -> int:
    if args.dmax < 1:
        raise UsageError("--dmax must be >= 1")
    rows = ["d,length,count"]
    for d in range(1, args.dmax + 1):
        for length in range(d, 2 * d + 1):
            rows.append(f"{d},{length},{count_policies_by_length(d, length)}")
        rows.append(f"{d},total,{count_policies(d)}")
    sys.stdout.write("\n".join(rows) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="g2l", description="Geometric pseudo-labels from extremal simplex content.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common_threads(sp):
        sp.add_argument("--threads", type=int, default=None, help="worker threads (default: $G2L_THREADS or 1)")

    a = sub.add_parser("aggregate", help="build an anchor set from named vector files")
    a.add_argument("--source", action="append", required=True, metavar="NAME=PATH")
    a.add_argument("--method", choices=("mean", "kmeans"), default="mean")
    a.add_argument("--k", type=int)
    a.add_argument("--fraction", type=float, default=1.0)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--max-iters", type=int, default=100)
    a.add_argument("--metric", choices=METRICS, default="euclidean")
    a.add_argument("--format", choices=("csv", "jsonl"))
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_aggregate)

    lab = sub.add_parser("label", help="pseudo-label target vectors")
    lab.add_argument("--anchors", required=True)
    lab.add_argument("--targets", required=True)
    lab.add_argument("--policy", required=True)
    lab.add_argument("--metric", choices=METRICS, help="override the anchor file's metric (default euclidean)")
    lab.add_argument("--format", choices=("csv", "jsonl"))
    lab.add_argument("--out", required=True)
    common_threads(lab)
    lab.set_defaults(func=cmd_label)

    sw = sub.add_parser("sweep", help="entropy of every policy of length d")
    sw.add_argument("--anchors", required=True)
    sw.add_argument("--targets", required=True)
    sw.add_argument("--d", type=int, required=True)
    sw.add_argument("--metric", choices=METRICS)
    sw.add_argument("--format", choices=("csv", "jsonl"))
    sw.add_argument("--heatmap", choices=("csv", "pgm", "both"), default="both")
    sw.add_argument("--out", required=True, help="output prefix")
    common_threads(sw)
    sw.set_defaults(func=cmd_sweep)

    dv = sub.add_parser("divergence", help="KL divergence between dataset mean vectors")
    dv.add_argument("target")
    dv.add_argument("reference")
    dv.add_argument("--fraction", type=float, default=1.0)
    dv.add_argument("--seed", type=int, default=0)
    dv.add_argument("--epsilon", type=float, default=1e-10)
    dv.add_argument("--format", choices=("csv", "jsonl"))
    dv.add_argument("--out")
    dv.set_defaults(func=cmd_divergence)

    sy = sub.add_parser("synth", help="write seeded synthetic cluster data")
    sy.add_argument("--spec", help="cluster spec JSON (default: built-in outlier scenario)")
    sy.add_argument("--dim", type=int)
    sy.add_argument("--count", type=int, default=40)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    sy.add_argument("--out-dir", required=True)
    sy.set_defaults(func=cmd_synth)

    ct = sub.add_parser("count", help="policy and label-length counting identities")
    ct.add_argument("--dmax", type=int, required=True)
    ct.set_defaults(func=cmd_count)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"g2l {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, OSError) as exc:
        print(f"g2l {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
