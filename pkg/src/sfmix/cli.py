"""``sfmix`` command line.

The single-step subcommands (gen-data, train-source, build-proxy, adapt) draw
from the same per-seed streams as ``run``, so chaining them with one config
and seed reproduces ``run``'s checkpoints exactly.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness
from .config import ExperimentConfig, load_config
from .data import load_csv, write_csv
from .errors import FormatError
from .mixadapt import adapt
from .model import checkpoint_bytes, load_checkpoint, save_checkpoint
from .numkit import spawn_rngs
from .proxy import SELECTORS, ProxyDomain
from .source import write_loss_trace

log = logging.getLogger("sfmix")


class UsageError(Exception):
    pass


def _seeds(text: str) -> tuple:
    try:
        seeds = tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def _config(args) -> ExperimentConfig:
    if args.config is None:
        cfg = ExperimentConfig()
    else:
        if not Path(args.config).is_file():
            raise UsageError(f"config file not found: {args.config}")
        cfg = load_config(args.config)
    if getattr(args, "seeds", None):
        cfg = cfg.replace("experiment", seeds=args.seeds)
    return cfg


def _stream(seed: int, name: str):
    return dict(zip(harness._STREAMS, spawn_rngs(seed, len(harness._STREAMS))))[name]


def _load_target(path, cfg):
    return load_csv(path, labeled=True, n_classes=cfg.data.n_classes, role="target")


def cmd_gen_data(args, cfg):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    source, train, test = harness.prepare_data(cfg, args.seed)
    write_csv(source, out / "source.csv")
    write_csv(train, out / "target_train.csv")
    if test is not None:
        write_csv(test, out / "target_test.csv")
    return f"wrote {len(source)} source / {len(train)} target-train rows to {out}"


def cmd_train_source(args, cfg):
    source = load_csv(args.data, labeled=True, n_classes=cfg.data.n_classes, role="source")
    net, trace = harness.source_phase(cfg, args.seed, source)
    save_checkpoint(net, args.out)
    if args.trace:
        write_loss_trace(trace, args.trace)
    return f"source model: train acc {harness.accuracy(net, source):.4f}, saved {args.out}"


def cmd_build_proxy(args, cfg):
    if args.selector:
        cfg = cfg.replace("proxy", selector=args.selector)
    if args.n_per_class:
        cfg = cfg.replace("proxy", n_per_class=args.n_per_class)
    net = load_checkpoint(args.checkpoint)
    target = _load_target(args.target, cfg)
    proxy = harness.select_proxy(cfg, net, target, _stream(args.seed, "select"))
    proxy.to_csv(args.out)
    return f"{cfg.proxy.selector} proxy: {len(proxy)} entries, saved {args.out}"


def cmd_adapt(args, cfg):
    net = load_checkpoint(args.checkpoint)
    target = _load_target(args.target, cfg)
    proxy = ProxyDomain.from_csv(args.proxy, selector=cfg.proxy.selector)
    if len(proxy) and proxy.indices.max() >= len(target):
        raise FormatError("proxy indices exceed the target set")
    net, trace = adapt(target.unlabeled(), proxy, net, cfg.adapt, cfg.mixup, cfg.pseudo,
                       _stream(args.seed, "adapt"))
    net.meta = {**net.meta, "phase": "adapted"}
    save_checkpoint(net, args.out)
    if args.trace:
        with open(args.trace, "w") as fh:
            for row in trace:
                fh.write(json.dumps(row) + "\n")
    return f"adapted {cfg.adapt.epochs} epochs, sha256 {harness.sha256(checkpoint_bytes(net))[:12]}, saved {args.out}"


def _summary(records) -> str:
    parts = []
    for rec in records:
        if rec.per_seed:
            parts.append(f"{rec.name}: no-adapt {rec.mean('no_adapt_test_acc'):.4f} -> "
                         f"adapted {rec.mean('adapted_test_acc'):.4f}")
        else:
            parts.append(f"{rec.name}: failed")
        if rec.failures:
            parts[-1] += f" ({len(rec.failures)} failed seed(s))"
    return "; ".join(parts)


def cmd_run(args, cfg):
    out = Path(args.out or cfg.experiment.output_dir)
    record = harness.run(cfg, out)
    harness.emit_report([record], out)
    return _summary([record])


def cmd_ablate(args, cfg):
    out = Path(args.out or cfg.experiment.output_dir)
    records = harness.ablation_matrix(cfg, args.dimension, out)
    harness.emit_report(records, out)
    return f"{len(records)} records -> {out}/records.jsonl; " + _summary(records)


def cmd_report(args, cfg):
    records = harness.load_records(args.records)
    out = Path(args.out) if args.out else Path(args.records).parent
    formats = ("csv",) if out.resolve() == Path(args.records).resolve().parent else ("jsonl", "csv")
    paths = harness.emit_report(records, out, formats)
    return f"{len(records)} records -> {', '.join(p.name for p in paths)}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sfmix", description="Source-free adaptation on synthetic shifts.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def add(name, func, help_text, seeded=True):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="INI config (defaults when omitted)")
        if seeded:
            sp.add_argument("--seed", type=int, default=0)
        sp.set_defaults(func=func)
        return sp

    sp = add("gen-data", cmd_gen_data, "write source / target CSVs for one seed")
    sp.add_argument("--out", required=True, help="output directory")

    sp = add("train-source", cmd_train_source, "train the source model")
    sp.add_argument("--data", required=True, help="labeled source CSV")
    sp.add_argument("--out", required=True, help="checkpoint path")
    sp.add_argument("--trace", help="write the per-epoch loss CSV here")

    sp = add("build-proxy", cmd_build_proxy, "select the proxy source domain")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--target", required=True, help="target-train CSV")
    sp.add_argument("--out", required=True, help="proxy CSV path")
    sp.add_argument("--selector", choices=SELECTORS)
    sp.add_argument("--n-per-class", type=int)

    sp = add("adapt", cmd_adapt, "adapt a source checkpoint to the target")
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--target", required=True, help="target-train CSV (labels ignored)")
    sp.add_argument("--proxy", required=True, help="proxy CSV from build-proxy")
    sp.add_argument("--out", required=True, help="adapted checkpoint path")
    sp.add_argument("--trace", help="write per-epoch JSON lines here")

    sp = add("run", cmd_run, "full pipeline over the config's seeds", seeded=False)
    sp.add_argument("--seeds", type=_seeds, help="comma separated, overrides the config")
    sp.add_argument("--out", help="output directory (default: experiment.output_dir)")

    sp = add("ablate", cmd_ablate, "ablation matrix over one or more dimensions", seeded=False)
    sp.add_argument("--dimension", action="append", required=True, choices=harness.DIMENSIONS)
    sp.add_argument("--seeds", type=_seeds)
    sp.add_argument("--out")

    sp = sub.add_parser("report", help="rebuild CSV tables from records.jsonl")
    sp.add_argument("--records", required=True)
    sp.add_argument("--out", help="output directory (default: next to the records)")
    sp.set_defaults(func=cmd_report, config=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _config(args)
        print(args.func(args, cfg))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"sfmix: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("command failed", exc_info=True)
        print(f"sfmix: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
