"""Multi-seed experiment runner, ablation matrices and report files.

Only this module touches target ground truth: it scores models, proxy purity
and per-epoch accuracy through callbacks, while ``adapt`` sees an
``UnlabeledView``.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import math
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .data import Dataset, generate_shift_pair, split_target
from .errors import InvalidArgumentError
from .mixadapt import adapt
from .model import (Network, checkpoint_bytes, checkpoint_from_bytes, extract, forward,
                    init_network)
from .numkit import spawn_rngs
from .proxy import (ProxyConfig, ProxyDomain, build_proxy, entropy_guided_select, proxy_purity,
                    random_select)
from .source import SmoothingConfig, train_source

log = logging.getLogger(__name__)

# Streams per seed, in spawn order. Appending is safe; reordering changes results.
_STREAMS = ("split", "init", "source", "select", "adapt")

# Loss-term combinations for the ablation: (use_ps, use_inter, use_intra)
LOSS_COMBOS = {
    "ps": (True, False, False),
    "inter": (False, True, False),
    "intra": (False, False, True),
    "ps+inter": (True, True, False),
    "ps+intra": (True, False, True),
    "ps+inter+intra": (True, True, True),
}
LOSS_COMBOS_ALL = {**LOSS_COMBOS, "inter+intra": (False, True, True)}
DIMENSIONS = ("loss", "loss-all", "selector", "aggregation")


def accuracy(net: Network, ds: Dataset) -> float:
    return float(np.mean(forward(net, ds.x).probs.argmax(axis=1) == ds.labels))


def per_class_accuracy(net: Network, ds: Dataset) -> list:
    pred = forward(net, ds.x).probs.argmax(axis=1)
    out = []
    for k in range(ds.n_classes):
        mask = ds.labels == k
        out.append(float(np.mean(pred[mask] == k)) if mask.any() else None)
    return out


def sha256(buf: bytes) -> str:
    return hashlib.sha256(buf).hexdigest()


def prepare_data(cfg: ExperimentConfig, seed: int):
    """(source, target-train, target-test) for one seed."""
    source, target = generate_shift_pair(cfg.data.shift_spec(seed))
    rngs = dict(zip(_STREAMS, spawn_rngs(seed, len(_STREAMS))))
    train, test = split_target(target, cfg.data.test_fraction, rngs["split"])
    return source, train, test


_SOURCE_CACHE: dict = {}


def source_phase(cfg: ExperimentConfig, seed: int, source: Dataset):
    """Trained source checkpoint bytes and loss trace; memoised per (config, seed)."""
    key = (json.dumps([cfg.to_dict()[s] for s in ("data", "model", "source")], sort_keys=True), seed)
    if key not in _SOURCE_CACHE:
        rngs = dict(zip(_STREAMS, spawn_rngs(seed, len(_STREAMS))))
        net = init_network(source.input_dim, source.n_classes, rngs["init"],
                           hidden=cfg.model.hidden, feature_dim=cfg.model.feature_dim)
        sc = cfg.source
        net, trace = train_source(source, net, sc.epochs, sc.lr, sc.batch_size,
                                  SmoothingConfig(source.n_classes, sc.alpha), rngs["source"])
        net.meta = {"phase": "source", "seed": seed, "source": cfg.to_dict()["source"],
                    "model": cfg.to_dict()["model"]}
        _SOURCE_CACHE[key] = (checkpoint_bytes(net), tuple(trace))
    buf, trace = _SOURCE_CACHE[key]
    return checkpoint_from_bytes(buf), list(trace)


def select_proxy(cfg: ExperimentConfig, net: Network, train: Dataset, rng) -> ProxyDomain:
    view = train.unlabeled()
    selector = cfg.proxy.selector
    if selector == "prototype":
        return build_proxy(extract(net, view.x), net.classifier, ProxyConfig(cfg.proxy.n_per_class))
    probs = forward(net, view.x).probs
    if selector == "entropy":
        return entropy_guided_select(probs)
    return random_select(probs.argmax(axis=1), cfg.proxy.n_per_class, view.n_classes, rng)


def run_seed(cfg: ExperimentConfig, seed: int, out_dir: Path | None = None) -> dict:
    source, train, test = prepare_data(cfg, seed)
    rngs = dict(zip(_STREAMS, spawn_rngs(seed, len(_STREAMS))))
    net, src_trace = source_phase(cfg, seed, source)
    src_bytes = checkpoint_bytes(net)
    classifier_before = net.classifier.copy()
    metrics = {
        "seed": seed,
        "source_train_acc": accuracy(net, source),
        "no_adapt_train_acc": accuracy(net, train),
        "no_adapt_test_acc": accuracy(net, test) if test is not None else None,
    }
    proxy = select_proxy(cfg, net, train, rngs["select"])
    purity, purity_per_class = proxy_purity(proxy, train.labels, train.n_classes)
    metrics["proxy_purity"] = purity
    metrics["proxy_purity_per_class"] = purity_per_class.tolist()
    metrics["proxy_class_counts"] = proxy.class_counts(train.n_classes).tolist()

    def evaluate(model):
        row = {"target_train_acc": accuracy(model, train)}
        if test is not None:
            row["target_test_acc"] = accuracy(model, test)
        return row

    net, trace = adapt(train.unlabeled(), proxy, net, cfg.adapt, cfg.mixup, cfg.pseudo,
                       rngs["adapt"], on_epoch=evaluate)
    net.meta = {**net.meta, "phase": "adapted"}
    adapted_bytes = checkpoint_bytes(net)
    metrics.update({
        "adapted_train_acc": accuracy(net, train),
        "adapted_test_acc": accuracy(net, test) if test is not None else None,
        "per_class_test_acc": per_class_accuracy(net, test) if test is not None else None,
        "classifier_frozen": bool(np.array_equal(classifier_before, net.classifier)),
        "source_checkpoint_sha256": sha256(src_bytes),
        "adapted_checkpoint_sha256": sha256(adapted_bytes),
        "source_loss_trace": src_trace,
        "adapt_trace": trace,
    })
    if out_dir is not None:
        seed_dir = Path(out_dir) / f"seed{seed}"
        seed_dir.mkdir(parents=True, exist_ok=True)
        (seed_dir / "source.ckpt").write_bytes(src_bytes)
        (seed_dir / "adapted.ckpt").write_bytes(adapted_bytes)
        proxy.to_csv(seed_dir / "proxy.csv")
    return metrics


SCALAR_METRICS = ("source_train_acc", "no_adapt_train_acc", "no_adapt_test_acc", "proxy_purity",
                  "adapted_train_acc", "adapted_test_acc")


@dataclass
class ExperimentRecord:
    name: str
    config: dict
    per_seed: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    aggregate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "config": self.config, "per_seed": self.per_seed,
                "failures": self.failures, "aggregate": self.aggregate}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentRecord":
        return cls(d["name"], d["config"], d["per_seed"], d["failures"], d["aggregate"])

    def mean(self, metric: str) -> float:
        return self.aggregate[metric]["mean"]


def aggregate(per_seed: list) -> dict:
    """Mean and population std of each scalar metric over the successful seeds."""
    out = {}
    for key in SCALAR_METRICS:
        vals = [row[key] for row in per_seed if row.get(key) is not None
                and not (isinstance(row[key], float) and math.isnan(row[key]))]
        if vals:
            out[key] = {"mean": statistics.fmean(vals), "std": statistics.pstdev(vals), "n": len(vals)}
    return out


def run(cfg: ExperimentConfig, out_dir=None, name: str | None = None) -> ExperimentRecord:
    """Every seed end to end; one failing seed is recorded and the rest continue."""
    record = ExperimentRecord(name or cfg.experiment.name, cfg.to_dict())
    for seed in cfg.experiment.seeds:
        try:
            record.per_seed.append(run_seed(cfg, seed, out_dir))
        except Exception as exc:  # isolate per-seed failures
            log.exception("seed %s failed", seed)
            record.failures.append({"seed": seed, "error": f"{type(exc).__name__}: {exc}"})
    record.aggregate = aggregate(record.per_seed)
    return record


def _cells(dimension: str, base: ExperimentConfig):
    if dimension in ("loss", "loss-all"):
        combos = LOSS_COMBOS if dimension == "loss" else LOSS_COMBOS_ALL
        for label, (ps, inter, intra) in combos.items():
            yield f"loss={label}", lambda c, p=ps, i=inter, a=intra: c.replace(
                "adapt", use_ps=p, use_inter=i, use_intra=a)
    elif dimension == "selector":
        for sel in ("prototype", "entropy", "random"):
            yield f"selector={sel}", lambda c, s=sel: c.replace("proxy", selector=s)
    elif dimension == "aggregation":
        for on in (True, False):
            yield f"aggregation={'on' if on else 'off'}", lambda c, o=on: c.replace("pseudo", aggregate=o)
    else:
        raise InvalidArgumentError(f"unknown ablation dimension {dimension!r}; choose from {DIMENSIONS}")


def ablation_matrix(base: ExperimentConfig, dimensions, out_dir=None) -> list[ExperimentRecord]:
    """One run per combination of the chosen dimensions, all on the base seeds."""
    if isinstance(dimensions, str):
        dimensions = [dimensions]
    axes = [list(_cells(d, base)) for d in dimensions]
    records = []
    for combo in itertools.product(*axes):
        cfg = base
        for _, change in combo:
            cfg = change(cfg)
        name = ",".join(label for label, _ in combo)
        cell_dir = None if out_dir is None else Path(out_dir) / name.replace("=", "-").replace(",", "_")
        try:
            records.append(run(cfg, cell_dir, name=name))
        except Exception as exc:
            log.exception("ablation cell %s failed", name)
            records.append(ExperimentRecord(name, cfg.to_dict(),
                                            failures=[{"seed": None, "error": f"{type(exc).__name__}: {exc}"}]))
    return records


# -- report files --------------------------------------------------------------

SUMMARY_HEADER = ["name", "selector", "use_ps", "use_inter", "use_intra", "aggregate", "n_seeds",
                  "n_failures"] + [f"{m}_{s}" for m in SCALAR_METRICS for s in ("mean", "std")]
PURITY_HEADER = ["name", "selector", "seed", "class", "purity", "count"]
TRACE_HEADER = ["name", "seed", "epoch", "ramp", "L_ps", "L_inter", "L_intra", "target_train_acc",
                "target_test_acc"]


def _clean(obj):
    """JSON-safe copy: NaN becomes null."""
    if isinstance(obj, float) and math.isnan(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def record_line(record: ExperimentRecord) -> str:
    return json.dumps(_clean(record.to_dict()), allow_nan=False)


def emit_report(records, out_dir, formats=("jsonl", "csv")) -> list[Path]:
    """Write records.jsonl and/or summary/purity/trace CSVs; returns the paths written."""
    records = list(records)
    if not records:
        raise InvalidArgumentError("no records to report")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "jsonl" in formats:
        path = out_dir / "records.jsonl"
        with open(path, "w") as fh:
            for rec in records:
                fh.write(record_line(rec) + "\n")
        written.append(path)
    if "csv" in formats:
        summary, purity, trace = (out_dir / "summary.csv", out_dir / "purity.csv", out_dir / "trace.csv")
        with open(summary, "w", newline="") as s_fh, open(purity, "w", newline="") as p_fh, \
                open(trace, "w", newline="") as t_fh:
            sw, pw, tw = csv.writer(s_fh), csv.writer(p_fh), csv.writer(t_fh)
            sw.writerow(SUMMARY_HEADER)
            pw.writerow(PURITY_HEADER)
            tw.writerow(TRACE_HEADER)
            for rec in records:
                c = rec.config
                row = [rec.name, c["proxy"]["selector"], c["adapt"]["use_ps"], c["adapt"]["use_inter"],
                       c["adapt"]["use_intra"], c["pseudo"]["aggregate"], len(rec.per_seed),
                       len(rec.failures)]
                for m in SCALAR_METRICS:
                    agg = rec.aggregate.get(m)
                    row += [agg["mean"], agg["std"]] if agg else [None, None]
                sw.writerow([_fmt(v) for v in row])
                for seed_row in rec.per_seed:
                    counts = seed_row["proxy_class_counts"]
                    for k, (p, n) in enumerate(zip(seed_row["proxy_purity_per_class"], counts)):
                        pw.writerow([_fmt(v) for v in (rec.name, c["proxy"]["selector"], seed_row["seed"],
                                                       k, _clean(p), n)])
                    for ep in seed_row["adapt_trace"]:
                        tw.writerow([_fmt(v) for v in (rec.name, seed_row["seed"], ep["epoch"], ep["ramp"],
                                                       ep["L_ps"], ep["L_inter"], ep["L_intra"],
                                                       ep.get("target_train_acc"),
                                                       ep.get("target_test_acc"))])
        written += [summary, purity, trace]
    return written


def load_records(path) -> list[ExperimentRecord]:
    with open(path) as fh:
        return [ExperimentRecord.from_dict(json.loads(line)) for line in fh if line.strip()]
