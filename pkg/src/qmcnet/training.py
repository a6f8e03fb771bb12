"""Training loop, evaluation reports and the two ablation suites."""

from __future__ import annotations

import io
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn
from .data import Dataset, engineer_features, make_splits
from .designer import BANDS
from .features import minmax
from .model import ModelConfig, QMCNet

log = logging.getLogger(__name__)

LOG_HEADER = "epoch,train_loss,train_acc,val_loss,val_acc"

ANSATZ_SUITE = ("no-quantum", "mono-ry", "mono-bellman", "mono-realamp", "band-specific")

BAND_SUITE = (
    ("R", "G", "B"),
    ("R", "G", "B", "EVI"),
    ("R", "G", "B", "NDVI"),
    ("R", "G", "B", "Entropy"),
    ("R", "G", "B", "EVI", "NDVI"),
    ("R", "G", "B", "EVI", "Entropy"),
    ("R", "G", "B", "NDVI", "Entropy"),
    ("EVI", "NDVI", "Entropy"),
    ("R", "G", "B", "EVI", "NDVI", "Entropy"),
)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 5e-4
    patch_size: int = 8
    seed: int = 0
    residual: bool = False
    assignment: str = "eurosat"
    split: str = "eurosat-70-15-15"
    split_fractions: tuple | None = None
    bands: tuple | None = None
    no_quantum: bool = False
    hidden: int = 128
    dropout: float = 0.3
    scaling: str = "per-image"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2 (batch norm)")
        if self.scaling not in ("per-image", "dataset"):
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.bands is not None:
            self.bands = tuple(self.bands)
        if self.split_fractions is not None:
            self.split_fractions = tuple(self.split_fractions)

    @classmethod
    def desk(cls, **overrides) -> "TrainConfig":
        """Minutes-scale defaults for the synthetic dataset."""
        base = dict(
            epochs=15,
            batch_size=32,
            lr=0.01,
            patch_size=4,
            assignment="toy",
            split="custom",
            split_fractions=(4 / 6, 1 / 6, 1 / 6),
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("split_fractions", "bands"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)


# --- inputs -------------------------------------------------------------------


def channel_ranges(ds: Dataset, bands, indices) -> np.ndarray:
    x = ds.channels(bands)[indices]
    return np.stack([x.min(axis=(0, 2, 3)), x.max(axis=(0, 2, 3))], axis=1)


def prepare_inputs(ds: Dataset, bands, scaling: str = "per-image", ranges=None) -> np.ndarray:
    """Model inputs (N, len(bands), H, W) scaled to [0, 1]."""
    x = ds.channels(bands)
    if scaling == "per-image":
        return np.stack([[minmax(c) for c in img] for img in x])
    lo, hi = np.asarray(ranges, dtype=np.float64).T
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.clip((x - lo[None, :, None, None]) / span[None, :, None, None], 0.0, 1.0)


def build_model_config(cfg: TrainConfig, ds: Dataset) -> ModelConfig:
    return ModelConfig.from_assignment(
        cfg.assignment,
        patch_size=cfg.patch_size,
        image_size=ds.image_size,
        num_classes=ds.num_classes,
        bands=cfg.bands,
        no_quantum=cfg.no_quantum,
        hidden=cfg.hidden,
        dropout=cfg.dropout,
        residual=cfg.residual,
    )


# --- evaluation ---------------------------------------------------------------


@dataclass
class EvalReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    confusion: list
    per_class_accuracy: list
    class_names: list = field(default_factory=list)

    @classmethod
    def from_confusion(cls, cm, class_names=()) -> "EvalReport":
        """All metrics from a K x K count matrix (rows: true class, cols: predicted).

        Macro averages give 0 precision / recall / F1 to classes with no
        predictions or no samples.
        """
        cm = np.asarray(cm, dtype=np.int64)
        tp = np.diag(cm).astype(np.float64)
        support = cm.sum(axis=1)
        predicted = cm.sum(axis=0)
        recall = np.divide(tp, support, out=np.zeros_like(tp), where=support > 0)
        precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
        denom = precision + recall
        f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
        return cls(
            accuracy=float(tp.sum() / cm.sum()),
            precision=float(precision.mean()),
            recall=float(recall.mean()),
            f1=float(f1.mean()),
            confusion=cm.tolist(),
            per_class_accuracy=recall.tolist(),
            class_names=list(class_names),
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def confusion_matrix(labels, preds, k: int) -> np.ndarray:
    cm = np.zeros((k, k), dtype=np.int64)
    np.add.at(cm, (np.asarray(labels, dtype=np.intp), np.asarray(preds, dtype=np.intp)), 1)
    return cm


def evaluate(model: QMCNet, ds: Dataset, indices=None, scaling: str = "per-image", ranges=None) -> EvalReport:
    """Infer-mode metrics of ``model`` on ``ds`` (optionally a subset)."""
    ds = engineer_features(ds)
    if ds.image_size != model.config.image_size or ds.num_classes != model.config.num_classes:
        raise ValueError("checkpoint config does not match the dataset")
    if indices is not None:
        ds = ds.subset(indices)
    x = prepare_inputs(ds, model.config.bands, scaling, ranges)
    preds = model.predict_logits(x).argmax(axis=1)
    return EvalReport.from_confusion(confusion_matrix(ds.labels, preds, ds.num_classes), ds.class_names)


# --- training -----------------------------------------------------------------


@dataclass
class TrainResult:
    model: QMCNet  # best-validation checkpoint
    rows: list[dict]
    splits: dict
    ranges: np.ndarray | None
    checkpoints: list[dict]

    def log_csv(self) -> str:
        return format_log(self.rows)


def format_log(rows) -> str:
    out = io.StringIO()
    out.write(LOG_HEADER + "\n")
    for r in rows:
        out.write(f"{r['epoch']},{r['train_loss']:.10f},{r['train_acc']:.10f},{r['val_loss']:.10f},{r['val_acc']:.10f}\n")
    return out.getvalue()


def _batched_loss(model: QMCNet, x, y, batch_size: int) -> tuple[float, float]:
    total, correct = 0.0, 0
    for i in range(0, len(y), batch_size):
        logits = model.forward(x[i : i + batch_size], train=False)[0]
        loss, _ = nn.cross_entropy(logits, y[i : i + batch_size])
        total += loss * len(logits)
        correct += int((logits.argmax(axis=1) == y[i : i + batch_size]).sum())
    return total / len(y), correct / len(y)


def _copy(model: QMCNet) -> QMCNet:
    return QMCNet(
        model.config,
        {k: v.copy() for k, v in model.params.items()},
        {k: v.copy() for k, v in model.buffers.items()},
        model.seed,
        model.step,
    )


def train(cfg: TrainConfig, ds: Dataset, out_dir=None) -> TrainResult:
    """Seeded minibatch Adam; keeps the best-validation model.

    Best means highest validation accuracy, ties broken by lower validation
    loss. With ``out_dir`` the log CSV, resolved config and checkpoint are written there.
    """
    ds = engineer_features(ds)
    splits = make_splits(ds.labels, cfg.split, cfg.seed, cfg.split_fractions)
    tr, va = splits["train"], splits["val"]
    if cfg.batch_size > len(tr):
        raise ValueError(f"batch size {cfg.batch_size} exceeds the {len(tr)} training samples")
    if len(va) == 0:
        raise ValueError("validation split is empty")
    model = QMCNet.create(build_model_config(cfg, ds), cfg.seed)
    bands = model.config.bands
    ranges = channel_ranges(ds, bands, tr) if cfg.scaling == "dataset" else None
    x_all = prepare_inputs(ds, bands, cfg.scaling, ranges)
    y_all = ds.labels.astype(np.intp)
    opt = nn.AdamState(lr=cfg.lr)
    rows, checkpoints = [], []
    best, best_key = None, None

    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, epoch]).permutation(tr)
        batches = [order[i : i + cfg.batch_size] for i in range(0, len(order), cfg.batch_size)]
        if len(batches) > 1 and len(batches[-1]) < 2:
            batches[-2] = np.concatenate(batches[-2:])
            batches.pop()
        loss_sum, correct = 0.0, 0
        for idx in batches:
            model.step += 1
            loss, grads, logits = model.loss_and_grads(x_all[idx], y_all[idx])
            nn.adam_step(model.params, grads, opt)
            loss_sum += loss * len(idx)
            correct += int((logits.argmax(axis=1) == y_all[idx]).sum())
        val_loss, val_acc = _batched_loss(model, x_all[va], y_all[va], max(cfg.batch_size, 64))
        row = {
            "epoch": epoch,
            "train_loss": loss_sum / len(tr),
            "train_acc": correct / len(tr),
            "val_loss": val_loss,
            "val_acc": val_acc,
        }
        rows.append(row)
        key = (val_acc, -val_loss)
        if best_key is None or key > best_key:
            best, best_key = _copy(model), key
            checkpoints.append({"epoch": epoch, "val_loss": val_loss, "val_acc": val_acc})
        log.info("epoch %d train_loss %.4f val_loss %.4f val_acc %.4f", epoch, row["train_loss"], val_loss, val_acc)

    result = TrainResult(best, rows, splits, ranges, checkpoints)
    if out_dir is not None:
        save_run(result, cfg, out_dir)
    return result


def save_run(result: TrainResult, cfg: TrainConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "log.csv").write_text(result.log_csv())
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    extra = {
        "train_config": cfg.to_dict(),
        "ranges": None if result.ranges is None else result.ranges.tolist(),
        "splits": {k: v.tolist() for k, v in result.splits.items()},
        "checkpoints": result.checkpoints,
    }
    result.model.save(out / "checkpoint", extra)


def evaluate_checkpoint(path, ds: Dataset, split: str = "test") -> EvalReport:
    """Load a checkpoint written by :func:`train` and score one of its splits (or ``all``)."""
    model, extra = QMCNet.load(path)
    tc = extra.get("train_config", {})
    indices = None if split == "all" else extra["splits"][split]
    return evaluate(model, ds, indices, tc.get("scaling", "per-image"), extra.get("ranges"))


# --- ablations ----------------------------------------------------------------


def ablation_configs(mode: str, cfg: TrainConfig, subsets=None) -> dict[str, TrainConfig]:
    if mode == "ansatz":
        out = {}
        for name in ANSATZ_SUITE:
            if name == "no-quantum":
                out[name] = replace(cfg, no_quantum=True)
            elif name == "band-specific":
                out[name] = cfg
            else:
                out[name] = replace(cfg, assignment=name)
        return out
    if mode == "bands":
        subsets = BAND_SUITE if subsets is None else subsets
        out = {}
        for s in subsets:
            if not s:
                raise ValueError("empty band subset")
            bad = set(s) - set(BANDS)
            if bad:
                raise ValueError(f"unknown bands {sorted(bad)}")
            out["+".join(s)] = replace(cfg, bands=tuple(s))
        return out
    raise ValueError(f"unknown ablation mode {mode!r}")


def ablate(mode: str, cfg: TrainConfig, ds: Dataset, out_dir=None, subsets=None) -> tuple[dict[str, EvalReport], str]:
    """Train and test one model per ablation row; returns reports and a CSV summary."""
    reports = {}
    for name, c in ablation_configs(mode, cfg, subsets).items():
        log.info("ablation %s: %s", mode, name)
        sub = None if out_dir is None else Path(out_dir) / name
        res = train(c, ds, sub)
        rep = evaluate(res.model, ds, res.splits["test"], c.scaling, res.ranges)
        reports[name] = rep
        if sub is not None:
            (sub / "report.json").write_text(rep.to_json())
    lines = ["config,width,accuracy,precision,recall,f1"]
    for name, c in ablation_configs(mode, cfg, subsets).items():
        r = reports[name]
        width = build_model_config(c, engineer_features(ds)).channels
        lines.append(f"{name},{width},{r.accuracy:.6f},{r.precision:.6f},{r.recall:.6f},{r.f1:.6f}")
    summary = "\n".join(lines) + "\n"
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "summary.csv").write_text(summary)
    return reports, summary
