"""Command-line entry point: ``qmcnet <subcommand> ...``.

Exit codes: 0 on success, 1 on runtime failure, 2 on bad flags.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .data import engineer_features, read_qsat, synth_dataset, write_qsat
from .designer import PRESET_NAMES, CircuitSpec, RubricThresholds, design_circuit, instantiate, preset
from .features import CHANNELS
from .metrics import BandMetrics, dataset_band_metrics
from .qasm import export_circuit
from .training import TrainConfig, ablate, evaluate_checkpoint, train

log = logging.getLogger("qmcnet")


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _echo(payload: dict) -> None:
    print("resolved config: " + json.dumps(payload, sort_keys=True), file=sys.stderr)


def cmd_metrics(args) -> None:
    ds = engineer_features(read_qsat(args.data))
    images = ds.channels(CHANNELS)
    if args.max_images:
        images = images[: args.max_images]
    _echo({"data": args.data, "max_images": args.max_images})
    report = {name: dataset_band_metrics(images, i).to_dict() for i, name in enumerate(CHANNELS)}
    _write(json.dumps(report, indent=2) + "\n", args.out)


def cmd_design(args) -> None:
    metrics = json.loads(Path(args.metrics).read_text())
    thresholds = RubricThresholds(**json.loads(Path(args.thresholds).read_text())) if args.thresholds else RubricThresholds()
    _echo({"metrics": args.metrics, "max_qubits": args.max_qubits})
    bands = [args.band] if args.band else list(metrics)
    out = {b: design_circuit(BandMetrics.from_dict(metrics[b]), thresholds, args.max_qubits).to_dict() for b in bands}
    _write(json.dumps(out, indent=2) + "\n", args.out)


def _load_train_config(path: str) -> tuple[TrainConfig, dict]:
    raw = json.loads(Path(path).read_text())
    run = {k: raw.pop(k) for k in ("data", "out", "synth") if k in raw}
    return TrainConfig.from_dict(raw), run


def _dataset_for(run: dict, override: str | None):
    if override:
        return read_qsat(override)
    if "data" in run:
        return read_qsat(run["data"])
    if "synth" in run:
        return synth_dataset(**run["synth"])
    raise ValueError("no dataset given (use --data or a 'data' key in the config)")


def cmd_train(args) -> None:
    cfg, run = _load_train_config(args.config)
    out = args.out or run.get("out") or "runs/train"
    _echo({**cfg.to_dict(), "out": out})
    res = train(cfg, _dataset_for(run, args.data), out)
    if args.plot_data:
        _write(res.log_csv(), args.plot_data)
    best = max(res.rows, key=lambda r: (r["val_acc"], -r["val_loss"]))
    print(json.dumps({"best_epoch": best["epoch"], "val_acc": best["val_acc"], "out": out}))


def cmd_eval(args) -> None:
    _echo({"checkpoint": args.checkpoint, "data": args.data, "split": args.split})
    report = evaluate_checkpoint(args.checkpoint, read_qsat(args.data), args.split)
    _write(report.to_json(), args.out)


def cmd_ablate(args) -> None:
    cfg, run = _load_train_config(args.config)
    out = args.out or run.get("out") or f"runs/ablate-{args.mode}"
    _echo({**cfg.to_dict(), "mode": args.mode, "out": out})
    _, summary = ablate(args.mode, cfg, _dataset_for(run, args.data), out)
    sys.stdout.write(summary)


def cmd_synth(args) -> None:
    _echo({"seed": args.seed, "n": args.n, "classes": args.classes, "size": args.size})
    write_qsat(args.out, synth_dataset(args.seed, args.n, args.classes, args.size))


def cmd_export(args) -> None:
    if args.spec:
        circuit = instantiate(CircuitSpec.from_dict(json.loads(Path(args.spec).read_text())), max_q=12)
    else:
        circuit = preset(args.preset)
    params = features = None
    if args.params:
        params = np.asarray(json.loads(Path(args.params).read_text()), dtype=float)
    elif args.random_seed is not None:
        params = np.random.default_rng(args.random_seed).uniform(-np.pi, np.pi, circuit.num_variational_params)
    if args.features:
        features = np.asarray(json.loads(Path(args.features).read_text()), dtype=float)
    _echo({"preset": args.preset, "spec": args.spec, "format": args.format, "seed": args.random_seed})
    _write(export_circuit(circuit, params, features, args.format), args.out)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qmcnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("metrics", help="per-band complexity metrics of a QSAT dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--out")
    s.add_argument("--max-images", type=int)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("design", help="circuit specs from a metrics JSON")
    s.add_argument("--metrics", required=True)
    s.add_argument("--max-qubits", type=int, default=8)
    s.add_argument("--thresholds")
    s.add_argument("--band")
    s.add_argument("--out")
    s.set_defaults(func=cmd_design)

    s = sub.add_parser("train", help="train a model from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--data")
    s.add_argument("--out")
    s.add_argument("--plot-data", help="write per-epoch loss/accuracy curves as CSV")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test", choices=["train", "val", "test", "all"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("ablate", help="ansatz or band ablation suite")
    s.add_argument("--mode", required=True, choices=["ansatz", "bands"])
    s.add_argument("--config", required=True)
    s.add_argument("--data")
    s.add_argument("--out")
    s.set_defaults(func=cmd_ablate)

    s = sub.add_parser("synth", help="write a synthetic QSAT dataset")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n", type=int, default=600)
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--size", type=int, default=16)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("export-circuit", help="export a circuit as OpenQASM 2.0")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--preset", choices=PRESET_NAMES)
    g.add_argument("--spec", help="CircuitSpec JSON file")
    s.add_argument("--params", help="JSON list of parameter values (omit for symbolic)")
    s.add_argument("--random-seed", type=int, help="bind uniformly random parameters")
    s.add_argument("--features", help="JSON list of feature values (omit for symbolic)")
    s.add_argument("--format", default="qasm2")
    s.add_argument("--out")
    s.set_defaults(func=cmd_export)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - surface every failure as exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
