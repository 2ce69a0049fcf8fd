"""Command line front end: train / sweep / eval / gradcheck / decompose /
median-scan / dump-data, with reproducible file outputs per run directory."""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import metrics, nets, trainer
from .config import ConfigError, TrainConfig, override, parse_config, serialize
from .data import DatasetSpec, dump_csv, make_splits
from .gradcheck import run_gradcheck

METRIC_COLUMNS = [
    "run_id", "variant", "seed", "step", "loss_d", "loss_g_gan", "loss_aux",
    "loss_rec", "modes_captured", "hq_fraction", "mean_abs_err", "var_rel_err",
    "diversity", "wall_ms",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if np.isnan(v) else repr(v)
    return str(v)


def _load_config(path: str) -> TrainConfig:
    cfg = parse_config(path)
    env_seed = os.environ.get("MRLAB_SEED")
    if env_seed is not None:
        cfg = override(cfg, seed=int(env_seed))
    return cfg


def _write_metrics_csv(path: Path, cfg: TrainConfig, history) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRIC_COLUMNS)
        for row in history:
            writer.writerow([
                cfg.run_id(), cfg.variant, cfg.seed, row.step,
                _fmt(row.loss_d), _fmt(row.loss_g_gan), _fmt(row.loss_aux),
                _fmt(row.loss_rec), _fmt(row.modes_captured), _fmt(row.hq_fraction),
                _fmt(row.mean_abs_err), _fmt(row.var_rel_err), _fmt(row.diversity),
                "",  # wall time lives in the manifest so metrics.csv stays reproducible
            ])


def _write_samples_csv(path: Path, result: trainer.TrainResult) -> None:
    cfg = result.config
    ds = cfg.dataset_spec()
    rng = np.random.default_rng(cfg.seed + 777)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if ds.dx == 0:
            writer.writerow([f"y{i}" for i in range(ds.dy)])
            for row in result.sample(None, 5000, rng):
                writer.writerow([repr(float(v)) for v in row])
        else:
            writer.writerow(["x"] + [f"y{i}" for i in range(ds.dy)])
            for xv in np.linspace(-1.0, 1.0, 21):
                for row in result.sample(float(xv), 20, rng):
                    writer.writerow([repr(float(xv))] + [repr(float(v)) for v in row])


def run_training(cfg: TrainConfig, out_dir: Path) -> int:
    """Train one configuration and persist all run artifacts."""
    out_dir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        result = trainer.train_gan(cfg)
    except Exception as exc:  # unexpected failure: leave a marker, not silence
        (out_dir / "FAILED").write_text(f"{type(exc).__name__}: {exc}\n", encoding="utf-8")
        raise
    elapsed_ms = (time.time() - started) * 1000.0

    _write_metrics_csv(out_dir / "metrics.csv", cfg, result.history)
    _write_samples_csv(out_dir / "samples.csv", result)
    if result.generator is not None:
        nets.save_checkpoint(out_dir / "generator.npz", result.generator,
                             seed=cfg.seed, step=cfg.steps)
    if result.discriminator is not None:
        nets.save_checkpoint(out_dir / "discriminator.npz", result.discriminator,
                             seed=cfg.seed, step=cfg.steps)
    if result.predictor is not None:
        nets.save_checkpoint(out_dir / "predictor.npz", result.predictor,
                             seed=cfg.seed, step=cfg.steps)

    final = result.history[-1] if result.history else None
    manifest = {
        "run_id": cfg.run_id(),
        "config": serialize(cfg),
        "seed": cfg.seed,
        "version": _version(),
        "started_unix": started,
        "wall_ms": elapsed_ms,
        "status": result.status,
        "predictor_best_epoch": result.predictor_best_epoch,
        "final_metrics": None if final is None else {
            "step": final.step,
            "modes_captured": final.modes_captured,
            "hq_fraction": final.hq_fraction,
            "mean_abs_err": final.mean_abs_err,
            "var_rel_err": final.var_rel_err,
            "diversity": final.diversity,
        },
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n",
                                           encoding="utf-8")
    if result.status != "ok":
        (out_dir / "FAILED").write_text(result.status + "\n", encoding="utf-8")
        return 1
    return 0


def _version() -> str:
    from importlib.metadata import PackageNotFoundError, version

    try:
        return version("mrlab")
    except PackageNotFoundError:
        return "dev"


def cmd_train(args) -> int:
    cfg = _load_config(args.config)
    return run_training(cfg, Path(args.out))


def _sweep_one(payload) -> tuple[str, int, dict]:
    cfg_text, key, value, out_dir = payload
    from .config import parse_string

    cfg = override(parse_string(cfg_text), **{key: value})
    code = run_training(cfg, Path(out_dir))
    manifest = json.loads((Path(out_dir) / "manifest.json").read_text(encoding="utf-8"))
    return str(value), code, manifest


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    key = args.key
    if key not in serialize(cfg):
        raise ConfigError(f"unknown sweep key {key!r}")
    raw_values = [v for v in args.values.split(",") if v.strip()]
    field_type = type(getattr(cfg, key))
    values = [field_type(v) for v in raw_values]
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)

    payloads = [
        (serialize(cfg), key, v, str(out_root / f"{key}_{raw}"))
        for raw, v in zip(raw_values, values)
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, payloads))
    else:
        results = []
        for payload in payloads:
            try:
                results.append(_sweep_one(payload))
            except Exception as exc:
                print(f"run {payload[2]} failed: {exc}", file=sys.stderr)
                results.append((str(payload[2]), 1, {"status": f"failed: {exc}",
                                                     "run_id": "", "final_metrics": None}))

    with open(out_root / "summary.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([key, "run_id", "status", "modes_captured", "hq_fraction",
                         "mean_abs_err", "var_rel_err", "diversity"])
        for value, _code, manifest in results:
            fm = manifest.get("final_metrics") or {}
            writer.writerow([
                value, manifest.get("run_id", ""), manifest.get("status", ""),
                _fmt(fm.get("modes_captured")), _fmt(fm.get("hq_fraction")),
                _fmt(fm.get("mean_abs_err")), _fmt(fm.get("var_rel_err")),
                _fmt(fm.get("diversity")),
            ])
    return 0 if all(code == 0 for _v, code, _m in results) else 1


def cmd_gradcheck(_args) -> int:
    items = run_gradcheck()
    worst_failures = 0
    for item in items:
        flag = "ok" if item.ok else "FAIL"
        print(f"{item.name:24s} max_rel_err={item.max_rel_error:.3e} "
              f"(threshold {item.threshold:.0e}) {flag}")
        worst_failures += 0 if item.ok else 1
    print(f"{len(items)} checks, {worst_failures} failures")
    return 0 if worst_failures == 0 else 1


def _builtin_samples(name: str, n: int = 10000) -> np.ndarray:
    spec = DatasetSpec(kind=name, n_train=n, seed=0)
    train, _val, _test = make_splits(spec)
    return train.y.ravel()


def cmd_decompose(args) -> int:
    if args.source in ("two_delta", "hetero_gaussian", "cond_bimodal"):
        y = _builtin_samples(args.source)
        y_hat = np.full(max(2, args.n_hat), args.constant)
    else:
        rows = np.genfromtxt(args.source, delimiter=",", names=True)
        y = np.asarray(rows["y"], dtype=np.float64)
        y_hat = np.asarray(rows["y_hat"], dtype=np.float64)
    report = metrics.se_ve_decomposition(y, y_hat)
    print(f"var_y = {report.var_y:.6g}")
    print(f"se    = {report.se:.6g}")
    print(f"ve    = {report.ve:.6g}")
    print(f"total = {report.total:.6g}")
    print(f"identity_residual = {report.identity_residual:.3e}")
    return 0


def cmd_median_scan(args) -> int:
    if args.source == "two_delta":
        values = np.array([-1.0, 1.0])
        probs = np.array([0.5, 0.5])
    else:
        rows = np.genfromtxt(args.source, delimiter=",", names=True)
        values = np.asarray(rows["value"], dtype=np.float64)
        probs = np.asarray(rows["prob"], dtype=np.float64)
    lo = values.min() - 1.0
    hi = values.max() + 1.0
    grid = np.arange(lo, hi + args.grid_step / 2, args.grid_step)
    argmin, (a, b), min_value = metrics.l1_minimizer_scan(values, probs, grid)
    print(f"min_value = {min_value:.6g}")
    print(f"argmin range = [{argmin.min():.6g}, {argmin.max():.6g}] ({argmin.size} grid points)")
    print(f"median interval = [{a:.6g}, {b:.6g}]")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    g, _header = nets.load_checkpoint(args.checkpoint)
    snap = trainer._evaluate(g, cfg, step=0)
    for key, value in snap.items():
        print(f"{key} = {_fmt(value) or 'n/a'}")
    return 0


def cmd_dump_data(args) -> int:
    cfg = _load_config(args.config)
    train, _val, _test = make_splits(cfg.dataset_spec())
    dump_csv(train, args.out)
    print(f"wrote {len(train)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrlab",
                                     description="Moment-matching GAN laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sweep", help="one run per value of a numeric config key")
    p.add_argument("config")
    p.add_argument("--key", required=True)
    p.add_argument("--values", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("gradcheck", help="finite-difference check of all ops and losses")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("decompose", help="squared-error decomposition report")
    p.add_argument("source", help="built-in dataset name or CSV with y,y_hat columns")
    p.add_argument("--constant", type=float, default=1.0,
                   help="constant prediction used with a built-in dataset")
    p.add_argument("--n-hat", type=int, default=2)
    p.set_defaults(fn=cmd_decompose)

    p = sub.add_parser("median-scan", help="brute-force l1 minimizer scan")
    p.add_argument("source", help="'two_delta' or CSV with value,prob columns")
    p.add_argument("--grid-step", type=float, default=1e-3)
    p.set_defaults(fn=cmd_median_scan)

    p = sub.add_parser("eval", help="evaluate a generator checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("config")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("dump-data", help="dump a dataset's training split to CSV")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dump_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
