"""Command-line entry point.

Exit codes: 0 success, 1 user or config error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import tensor_core, verify
from .config import ConfigError, TrainConfig, load_config
from .data_synth import build_dataset, load_dataset, manifest_hash, save_dataset
from .vae.checkpoint import load_checkpoint, save_checkpoint
from .vae.train import NumericalError, nll_report, train

log = logging.getLogger("tvgpvae")

EXIT_OK, EXIT_USER, EXIT_NUMERIC = 0, 1, 2
SPLITS = ("train", "val", "test")
# model variants for the comparison table: name -> latent modes (from the config sizes)
VARIANTS = ("vae", "temporal", "spatial", "spatiotemporal")


class UserError(Exception):
    """Bad input that is not a config parse error (missing files, shape mismatches)."""


# --- commands -----------------------------------------------------------------

def cmd_gen_data(config: TrainConfig) -> Path:
    spec = config.dataset_spec()
    with threadpool_limits(limits=config.threads):
        ds = build_dataset(spec, config.data_split, workers=config.threads)
    try:
        save_dataset(config.data_dir, ds)
    except OSError as exc:
        raise UserError(f"cannot write dataset to {config.data_dir}: {exc}") from None
    print(f"wrote {spec.n} sequences to {config.data_dir} (manifest sha256 {manifest_hash(config.data_dir)})")
    return Path(config.data_dir)


def _load_data(directory):
    try:
        return load_dataset(directory)
    except FileNotFoundError as exc:
        raise UserError(f"{exc}; run gen-data first") from None


def _check_dims(dataset, dims, what):
    got = tuple(dataset.spec.dims)
    if got != tuple(dims):
        raise UserError(f"dataset dims {got} do not match {what} dims {tuple(dims)}")


def cmd_train(config: TrainConfig) -> Path:
    dataset = _load_data(config.data_dir)
    _check_dims(dataset, config.data_dims, "config")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    metrics_path, timing_path = out / "metrics.jsonl", out / "timing.jsonl"
    with threadpool_limits(limits=config.threads), open(metrics_path, "w") as mf:
        def on_epoch(record):
            mf.write(json.dumps(record) + "\n")
            mf.flush()
            log.info("epoch %d train_elbo %.3f val_elbo %s", record["epoch"], record["train_elbo"],
                     record["val_elbo"])

        result = train(dataset.subset("train"), config, val=dataset.subset("val"), on_epoch=on_epoch)
    # wall-clock times live apart from the metrics so the metrics log stays reproducible
    timing_path.write_text("".join(json.dumps(t) + "\n" for t in result.timings))
    save_checkpoint(out, result.params, config, result.best_epoch)
    last = result.metrics[-1]["epoch"]
    reason = "early stop" if result.stopped_early else "epoch cap"
    print(f"trained {last} epochs ({reason}); best epoch {result.best_epoch}, "
          f"best val loss {result.best_val_loss}; checkpoint in {out}")
    return out


def _open_checkpoint(directory):
    try:
        return load_checkpoint(directory)
    except (FileNotFoundError, ConfigError) as exc:
        raise UserError(f"cannot load checkpoint {directory}: {exc}") from None


def cmd_eval(checkpoint, split: str, data_dir=None, seed: int | None = None) -> dict:
    config, model, params, _ = _open_checkpoint(checkpoint)
    dataset = _load_data(data_dir if data_dir is not None else config.data_dir)
    _check_dims(dataset, model.data_dims, "checkpoint")
    seed = config.seed if seed is None else seed
    with threadpool_limits(limits=config.threads):
        report = nll_report(model, params, dataset.subset(split), seed)
    report.update(split=split, seed=seed)
    path = Path(checkpoint) / f"eval_{split}.json"
    path.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    print(f"{split}: nll {report['nll_mean']:.4f} +/- {report['nll_se']:.4f} "
          f"(n={report['n']}, kl {report['kl_mean']:.4f})")
    return report


def cmd_reconstruct(checkpoint, index: int, out, data_dir=None) -> Path:
    config, model, params, _ = _open_checkpoint(checkpoint)
    dataset = _load_data(data_dir if data_dir is not None else config.data_dir)
    _check_dims(dataset, model.data_dims, "checkpoint")
    if not 0 <= index < len(dataset.data):
        raise UserError(f"index {index} out of range for {len(dataset.data)} sequences")
    x = dataset.data[index]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tensor_core.save(out / "original.tvt", x)
    tensor_core.save(out / "reconstruction.tvt", model.reconstruct(params, x))
    print(f"wrote original.tvt and reconstruction.tvt to {out}")
    return out


def cmd_verify(suite: str | None = None) -> bool:
    if suite is not None and suite not in verify.SUITES:
        raise UserError(f"unknown suite {suite!r}; choose from {', '.join(verify.SUITES)}")
    results = verify.run_suites([suite] if suite else None)
    for r in results:
        print(r.line())
    return all(r.passed for r in results)


def variant_modes(config: TrainConfig) -> dict:
    sizes = {"W": 4, "H": 4, "T": 4}
    sizes.update(dict(config.latent_spec().modes))

    def fmt(names):
        return ",".join(f"{n}:{sizes[n]}" for n in names)

    return {"vae": "", "temporal": fmt("T"), "spatial": fmt("WH"), "spatiotemporal": fmt("WHT")}


def cmd_compare(config: TrainConfig, seeds=(0, 1, 2), split: str = "val") -> list[dict]:
    """Train every variant for each seed on one dataset and rank them by mean NLL."""
    dataset = _load_data(config.data_dir)
    _check_dims(dataset, config.data_dims, "config")
    rows = []
    with threadpool_limits(limits=config.threads):
        for name, modes in variant_modes(config).items():
            nlls = []
            for seed in seeds:
                cfg = config.replace(seed=seed, latent_modes=modes)
                result = train(dataset.subset("train"), cfg, val=dataset.subset("val"))
                rep = nll_report(cfg.model(), result.params, dataset.subset(split), seed)
                nlls.append(rep["nll_mean"])
                log.info("%s seed %d: nll %.4f", name, seed, rep["nll_mean"])
            se = float(np.std(nlls, ddof=1) / math.sqrt(len(nlls))) if len(nlls) > 1 else float("nan")
            rows.append({"variant": name, "modes": modes, "nll": nlls,
                         "nll_mean": float(np.mean(nlls)), "nll_se": se})
    rows.sort(key=lambda r: r["nll_mean"])
    print(f"{'rank':<5}{'variant':<16}{'modes':<14}{split + ' nll':>12}  se")
    for i, r in enumerate(rows, start=1):
        print(f"{i:<5}{r['variant']:<16}{r['modes'] or '-':<14}{r['nll_mean']:>12.4f}  {r['nll_se']:.4f}")
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "compare.json").write_text(json.dumps(rows, indent=1) + "\n")
    return rows


# --- argument handling ------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    # usage errors are user errors; argparse's default status 2 is reserved for numerical failures
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="tvgpvae", description="Tensor-variate GP-prior VAE tools.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--config", required=True, type=Path)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config", required=True, type=Path)

    p = sub.add_parser("eval", help="negative log-likelihood on a dataset split")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--split", required=True, choices=SPLITS)
    p.add_argument("--data", type=Path, help="dataset directory (default: from the checkpoint config)")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("reconstruct", help="write a sequence and its reconstruction")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--index", required=True, type=int)
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--data", type=Path)

    p = sub.add_parser("verify", help="run the oracle suites")
    p.add_argument("--suite", choices=list(verify.SUITES))

    p = sub.add_parser("compare", help="rank the four model variants")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    p.add_argument("--split", default="val", choices=SPLITS)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "gen-data":
            cmd_gen_data(load_config(args.config))
        elif args.command == "train":
            cmd_train(load_config(args.config))
        elif args.command == "eval":
            cmd_eval(args.checkpoint, args.split, args.data, args.seed)
        elif args.command == "reconstruct":
            cmd_reconstruct(args.checkpoint, args.index, args.out, args.data)
        elif args.command == "verify":
            return EXIT_OK if cmd_verify(args.suite) else EXIT_NUMERIC
        elif args.command == "compare":
            seeds = tuple(int(s) for s in args.seeds.split(","))
            cmd_compare(load_config(args.config), seeds, args.split)
    except (ConfigError, UserError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USER
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
