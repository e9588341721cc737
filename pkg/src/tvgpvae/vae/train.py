"""Mini-batch training with Adam and validation-based early stopping."""
from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..data_synth import split
from .model import TVGPVAE
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

# independent streams derived from the single config seed
_INIT, _SHUFFLE, _NOISE, _EVAL = 1, 2, 3, 4
# rounding slack for the KL >= 0 check on live batches
KL_TOL = 1e-8


class NumericalError(RuntimeError):
    """Training produced a non-finite loss or gradient."""


@dataclass
class TrainResult:
    params: dict
    metrics: list
    best_epoch: int | None
    best_val_loss: float | None
    stopped_early: bool
    timings: list = field(default_factory=list)


def _stack(data: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack([np.asarray(x, dtype=np.float64) for x in data])


def evaluate(model: TVGPVAE, params: dict, data: Sequence[np.ndarray], seed: int,
             batch_size: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Per-datum ``(recon, complexity)`` with noise from a fixed seeded stream."""
    X = _stack(data)
    rng = np.random.default_rng([seed, _EVAL])
    recon, kl = [], []
    for start in range(0, len(X), batch_size):
        xb = X[start:start + batch_size]
        r, k = model.elbo_batch(params, xb, model.draw_noise(rng, len(xb)))
        recon.append(r)
        kl.append(k)
    return np.concatenate(recon), np.concatenate(kl)


def nll_report(model: TVGPVAE, params: dict, data: Sequence[np.ndarray], seed: int) -> dict:
    """Mean and standard error of the negative log-likelihood (reconstruction loss)."""
    recon, kl = evaluate(model, params, data, seed)
    nll = -recon
    n = nll.size
    se = float(nll.std(ddof=1) / math.sqrt(n)) if n > 1 else float("nan")
    return {"n": n, "nll_mean": float(nll.mean()), "nll_se": se,
            "kl_mean": float(kl.mean()), "elbo_mean": float((recon - kl).mean())}


def train(dataset: Sequence[np.ndarray], config, val: Sequence[np.ndarray] | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Minimize the negative ELBO with Adam.

    If ``val`` is omitted, ``dataset`` is split with ``config.data_split`` and
    the config seed and its train/validation parts are used. Validation runs
    every ``config.eval_every`` epochs; training stops once the validation
    loss has failed to improve ``config.patience`` times in a row, and the
    parameters from the best evaluation are returned.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    if val is None:
        dataset, val, _ = split(dataset, config.data_split, config.seed)
    model = config.model()
    X = _stack(dataset)
    seed = config.seed
    params = model.init_params(np.random.default_rng([seed, _INIT]))
    state = AdamState.zeros(params)
    shuffle_rng = np.random.default_rng([seed, _SHUFFLE])
    noise_rng = np.random.default_rng([seed, _NOISE])

    metrics, timings = [], []
    best_loss, best_epoch, best_params = None, None, None
    bad_evals = 0
    stopped = False
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        order = shuffle_rng.permutation(len(X))
        tot_recon = tot_kl = 0.0
        for start in range(0, len(X), config.batch_size):
            idx = order[start:start + config.batch_size]
            noise = model.draw_noise(noise_rng, len(idx))
            loss, parts, grads = model.loss_and_grad(params, X[idx], noise)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NumericalError(
                    f"non-finite loss or gradient at epoch {epoch}, batch starting {start}: "
                    f"recon={parts.recon}, kl={parts.complexity}")
            if parts.complexity < -KL_TOL:
                raise NumericalError(f"negative KL {parts.complexity} at epoch {epoch}")
            params, state = adam_step(params, grads, state, config.lr)
            tot_recon += parts.recon * len(idx)
            tot_kl += parts.complexity * len(idx)
        record = {
            "epoch": epoch,
            "train_elbo": (tot_recon - tot_kl) / len(X),
            "train_recon": tot_recon / len(X),
            "train_kl": tot_kl / len(X),
            "val_elbo": None,
            "wall_ms": None,
        }
        if len(val) and epoch % config.eval_every == 0:
            recon, kl = evaluate(model, params, val, seed)
            val_elbo = float((recon - kl).mean())
            record["val_elbo"] = val_elbo
            if best_loss is None or -val_elbo < best_loss:
                best_loss, best_epoch, best_params = -val_elbo, epoch, params
                bad_evals = 0
            else:
                bad_evals += 1
                stopped = bad_evals >= config.patience
        wall_ms = (time.perf_counter() - t0) * 1e3
        timings.append({"epoch": epoch, "wall_ms": wall_ms})
        if getattr(config, "log_wall_time", False):
            record["wall_ms"] = wall_ms
        metrics.append(record)
        if on_epoch is not None:
            on_epoch(record)
        log.debug("epoch %d: %s", epoch, json.dumps(record))
        if stopped:
            break
    return TrainResult(best_params if best_params is not None else params, metrics,
                       best_epoch, best_loss, stopped, timings)
