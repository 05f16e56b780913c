"""Full-batch training with early stopping, evaluation, and the depth sweep.

A run is deterministic given (config, seed): the seed sequence is split
into one stream for parameter initialization and one for dropout, and no
other randomness exists. Model selection keeps the parameters of the
epoch with the highest validation accuracy (ties keep the earlier epoch)
and reports test accuracy there.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .autodiff import Tape, adam_step
from .datasets import HyperPreset, sbm_preset
from .graph import Graph, NormAdj, normalize
from .model import BackboneOnly, LedfGnn, ModelVariant

MAX_EPOCHS = 500
PATIENCE = 100

# cheaper budget for the many small models of the depth sweep
SWEEP_MAX_EPOCHS = 300
SWEEP_PATIENCE = 40


def config_hash(config: dict) -> str:
    """Stable fingerprint of a config dict (canonical JSON, sha256)."""
    canon = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass
class TrainRun:
    """One seeded training trajectory and its selected model."""

    config: dict
    seed: int
    train_loss: np.ndarray
    val_acc: np.ndarray
    epoch_seconds: np.ndarray
    best_epoch: int
    best_val: float
    test_acc: float
    best_params: dict[str, np.ndarray]
    stopped_early: bool

    @property
    def epochs_run(self) -> int:
        return len(self.train_loss)

    @property
    def hash(self) -> str:
        return config_hash(self.config)


def build_model(variant: ModelVariant | None, graph: Graph,
                hyper: HyperPreset, rng: np.random.Generator):
    """variant None builds the bare backbone baseline."""
    if variant is None:
        return BackboneOnly.from_preset(graph, hyper, rng=rng)
    return LedfGnn.from_preset(variant, graph, hyper, rng=rng)


def evaluate(model, graph: Graph, adj: NormAdj, adj_r: NormAdj | None = None,
             tag: str = "test") -> float:
    """Fraction of split nodes whose argmax logit matches the label."""
    mask = graph.mask(tag)
    if not mask.any():
        raise ValueError(f"empty {tag!r} split")
    result = model.forward(Tape(), graph, adj, adj_r, training=False)
    pred = result.logits.data[mask].argmax(axis=1)
    return float((pred == graph.labels[mask]).mean())


def train(variant: ModelVariant | None, graph: Graph, adj: NormAdj,
          adj_r: NormAdj | None, hyper: HyperPreset, seed: int,
          max_epochs: int = MAX_EPOCHS, patience: int = PATIENCE) -> TrainRun:
    """Train one model full-batch with validation-based early stopping."""
    for tag in ("train", "valid", "test"):
        if not graph.mask(tag).any():
            raise ValueError(f"empty {tag!r} split")
    init_ss, drop_ss = np.random.SeedSequence(seed).spawn(2)
    model = build_model(variant, graph, hyper, np.random.default_rng(init_ss))
    drop_rng = np.random.default_rng(drop_ss)

    config = {
        **model.config_dict(),
        "dataset": hyper.dataset, "k": hyper.k, "gamma": hyper.gamma,
        "lr": hyper.lr, "weight_decay": hyper.weight_decay,
        "max_epochs": max_epochs, "patience": patience,
    }
    losses, vals, seconds = [], [], []
    best_val, best_epoch, best_snap = -np.inf, -1, None
    for epoch in range(max_epochs):
        t0 = time.perf_counter()
        tape, loss, _ = model.loss_on(graph, adj, adj_r, "train",
                                      training=True, rng=drop_rng)
        tape.backward(loss)
        adam_step(model.store, lr=hyper.lr,
                  weight_decay=hyper.weight_decay)
        val = evaluate(model, graph, adj, adj_r, "valid")
        seconds.append(time.perf_counter() - t0)
        losses.append(float(loss.data))
        vals.append(val)
        if val > best_val:
            best_val, best_epoch = val, epoch
            best_snap = model.store.snapshot()
        if epoch - best_epoch >= patience:
            break
    model.store.load_snapshot(best_snap)
    return TrainRun(
        config=config, seed=seed,
        train_loss=np.array(losses), val_acc=np.array(vals),
        epoch_seconds=np.array(seconds),
        best_epoch=best_epoch, best_val=best_val,
        test_acc=evaluate(model, graph, adj, adj_r, "test"),
        best_params=best_snap,
        stopped_early=len(losses) < max_epochs)


def train_seeds(variant, graph, adj, adj_r, hyper, seeds,
                max_epochs: int = MAX_EPOCHS, patience: int = PATIENCE,
                workers: int = 1) -> list[TrainRun]:
    """Independent runs over seeds; results in seed order regardless of
    worker count."""

    def one(seed):
        return train(variant, graph, adj, adj_r, hyper, seed,
                     max_epochs=max_epochs, patience=patience)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, seeds))
    return [one(seed) for seed in seeds]


@dataclass
class SeedSummary:
    """Mean and population spread of test accuracy over seeds."""

    seeds: tuple[int, ...]
    accs: np.ndarray
    mean: float
    std: float


def multi_seed(runs: list[TrainRun]) -> SeedSummary:
    if not runs:
        raise ValueError("need at least one run")
    accs = np.array([run.test_acc for run in runs])
    return SeedSummary(seeds=tuple(run.seed for run in runs), accs=accs,
                       mean=float(accs.mean()), std=float(accs.std(ddof=0)))


@dataclass
class SweepCurve:
    """Test accuracy as a function of propagation depth."""

    rounds: np.ndarray
    raw: np.ndarray
    normalized: np.ndarray

    @property
    def best_round(self) -> int:
        return int(self.rounds[int(np.argmax(self.raw))])


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def oversmoothing_sweep(graph: Graph, l_max: int, epsilon: float = 0.1,
                        hidden: int = 64, seed: int = 0,
                        max_epochs: int = SWEEP_MAX_EPOCHS,
                        patience: int = SWEEP_PATIENCE) -> SweepCurve:
    """Accuracy of a fresh 2-layer MLP on A^l F + epsilon F for each l.

    Propagation is precomputed outside the model, so only the MLP trains;
    l = 0 is the plain MLP on (1 + epsilon) F.
    """
    if l_max < 1:
        raise ValueError("l_max must be >= 1")
    adj = normalize(graph)
    hyper = sbm_preset("mlp", hidden=hidden)
    base = graph.features
    prop = base
    raw = []
    for l in range(l_max + 1):
        if l > 0:
            prop = adj.mat @ prop
        g_l = replace(graph, features=prop + epsilon * base)
        run = train(None, g_l, adj, None, hyper, seed,
                    max_epochs=max_epochs, patience=patience)
        raw.append(run.test_acc)
    raw = np.array(raw)
    return SweepCurve(rounds=np.arange(l_max + 1), raw=raw,
                      normalized=minmax_normalize(raw))


def write_run_log(run: TrainRun, root) -> Path:
    """Line-delimited epoch records plus a final summary, keyed by config."""
    out_dir = Path(root) / run.hash[:12]
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"seed{run.seed}.jsonl"
    with path.open("w") as fh:
        for epoch in range(run.epochs_run):
            fh.write(json.dumps({
                "epoch": epoch,
                "train_loss": run.train_loss[epoch],
                "val_acc": run.val_acc[epoch],
            }) + "\n")
        fh.write(json.dumps({"summary": {
            "seed": run.seed,
            "best_epoch": run.best_epoch,
            "best_val": run.best_val,
            "test_acc": run.test_acc,
            "epochs_run": run.epochs_run,
            "stopped_early": run.stopped_early,
            "max_epochs": run.config["max_epochs"],
            "patience": run.config["patience"],
            "config_hash": run.hash,
        }}) + "\n")
    config_path = out_dir / "config.json"
    if not config_path.exists():
        config_path.write_text(json.dumps(run.config, sort_keys=True,
                                          indent=2) + "\n")
    return path
