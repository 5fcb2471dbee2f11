"""Maximum-likelihood training with noise injection and an adaptive curriculum.

An epoch draws ``epoch_size`` training examples: a task is sampled from the
curriculum distribution, then one of that task's records uniformly.  Every
``refresh_every`` epochs a fresh validation slice is generated, per-task error
rates are measured on it and the curriculum becomes
``p ~ exp(error / tau)``, floored at ``eps_min``.
"""

from __future__ import annotations

import json
import logging
import math
import re
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .datagen.catalog import build_catalog
from .datagen.generate import HOLDOUT_FRACTION, generate_record
from .datagen.records import ExampleRecord
from .evaluation import predict, topk_correct
from .model import ModelDims, NPBEModel, sequence_loss
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.optim import RMSProp, RMSPropConfig, clip_grad_norm
from .nn.tensor import backward

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
_CKPT = re.compile(r"^ckpt-(\d+)$")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    scale: str = "toy"
    epochs: int = 30
    batch_size: int = 200
    epoch_size: int = 0  # 0: number of training records
    lr: float = 1e-3
    rho: float = 0.9
    eps: float = 1e-8
    clip_norm: float = 5.0
    noise_sigma: float = 0.01
    noise_halve_every: int = 20
    tau: float = 0.2
    eps_min: float = 0.0  # 0: 0.5 / number of tasks
    refresh_every: int = 10
    val_per_task: int = 50
    seed: int = 0
    holdout: float = HOLDOUT_FRACTION

    @classmethod
    def from_mapping(cls, values: dict) -> "TrainConfig":
        types = {f.name: f.type for f in fields(cls)}
        out = {}
        for k, v in values.items():
            k = k.replace("-", "_")
            if k not in types:
                raise KeyError(f"unknown training option {k!r}")
            kind = {"int": int, "float": float, "str": str}[types[k]]
            out[k] = kind(v)
        return cls(**out)


# ------------------------------------------------------------------- curriculum


@dataclass
class CurriculumState:
    task_ids: list
    error_rates: list
    probs: list
    tau: float
    eps_min: float
    refresh_every: int = 10

    @classmethod
    def uniform(cls, task_ids: Sequence[int], tau: float, eps_min: float, refresh_every: int = 10):
        n = len(task_ids)
        return cls(list(task_ids), [1.0] * n, [1.0 / n] * n, tau, eps_min, refresh_every)

    def refreshed(self, error_rates: Sequence[float]) -> "CurriculumState":
        probs = refresh_curriculum(error_rates, self.tau, self.eps_min)
        return CurriculumState(
            list(self.task_ids), [float(e) for e in error_rates], probs.tolist(), self.tau, self.eps_min,
            self.refresh_every,
        )


def refresh_curriculum(error_rates: Sequence[float], tau: float = 0.2, eps_min: float = 0.0) -> np.ndarray:
    """Softmax of error_rate / tau, then every entry raised to at least ``eps_min``.

    Mass for the floor is taken proportionally from the unfloored entries, so
    the order of the probabilities (and hence error-rate monotonicity) is kept.
    """
    e = np.asarray(error_rates, dtype=np.float64)
    if e.size == 0:
        raise ValueError("no tasks")
    if np.any((e < 0) | (e > 1)):
        raise ValueError("error rates must lie in [0, 1]")
    if eps_min * e.size > 1:
        raise ValueError("floor too large for the number of tasks")
    z = e / tau
    p = np.exp(z - z.max())
    p /= p.sum()
    floored = np.zeros(e.size, dtype=bool)
    while True:
        low = (p < eps_min) & ~floored
        if not low.any():
            break
        floored |= low
        free = 1.0 - eps_min * floored.sum()
        rest = p[~floored]
        p[floored] = eps_min
        p[~floored] = rest * (free / rest.sum())
    return p


# ---------------------------------------------------------------------- helpers


def noise_at(cfg: TrainConfig, epoch: int) -> float:
    return cfg.noise_sigma * 0.5 ** ((epoch - 1) // cfg.noise_halve_every)


def find_latest_checkpoint(ckpt_dir: str | Path) -> Path | None:
    ckpt_dir = Path(ckpt_dir)
    if not ckpt_dir.is_dir():
        return None
    found = [(int(m.group(1)), p) for p in ckpt_dir.iterdir() if (m := _CKPT.match(p.name))]
    return max(found)[1] if found else None


def load_model(path: str | Path) -> tuple[NPBEModel, dict]:
    params, _, meta = load_checkpoint(path)
    model = NPBEModel(ModelDims.from_dict(meta["dims"]), seed=0)
    model.load_state_dict(params)
    return model, meta


@dataclass
class _Pool:
    inputs: list
    outputs: list
    targets: np.ndarray


def _pools(records: Sequence[ExampleRecord]) -> dict[int, _Pool]:
    by_task: dict[int, list[ExampleRecord]] = {}
    for r in records:
        by_task.setdefault(r.task_id, []).append(r)
    return {
        t: _Pool([r.input for r in rs], [r.output for r in rs], np.array([r.program_ids for r in rs]))
        for t, rs in sorted(by_task.items())
    }


def validation_slice(task_ids: Sequence[int], n: int, seed: int, epoch: int, holdout: float) -> list[ExampleRecord]:
    """Fresh records for curriculum error estimates; a pure function of (seed, epoch)."""
    catalog = build_catalog()
    by_id = {t.id: t for t in catalog}
    out = []
    for t in task_ids:
        task = by_id[t]
        rng = np.random.default_rng([seed, t, 7, epoch])
        part = "seen" if task.rq2 else None
        out.extend(generate_record(task, catalog, rng, "train", part, seed, holdout) for _ in range(n))
    return out


def per_task_top1(model: NPBEModel, records: Sequence[ExampleRecord]) -> dict[int, float]:
    if not records:
        return {}
    lp = predict(model, [r.input for r in records], [r.output for r in records])
    ok = topk_correct(lp, np.array([r.program_ids for r in records]), 1)
    tasks = np.array([r.task_id for r in records])
    return {int(t): float(ok[tasks == t].mean()) for t in sorted(set(tasks.tolist()))}


def _dump_batch(path: Path, batch: list[tuple[str, str, np.ndarray]]):
    with open(path, "w", encoding="utf-8") as f:
        for x, y, ids in batch:
            f.write(json.dumps({"input": x, "output": y, "program_ids": [int(i) for i in ids]}) + "\n")


# ------------------------------------------------------------------------ train


@dataclass
class TrainResult:
    model: NPBEModel
    history: list = field(default_factory=list)
    curriculum: CurriculumState | None = None

    @property
    def final_loss(self) -> float:
        return self.history[-1]["mean_loss"] if self.history else math.nan


def train(
    records: Sequence[ExampleRecord],
    cfg: TrainConfig,
    ckpt_dir: str | Path | None = None,
    resume: bool = False,
    dims: ModelDims | None = None,
    validation: bool = True,
) -> TrainResult:
    """Train a model on the ``train`` split of ``records``.

    With ``ckpt_dir`` a checkpoint ``ckpt-{epoch}`` is written after every
    epoch and metrics are appended to ``metrics.jsonl``; ``resume`` continues
    from the newest checkpoint there.  ``validation=False`` skips the
    validation slice (the curriculum then stays uniform).
    """
    train_recs = [r for r in records if r.split == "train"]
    if not train_recs:
        raise ValueError("no training records")
    pools = _pools(train_recs)
    task_ids = list(pools)
    dims = dims or ModelDims.preset(cfg.scale)
    eps_min = cfg.eps_min or 0.5 / len(task_ids)
    epoch_size = cfg.epoch_size or len(train_recs)

    model = NPBEModel(dims, seed=cfg.seed)
    opt = RMSProp(model.params, RMSPropConfig(cfg.lr, cfg.rho, cfg.eps))
    rng = np.random.default_rng([cfg.seed, 1])
    cur = CurriculumState.uniform(task_ids, cfg.tau, eps_min, cfg.refresh_every)
    start = 1
    val_epoch = None
    history: list[dict] = []

    ckpt_dir = Path(ckpt_dir) if ckpt_dir is not None else None
    if ckpt_dir is not None:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
        latest = find_latest_checkpoint(ckpt_dir) if resume else None
        if latest is not None:
            params, optim, meta = load_checkpoint(latest)
            if ModelDims.from_dict(meta["dims"]) != dims:
                raise ValueError(f"{latest}: checkpoint dims differ from the requested configuration")
            model.load_state_dict(params)
            opt.load_state_dict(optim)
            rng.bit_generator.state = meta["rng_state"]
            cur = CurriculumState(**meta["curriculum"])
            val_epoch = meta.get("val_epoch")
            start = int(meta["epoch"]) + 1
            log.info("resumed from %s at epoch %d", latest, start)
        elif not resume and (ckpt_dir / METRICS_FILE).exists():
            (ckpt_dir / METRICS_FILE).unlink()

    val = validation_slice(task_ids, cfg.val_per_task, cfg.seed, val_epoch, cfg.holdout) if (
        validation and val_epoch is not None) else []

    params = model.parameter_list()
    for epoch in range(start, cfg.epochs + 1):
        t0 = time.time()
        if validation and (epoch - 1) % cfg.refresh_every == 0:
            val_epoch = epoch
            val = validation_slice(task_ids, cfg.val_per_task, cfg.seed, epoch, cfg.holdout)
            if epoch > 1:
                top1 = per_task_top1(model, val)
                cur = cur.refreshed([1.0 - top1[t] for t in task_ids])
                log.info("curriculum refreshed: %s", dict(zip(task_ids, np.round(cur.probs, 3))))
        sigma = noise_at(cfg, epoch)
        picks = rng.choice(len(task_ids), size=epoch_size, p=np.asarray(cur.probs))
        losses = []
        clipped = 0
        for lo in range(0, epoch_size, cfg.batch_size):
            batch = []
            for ti in picks[lo:lo + cfg.batch_size]:
                pool = pools[task_ids[ti]]
                j = int(rng.integers(len(pool.inputs)))
                batch.append((pool.inputs[j], pool.outputs[j], pool.targets[j]))
            xs, ys, tg = zip(*batch)
            out = model.forward(xs, ys, training=True, noise=sigma, rng=rng)
            loss = sequence_loss(out, np.stack(tg))
            value = float(loss.data)
            if not np.isfinite(value):
                if ckpt_dir is not None:
                    _dump_batch(ckpt_dir / f"nan-batch-epoch{epoch}.jsonl", batch)
                raise TrainingDiverged(f"non-finite loss {value} at epoch {epoch}, batch starting {lo}")
            backward(loss, params)
            _, was_clipped = clip_grad_norm(params, cfg.clip_norm)
            clipped += was_clipped
            opt.step()
            losses.append(value * len(batch))
        mean_loss = float(sum(losses) / epoch_size)
        top1 = per_task_top1(model, val) if val else {}
        rec = {
            "epoch": epoch,
            "mean_loss": mean_loss,
            "per_task_top1": {str(k): v for k, v in top1.items()},
            "curriculum_probs": {str(t): p for t, p in zip(task_ids, cur.probs)},
            "noise_sigma": sigma,
            "clipped_batches": clipped,
            "wall_time": time.time() - t0,
        }
        history.append(rec)
        log.info("epoch %d loss %.4f top1 %s", epoch, mean_loss, rec["per_task_top1"])
        if ckpt_dir is not None:
            meta = {
                "dims": dims.to_dict(),
                "config": asdict(cfg),
                "epoch": epoch,
                "rng_state": rng.bit_generator.state,
                "curriculum": asdict(cur),
                "val_epoch": val_epoch,
                "mean_loss": mean_loss,
            }
            save_checkpoint(ckpt_dir / f"ckpt-{epoch}", model.state_dict(), opt.state_dict(), meta)
            with open(ckpt_dir / METRICS_FILE, "a", encoding="utf-8") as f:
                f.write(json.dumps(rec, sort_keys=True) + "\n")
    return TrainResult(model, history, cur)
