"""Exact-match and Top-k program accuracy, and the two report tables.

A prediction is the argmax symbol at each of the 30 positions.  Top-k relaxes
only the integer argument of each Select step in the target: such a position
also counts as correct when the target integer is among the k most probable
of the 7 integer symbols.  Each Select position is relaxed independently.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .datagen.catalog import TaskTemplate, build_catalog
from .datagen.generate import generate_record, split_rng
from .datagen.records import ExampleRecord
from .dsl.symbols import INTEGERS, MAX_ARGS, MAX_STEPS, Func
from .model import N_POSITIONS, NPBEModel

INTEGER_IDS = np.array([int(a) for a in INTEGERS])
TOPK = (1, 3, 5)


def _check_len(a, b):
    if len(a) != N_POSITIONS or len(b) != N_POSITIONS:
        raise ValueError(f"program vectors must have {N_POSITIONS} ids, got {len(a)} and {len(b)}")


def exact_match(predicted: Sequence[int], target: Sequence[int]) -> bool:
    """All 30 positions equal, padding included."""
    _check_len(predicted, target)
    return all(int(p) == int(t) for p, t in zip(predicted, target))


def select_int_positions(target: Sequence[int]) -> list[int]:
    """Positions holding the integer argument of a Select step in ``target``."""
    out = []
    for t in range(MAX_STEPS):
        base = t * (1 + MAX_ARGS)
        if int(target[base]) == int(Func.Select):
            out.append(base + 2)
    return out


def topk_match(dists: Sequence[np.ndarray], target: Sequence[int], k: int) -> bool:
    """Top-k program match for one example; ``dists`` are 30 score vectors (probabilities or logits)."""
    _check_len(dists, target)
    if k < 1:
        raise ValueError("k must be >= 1")
    relaxed = set(select_int_positions(target)) if k > 1 else set()
    for pos, (d, t) in enumerate(zip(dists, target)):
        d = np.asarray(d)
        if int(np.argmax(d)) == int(t):
            continue
        if pos in relaxed and int(t) in INTEGER_IDS:
            scores = d[INTEGER_IDS]
            # stable ordering: ties broken toward lower symbol id
            top = INTEGER_IDS[np.argsort(-scores, kind="stable")[:k]]
            if int(t) in top:
                continue
        return False
    return True


def topk_correct(log_probs: Sequence[np.ndarray], targets: np.ndarray, k: int) -> np.ndarray:
    """Batched :func:`topk_match`: log_probs are 30 arrays (N, K); returns bool (N,)."""
    targets = np.asarray(targets)
    n = targets.shape[0]
    ok = np.ones(n, dtype=bool)
    arg = [lp.argmax(axis=1) for lp in log_probs]
    for pos in range(N_POSITIONS):
        ok &= arg[pos] == targets[:, pos]
    if k == 1:
        return ok
    for i in np.nonzero(~ok)[0]:
        ok[i] = topk_match([lp[i] for lp in log_probs], targets[i], k)
    return ok


def predict(model: NPBEModel, inputs: Sequence[str], outputs: Sequence[str], batch_size: int = 256) -> list[np.ndarray]:
    """Log-probabilities at the 30 positions, each (N, K), in inference mode."""
    parts: list[list[np.ndarray]] = [[] for _ in range(N_POSITIONS)]
    for lo in range(0, len(inputs), batch_size):
        out = model.forward(inputs[lo:lo + batch_size], outputs[lo:lo + batch_size])
        for pos, lp in enumerate(out.log_probs()):
            parts[pos].append(lp)
    return [np.concatenate(p, axis=0) for p in parts]


def argmax_ids(log_probs: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack([lp.argmax(axis=1) for lp in log_probs], axis=1)


def score_records(model: NPBEModel, records: Sequence[ExampleRecord], batch_size: int = 256) -> dict[int, dict]:
    """Top-1/3/5 accuracy per task over ``records``."""
    if not records:
        return {}
    lp = predict(model, [r.input for r in records], [r.output for r in records], batch_size)
    targets = np.array([r.program_ids for r in records])
    hits = {k: topk_correct(lp, targets, k) for k in TOPK}
    tasks = np.array([r.task_id for r in records])
    out = {}
    for t in sorted(set(tasks.tolist())):
        sel = tasks == t
        out[t] = {"n": int(sel.sum()), **{f"top{k}": float(hits[k][sel].mean()) for k in TOPK}}
    return out


def _names(catalog: Sequence[TaskTemplate] | None) -> dict[int, str]:
    return {t.id: t.name for t in (catalog if catalog is not None else build_catalog())}


@dataclass
class Report:
    title: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)

    def text(self) -> str:
        header = ["Task"] + self.columns
        body = [[r["name"]] + [_fmt(r[c]) for c in self.columns] for r in self.rows]
        widths = [max(len(str(row[i])) for row in [header] + body) for i in range(len(header))]
        lines = [self.title]
        for row in [header] + body:
            cells = [str(row[0]).ljust(widths[0])] + [str(c).rjust(w) for c, w in zip(row[1:], widths[1:])]
            lines.append("  ".join(cells))
        return "\n".join(lines)

    def jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.rows)

    def write(self, stem) -> None:
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        stem.with_suffix(".txt").write_text(self.text() + "\n")
        stem.with_suffix(".jsonl").write_text(self.jsonl())


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{100 * v:.1f}%"
    return str(v)


def rq1_report(scores: dict[int, dict], catalog: Sequence[TaskTemplate] | None = None) -> Report:
    names = _names(catalog)
    rep = Report("Top-k program accuracy per task", ["n", "top1", "top3", "top5"])
    for t, s in sorted(scores.items()):
        rep.rows.append({"task_id": t, "name": names.get(t, f"task {t}"), **s})
    if scores:
        avg = {f"top{k}": float(np.mean([s[f"top{k}"] for s in scores.values()])) for k in TOPK}
        rep.rows.append({
            "task_id": None,
            "name": f"Average over All {len(scores)} Tasks",
            "n": int(sum(s["n"] for s in scores.values())),
            **avg,
        })
    return rep


def fresh_rq1_records(
    tasks: Iterable[TaskTemplate], n: int, seed: int, catalog: Sequence[TaskTemplate] | None = None
) -> list[ExampleRecord]:
    """``n`` newly sampled test records per task (the test_rq1 stream of ``seed``)."""
    catalog = list(catalog) if catalog is not None else build_catalog()
    out = []
    for t in tasks:
        rng = split_rng(seed, t.id, "test_rq1")
        part = "seen" if t.rq2 else None
        out.extend(generate_record(t, catalog, rng, "test_rq1", part, seed) for _ in range(n))
    return out


def evaluate_rq1(
    model: NPBEModel,
    tasks: Sequence[TaskTemplate] | None = None,
    n: int = 1000,
    seed: int = 0,
    records: Sequence[ExampleRecord] | None = None,
    catalog: Sequence[TaskTemplate] | None = None,
) -> Report:
    """Per-task and average Top-1/3/5, on ``records`` if given, else on fresh samples."""
    catalog = list(catalog) if catalog is not None else build_catalog()
    if records is None:
        records = fresh_rq1_records(tasks if tasks is not None else catalog, n, seed, catalog)
    return rq1_report(score_records(model, records), catalog)


class DisjointnessError(ValueError):
    pass


def audit_rq2(records: Sequence[ExampleRecord], rq2_tasks: Iterable[int]) -> dict[int, int]:
    """Number of unseen-split labels that also occur in the seen splits, per task."""
    seen: dict[int, set] = {}
    unseen: dict[int, set] = {}
    for r in records:
        (unseen if r.split == "test_rq2" else seen).setdefault(r.task_id, set()).add(r.program_ids)
    return {t: len(seen.get(t, set()) & unseen.get(t, set())) for t in rq2_tasks}


def evaluate_rq2(
    model: NPBEModel,
    records: Sequence[ExampleRecord],
    rq2_tasks: Iterable[int] | None = None,
    catalog: Sequence[TaskTemplate] | None = None,
    k: int = 5,
) -> Report:
    """Top-k on seen-argument (test_rq1) vs unseen-argument (test_rq2) records of the RQ2 tasks.

    ``records`` must include every split of those tasks so disjointness can
    be re-audited; any overlap raises :class:`DisjointnessError`.
    """
    catalog = list(catalog) if catalog is not None else build_catalog()
    if rq2_tasks is None:
        rq2_tasks = sorted({r.task_id for r in records if r.split == "test_rq2"})
    rq2_tasks = list(rq2_tasks)
    overlap = audit_rq2(records, rq2_tasks)
    bad = {t: n for t, n in overlap.items() if n}
    if bad:
        raise DisjointnessError(f"unseen labels also present in training splits: {bad}")
    wanted = set(rq2_tasks)
    seen = [r for r in records if r.task_id in wanted and r.split == "test_rq1"]
    unseen = [r for r in records if r.task_id in wanted and r.split == "test_rq2"]
    s_seen = score_records(model, seen)
    s_unseen = score_records(model, unseen)
    names = _names(catalog)
    key = f"top{k}"
    rep = Report(f"Top-{k} accuracy on seen vs unseen arguments", ["n_seen", "seen", "n_unseen", "unseen"])
    for t in rq2_tasks:
        if t not in s_seen and t not in s_unseen:
            continue
        a = s_seen.get(t, {"n": 0, key: float("nan")})
        b = s_unseen.get(t, {"n": 0, key: float("nan")})
        rep.rows.append({
            "task_id": t, "name": names.get(t, f"task {t}"),
            "n_seen": a["n"], "seen": a[key], "n_unseen": b["n"], "unseen": b[key],
        })
    if rep.rows:
        rep.rows.append({
            "task_id": None,
            "name": f"Average over {len(rep.rows)} Tasks",
            "n_seen": sum(r["n_seen"] for r in rep.rows),
            "seen": float(np.nanmean([r["seen"] for r in rep.rows])),
            "n_unseen": sum(r["n_unseen"] for r in rep.rows),
            "unseen": float(np.nanmean([r["unseen"] for r in rep.rows])),
        })
    return rep
