"""Corpus generation, hold-out partition, loading and audits.

Every record's label is canonical by construction: a drawn program is kept
only when no smaller catalog program explains the drawn pair.  When a smaller
program agrees on the probe set too, the drawn program is redundant and a new
program is drawn; when the agreement is a coincidence of the input, a new
input is drawn for the same program.

RQ2 tasks split their label space by a keyed hash of the label's ids, so the
held-out labels of ``test_rq2`` never occur in ``train`` or ``test_rq1``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..dsl.interpreter import execute, try_execute
from ..dsl.symbols import MAX_STRING_LEN, in_charset
from .catalog import TaskTemplate, build_catalog, catalog_hash, instantiate
from .disambiguate import disambiguate, equivalent_on_probes, smaller_explanation
from .records import SPLITS, ExampleRecord
from .sampling import GenerationExhausted, SamplerStats, sample_input

log = logging.getLogger(__name__)

SPLIT_CODES = {"train": 0, "test_rq1": 1, "test_rq2": 2}
HOLDOUT_FRACTION = 0.2
RQ1_PER_TASK = 1000
RQ2_PER_TASK = 200
MAX_PROGRAM_DRAWS = 500
INPUT_REDRAWS = 8
MANIFEST = "manifest.json"


def label_partition(seed: int, task_id: int, ids: Sequence[int], holdout: float = HOLDOUT_FRACTION) -> str:
    """'unseen' for the held-out fraction of a task's labels, else 'seen'."""
    key = json.dumps([int(seed), int(task_id), [int(i) for i in ids]]).encode()
    h = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")
    return "unseen" if h / 2.0**64 < holdout else "seen"


def split_rng(seed: int, task_id: int, split: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(task_id), SPLIT_CODES[split]])


def generate_record(
    task: TaskTemplate,
    catalog: Sequence[TaskTemplate],
    rng: np.random.Generator,
    split: str = "train",
    partition: str | None = None,
    seed: int = 0,
    holdout: float = HOLDOUT_FRACTION,
    stats: SamplerStats | None = None,
) -> ExampleRecord:
    """One record of ``task`` whose program is the canonical label of its pair.

    ``partition`` restricts labels to the 'seen' or 'unseen' hash partition.
    """
    for _ in range(MAX_PROGRAM_DRAWS):
        program, consts = instantiate(task, rng)
        if partition is not None and label_partition(seed, task.id, program.encode(), holdout) != partition:
            continue
        for _ in range(INPUT_REDRAWS):
            try:
                x = sample_input(program, rng, consts, stats=stats)
            except GenerationExhausted:
                break
            y = execute(program, x, consts, check=False)
            other = smaller_explanation(x, y, program, consts, task, catalog)
            if other is None:
                return ExampleRecord(x, y, program, consts, task.id, split)
            if equivalent_on_probes(program, consts, other[0], other[1], rng):
                break
    raise GenerationExhausted(f"task {task.id} ({task.name}): no canonical record after {MAX_PROGRAM_DRAWS} programs")


@dataclass
class TaskCounts:
    train: int
    test_rq1: int = RQ1_PER_TASK
    test_rq2: int = RQ2_PER_TASK

    def get(self, split: str) -> int:
        return getattr(self, split)


@dataclass
class TaskResult:
    task_id: int
    records: list = field(default_factory=list)
    stats: SamplerStats = field(default_factory=SamplerStats)


def generate_task(
    task: TaskTemplate,
    counts: TaskCounts,
    seed: int,
    catalog: Sequence[TaskTemplate] | None = None,
    holdout: float = HOLDOUT_FRACTION,
) -> TaskResult:
    """All records of one task.  Depends only on (task, counts, seed, catalog)."""
    catalog = build_catalog() if catalog is None else catalog
    out = TaskResult(task.id)
    for split in SPLITS:
        n = counts.get(split)
        if split == "test_rq2" and not task.rq2:
            continue
        partition = None
        if task.rq2:
            partition = "unseen" if split == "test_rq2" else "seen"
        rng = split_rng(seed, task.id, split)
        for _ in range(n):
            out.records.append(
                generate_record(task, catalog, rng, split, partition, seed, holdout, out.stats)
            )
    return out


def _generate_task_args(args):
    return generate_task(*args)


def per_task_train_counts(n_total: int, n_tasks: int) -> list[int]:
    base, extra = divmod(n_total, n_tasks)
    return [base + (1 if i < extra else 0) for i in range(n_tasks)]


def task_file(task_id: int) -> str:
    return f"task_{task_id:02d}.jsonl"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_atomic(path: Path, text: str):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def generate_corpus(
    tasks: Sequence[TaskTemplate],
    n_total: int,
    seed: int,
    out_dir: str | Path,
    rq1_per_task: int = RQ1_PER_TASK,
    rq2_per_task: int = RQ2_PER_TASK,
    holdout: float = HOLDOUT_FRACTION,
    workers: int = 1,
    catalog: Sequence[TaskTemplate] | None = None,
) -> dict:
    """Generate and write the corpus for ``tasks``; returns the manifest.

    ``n_total`` training records are spread evenly over the tasks.  Labels
    are canonical with respect to ``catalog`` (the full catalog by default),
    so a task's labels do not depend on which other tasks are generated.
    """
    catalog = list(build_catalog() if catalog is None else catalog)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train = per_task_train_counts(n_total, len(tasks))
    jobs = [
        (t, TaskCounts(n, rq1_per_task, rq2_per_task), seed, catalog, holdout)
        for t, n in zip(tasks, train)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_generate_task_args, jobs))
    else:
        results = []
        for job in jobs:
            results.append(generate_task(*job))
            log.info("task %d: %d records", job[0].id, len(results[-1].records))

    records = [r for res in results for r in res.records]
    # per-record labels are already canonical; this unifies pairs shared across tasks
    records = disambiguate(records)
    by_task: dict[int, list[ExampleRecord]] = defaultdict(list)
    for r in records:
        by_task[r.task_id].append(r)

    files = {}
    counts = {}
    attempts = rejections = 0
    for res in results:
        name = task_file(res.task_id)
        recs = by_task[res.task_id]
        _write_atomic(out_dir / name, "".join(r.to_json() + "\n" for r in recs))
        files[name] = _sha256(out_dir / name)
        counts[str(res.task_id)] = {s: sum(r.split == s for r in recs) for s in SPLITS}
        attempts += res.stats.attempts
        rejections += res.stats.rejections
    manifest = {
        "format": 1,
        "seed": int(seed),
        "catalog_hash": catalog_hash(catalog),
        "tasks": [t.id for t in tasks],
        "rq2_tasks": [t.id for t in tasks if t.rq2],
        "n_total": int(n_total),
        "holdout_fraction": holdout,
        "counts": counts,
        "sampler": {"attempts": attempts, "rejections": rejections},
        "files": files,
    }
    _write_atomic(out_dir / MANIFEST, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def manifest_hash(out_dir: str | Path) -> str:
    return _sha256(Path(out_dir) / MANIFEST)


class CorpusError(ValueError):
    pass


def load_corpus(
    path: str | Path,
    splits: Iterable[str] | None = None,
    tasks: Iterable[int] | None = None,
    verify: bool = True,
) -> list[ExampleRecord]:
    """Read records from a corpus directory (or a single .jsonl file)."""
    path = Path(path)
    wanted_splits = set(splits) if splits is not None else None
    wanted_tasks = set(tasks) if tasks is not None else None
    if not path.exists():
        raise CorpusError(f"{path}: no such corpus")
    if path.is_dir():
        mpath = path / MANIFEST
        if not mpath.exists():
            raise CorpusError(f"{path}: no {MANIFEST}")
        manifest = json.loads(mpath.read_text())
        files = []
        for name, digest in sorted(manifest["files"].items()):
            f = path / name
            if not f.exists():
                raise CorpusError(f"{f}: listed in manifest but missing")
            if verify and _sha256(f) != digest:
                raise CorpusError(f"{f}: checksum mismatch")
            files.append(f)
    else:
        files = [path]
    out = []
    for f in files:
        with open(f, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    r = ExampleRecord.from_json(line)
                except (ValueError, KeyError) as exc:
                    raise CorpusError(f"{f}:{lineno}: {exc}") from exc
                if wanted_splits is not None and r.split not in wanted_splits:
                    continue
                if wanted_tasks is not None and r.task_id not in wanted_tasks:
                    continue
                out.append(r)
    return out


@dataclass
class AuditReport:
    n_records: int = 0
    execution_mismatch: int = 0
    too_long: int = 0
    bad_charset: int = 0
    ambiguous_pairs: int = 0
    rq2_overlap: int = 0
    per_task: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not (
            self.execution_mismatch or self.too_long or self.bad_charset or self.ambiguous_pairs or self.rq2_overlap
        )


def audit_corpus(records: Sequence[ExampleRecord], rq2_tasks: Iterable[int] = ()) -> AuditReport:
    """Re-execute every record and check lengths, charset, label uniqueness and RQ2 disjointness."""
    rep = AuditReport(n_records=len(records))
    labels: dict[tuple[str, str], set] = defaultdict(set)
    seen: dict[int, set] = defaultdict(set)
    unseen: dict[int, set] = defaultdict(set)
    for r in records:
        if try_execute(r.program, r.input, r.consts) != r.output:
            rep.execution_mismatch += 1
        if len(r.input) > MAX_STRING_LEN or len(r.output) > MAX_STRING_LEN:
            rep.too_long += 1
        if not (in_charset(r.input) and in_charset(r.output)):
            rep.bad_charset += 1
        labels[(r.input, r.output)].add((r.program_ids, r.consts))
        (unseen if r.split == "test_rq2" else seen)[r.task_id].add(r.program_ids)
        rep.per_task.setdefault(r.task_id, {s: 0 for s in SPLITS})[r.split] += 1
    rep.ambiguous_pairs = sum(len(v) > 1 for v in labels.values())
    for t in rq2_tasks:
        rep.rq2_overlap += len(seen[t] & unseen[t])
    return rep
