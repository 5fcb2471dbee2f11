"""Canonical labels for input/output pairs.

Several programs can map the same input to the same output.  The label of a
pair is the canonical program among every catalog program that explains it:
fewest steps first, then lowest 30-id encoding.  Competitors are all
constant-free templates no longer than the record's program, plus the
record's own template with its constants held fixed (constants are free
values, so a constant-bearing template could explain almost any pair).

The search per template is a dynamic program over steps: argument choices
that yield the same intermediate values are merged, keeping only the
lexicographically smallest prefix, which is exact because later steps depend
on the prefix only through those values.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from ..dsl.interpreter import try_execute
from ..dsl.program import Program, Step
from ..dsl.symbols import DELIM_CHAR, INT_VALUE, Arg, Func, ref_index
from .catalog import TaskTemplate
from .records import ExampleRecord
from .sampling import GenerationExhausted, sample_input

PROBES = 16
_DELIMS = frozenset(DELIM_CHAR.values())

_SPLIT, _JOIN, _SELECT, _LOWER, _UPPER, _CONCAT, _CONST = (
    Func.Split, Func.Join, Func.Select, Func.ToLower, Func.ToUpper, Func.Concatenate, Func.GetConstString,
)


def _compile_step(step: Step):
    getters = []
    for a in step.used_args:
        if a in DELIM_CHAR:
            getters.append((False, DELIM_CHAR[a]))
        elif a in INT_VALUE:
            getters.append((False, INT_VALUE[a]))
        elif a is Arg.X:
            getters.append((True, 0))
        else:
            getters.append((True, ref_index(a)))
    ids = (int(step.func),) + tuple(int(a) for a in step.args)
    return step.func, tuple(getters), ids


_compiled_cache: dict[TaskTemplate, list] = {}


def _compiled(template: TaskTemplate):
    got = _compiled_cache.get(template)
    if got is None:
        got = [[_compile_step(s) for s in ts.choices()] for ts in template.steps]
        _compiled_cache[template] = got
    return got


def best_in_template(
    template: TaskTemplate, x: str, y: str, consts: Sequence[str] = ()
) -> Program | None:
    """Lowest-encoding program of ``template`` mapping ``x`` to ``y``, if any."""
    steps = _compiled(template)
    n = len(steps)
    # values tuple (x, o1, ..) -> smallest id prefix reaching it
    states: dict[tuple, tuple] = {(x,): ()}
    ci = 0
    for k, choices in enumerate(steps):
        last = k == n - 1
        new: dict[tuple, tuple] = {}
        const = None
        if choices[0][0] is _CONST:
            if ci >= len(consts):
                return None
            const = consts[ci]
            ci += 1
        for vals, prefix in states.items():
            for func, getters, ids in choices:
                args = [vals[g] if is_ref else g for is_ref, g in getters]
                if func is _SPLIT:
                    v = tuple(args[0].split(args[1]))
                elif func is _SELECT:
                    lst, i = args
                    if not -len(lst) <= i < len(lst):
                        continue
                    v = lst[i]
                elif func is _JOIN:
                    v = args[1].join(args[0])
                elif func is _LOWER:
                    v = args[0].lower()
                elif func is _UPPER:
                    v = args[0].upper()
                elif func is _CONCAT:
                    v = "".join(args)
                else:
                    v = const
                if last and v != y:
                    continue
                key = vals + (v,)
                cand = prefix + ids
                old = new.get(key)
                if old is None or cand < old:
                    new[key] = cand
        if not new:
            return None
        states = new
    best = min(states.values())
    return Program.decode(best + _pad(n))


def _pad(n_steps: int) -> tuple:
    return ((int(Func.NoFunc),) + (int(Arg.NoArg),) * 5) * (5 - n_steps)


def _plausible(template: TaskTemplate, x: str, y: str) -> bool:
    funcs = {f for ts in template.steps for f in ts.funcs}
    if _CONCAT not in funcs and len(y) > len(x):
        return False
    if _LOWER in funcs or _UPPER in funcs:
        if not set(y.lower()) <= set(x.lower()) | _DELIMS:
            return False
    elif not set(y) <= set(x) | _DELIMS:
        return False
    last = template.steps[-1].funcs
    if set(last) <= {_LOWER, _UPPER}:
        ok = (_LOWER in last and y == y.lower()) or (_UPPER in last and y == y.upper())
        if not ok:
            return False
    return True


def canonical_label(
    x: str,
    y: str,
    program: Program,
    consts: Sequence[str],
    task: TaskTemplate | None,
    catalog: Iterable[TaskTemplate],
) -> tuple[Program, tuple[str, ...]]:
    """Canonical (program, constants) among the catalog programs explaining ``x -> y``."""
    best: tuple[Program, tuple[str, ...]] = (program, tuple(consts))
    best_key = program.sort_key()
    n = len(program)
    for t in catalog:
        if len(t) > n or t.n_consts or not _plausible(t, x, y):
            continue
        p = best_in_template(t, x, y)
        if p is not None and p.sort_key() < best_key:
            best, best_key = (p, ()), p.sort_key()
    if task is not None and task.n_consts:
        p = best_in_template(task, x, y, consts)
        if p is not None and p.sort_key() < best_key:
            best, best_key = (p, tuple(consts)), p.sort_key()
    return best


def smaller_explanation(
    x: str,
    y: str,
    program: Program,
    consts: Sequence[str],
    task: TaskTemplate | None,
    catalog: Sequence[TaskTemplate],
) -> tuple[Program, tuple[str, ...]] | None:
    """Some catalog program that explains ``x -> y`` and sorts before ``program``, if any.

    Cheaper than :func:`canonical_label` when only canonicality matters:
    returns at the first hit, trying shorter templates first.
    """
    key = program.sort_key()
    n = len(program)
    order = sorted((t for t in catalog if len(t) <= n and not t.n_consts), key=len)
    if task is not None and task.n_consts:
        order.append(task)
    for t in order:
        if t.n_consts:
            p = best_in_template(t, x, y, consts)
        elif _plausible(t, x, y):
            p = best_in_template(t, x, y)
        else:
            continue
        if p is not None and p.sort_key() < key:
            return p, (tuple(consts) if t.n_consts else ())
    return None


def equivalent_on_probes(
    program: Program,
    consts: Sequence[str],
    other: Program,
    other_consts: Sequence[str],
    rng: np.random.Generator,
    n: int = PROBES,
) -> bool:
    """True when ``other`` agrees with ``program`` on ``n`` inputs sampled for ``program``."""
    for _ in range(n):
        try:
            probe = sample_input(program, rng, consts)
        except GenerationExhausted:
            return False
        a = try_execute(program, probe, consts)
        b = try_execute(other, probe, other_consts)
        if a != b:
            return False
    return True


def disambiguate(
    records: Sequence[ExampleRecord],
    catalog: Sequence[TaskTemplate] | None = None,
) -> list[ExampleRecord]:
    """Give every (input, output) pair a single canonical label.

    With a catalog, each record is first relabeled to its canonical catalog
    program.  Then records sharing a pair anywhere in the collection are
    unified to the smallest of their labels.
    """
    by_id = {t.id: t for t in catalog} if catalog is not None else {}
    out = []
    for r in records:
        if catalog is not None:
            p, c = canonical_label(r.input, r.output, r.program, r.consts, by_id.get(r.task_id), catalog)
            r = r.relabel(p, c)
        out.append(r)
    best: dict[tuple[str, str], tuple] = {}
    for r in out:
        key = (r.input, r.output)
        cand = (r.program.sort_key(), r.consts, r.program)
        if key not in best or cand[:2] < best[key][:2]:
            best[key] = cand
    return [r.relabel(best[(r.input, r.output)][2], best[(r.input, r.output)][1]) for r in out]
