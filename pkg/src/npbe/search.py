"""Enumerative synthesis over the same DSL.

Programs are enumerated by increasing step count.  All steps but the last are
enumerated over every type-correct choice (Split, Join, Select, ToLower,
ToUpper on the values computed so far); the last step is solved against the
output directly:

* ToLower/ToUpper/Select/Join by trying each applicable source;
* Concatenate by splitting the output into pieces that are available values,
  single delimiter characters, or constant strings.  A constant is a maximal
  stretch of output that no value covers; each becomes a GetConstString step
  placed at the front of the program, in order of appearance.

Concatenate appears only as the last step, and needs at least one piece that
is a computed value, so constant-only programs are never proposed.  Programs
whose non-final steps are not all used by the result are dropped.  Search is
iterative deepening on step count; results are ranked by step count, then
30-id encoding.  Completeness is guaranteed for constant-free programs of up
to three steps within the default budget.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .dsl.interpreter import apply, resolve_arg, try_execute
from .dsl.program import Program, Step, type_check
from .dsl.symbols import (
    CHAR_DELIM,
    DELIM_CHAR,
    DELIMITERS,
    INT_VALUE,
    INTEGERS,
    MAX_ARGS,
    MAX_STEPS,
    Arg,
    Func,
    ref_arg,
    ref_index,
)

_CASE = {Func.ToLower: str.lower, Func.ToUpper: str.upper}


@dataclass(frozen=True)
class SearchBudget:
    max_steps: int = 3
    max_candidates: int = 200_000
    timeout: float = 30.0
    allow_consts: bool = True

    def __post_init__(self):
        if not 1 <= self.max_steps <= MAX_STEPS:
            raise ValueError(f"max_steps must be in 1..{MAX_STEPS}")
        if self.max_candidates <= 0 or self.timeout <= 0:
            raise ValueError("budget limits must be positive")


@dataclass
class SearchResult:
    programs: list = field(default_factory=list)  # (Program, consts) in rank order
    exhausted: bool = False
    candidates: int = 0

    def __iter__(self):
        return iter(self.programs)

    def __len__(self):
        return len(self.programs)

    @property
    def best(self):
        return self.programs[0] if self.programs else None


class _Budget:
    def __init__(self, budget: SearchBudget):
        self.budget = budget
        self.deadline = time.monotonic() + budget.timeout
        self.count = 0
        self.emitted = 0
        self.hit = False

    def tick(self) -> bool:
        self.count += 1
        if self.count > self.budget.max_candidates or (self.count % 256 == 0 and time.monotonic() > self.deadline):
            self.hit = True
        return not self.hit

    def late(self) -> bool:
        self.emitted += 1
        if self.emitted % 256 == 0 and time.monotonic() > self.deadline:
            self.hit = True
        return self.hit


def _src_arg(j: int) -> Arg:
    return Arg.X if j == 0 else ref_arg(j)


def _nonfinal_choices(values: list):
    """Type-correct non-final steps over ``values`` (index 0 is x)."""
    for j, v in enumerate(values):
        a = _src_arg(j)
        if isinstance(v, str):
            for d in DELIMITERS:
                yield Step.make(Func.Split, a, d)
            yield Step.make(Func.ToLower, a)
            yield Step.make(Func.ToUpper, a)
        elif isinstance(v, tuple):
            for d in DELIMITERS:
                yield Step.make(Func.Join, a, d)
            for i in INTEGERS:
                if -len(v) <= INT_VALUE[i] < len(v):
                    yield Step.make(Func.Select, a, i)


def _apply(step: Step, values: list):
    args = [resolve_arg(a, values[0], values[1:], 0) for a in step.used_args]
    return apply(step.func, args)


def _final_simple(values: list, y: str):
    for j, v in enumerate(values):
        a = _src_arg(j)
        if isinstance(v, str):
            for f, fn in _CASE.items():
                if fn(v) == y:
                    yield Step.make(f, a)
        elif isinstance(v, tuple):
            for d in DELIMITERS:
                if DELIM_CHAR[d].join(v) == y:
                    yield Step.make(Func.Join, a, d)
            for i in INTEGERS:
                k = INT_VALUE[i]
                if -len(v) <= k < len(v) and v[k] == y:
                    yield Step.make(Func.Select, a, i)


def _concat_splits(values: list, y: str, allow_consts: bool):
    """Every way to write ``y`` as <= 5 pieces; pieces are ('v', j), ('d', arg) or ('c', text)."""
    strs = [(j, v) for j, v in enumerate(values) if isinstance(v, str) and v]
    starts = set()
    for _, v in strs:
        p = y.find(v)
        while p != -1:
            starts.add(p)
            p = y.find(v, p + 1)
    out = []

    def rec(pos: int, parts: list, prev_const: bool):
        if pos == len(y):
            if parts and any(k == "v" for k, _ in parts):
                out.append(tuple(parts))
            return
        if len(parts) == MAX_ARGS:
            return
        for j, v in strs:
            if y.startswith(v, pos):
                rec(pos + len(v), parts + [("v", j)], False)
        ch = y[pos]
        if ch in CHAR_DELIM:
            rec(pos + 1, parts + [("d", CHAR_DELIM[ch])], False)
        if allow_consts and not prev_const:
            end = min([s for s in starts if s > pos], default=len(y))
            text = y[pos:end]
            if text and text not in CHAR_DELIM:
                rec(end, parts + [("c", text)], True)

    rec(0, [], False)
    return out


def _used_all(steps: list[Step]) -> bool:
    """True when every step before the last is reachable from the last one."""
    n = len(steps)
    live = {n}
    for t in range(n, 0, -1):
        if t in live:
            for a in steps[t - 1].used_args:
                j = ref_index(a)
                if j is not None:
                    live.add(j)
    return len(live) == n


def _shift(step: Step, k: int) -> Step:
    if k == 0:
        return step
    args = tuple(ref_arg(ref_index(a) + k) if ref_index(a) is not None else a for a in step.args)
    return Step(step.func, args)


def _assemble(nonfinal: list[Step], parts, n_budget: int):
    """Program with constants hoisted to the front, or None if over budget."""
    consts = [text for kind, text in parts if kind == "c"]
    m = len(consts)
    if m + len(nonfinal) + 1 > n_budget:
        return None
    steps = [Step.make(Func.GetConstString) for _ in range(m)]
    steps += [_shift(s, m) for s in nonfinal]
    args = []
    ci = 0
    for kind, val in parts:
        if kind == "v":
            if val + m > 4:
                return None
            args.append(Arg.X if val == 0 else ref_arg(val + m))
        elif kind == "d":
            args.append(val)
        else:
            ci += 1
            args.append(ref_arg(ci))
    if any(a is Arg.NoArg for a in args):
        return None
    steps.append(Step.make(Func.Concatenate, *args))
    return steps, tuple(consts)


def enumerate_programs(x: str, y: str, budget: SearchBudget | None = None) -> SearchResult:
    """All programs of at most ``budget.max_steps`` steps mapping ``x`` to ``y``, ranked."""
    budget = budget or SearchBudget()
    b = _Budget(budget)
    found: dict[tuple, tuple[Program, tuple[str, ...]]] = {}

    def emit(steps: list[Step], consts: tuple[str, ...], size: int):
        if len(steps) != size or b.late() or not _used_all(steps):
            return
        program = Program.of(steps)
        if type_check(program):
            return
        if try_execute(program, x, consts) != y:
            return
        found.setdefault((program.sort_key(), consts), (program, consts))

    def dfs(steps: list[Step], values: list, size: int):
        if not b.tick():
            return
        if len(steps) == size - 1:
            for st in _final_simple(values, y):
                emit(steps + [st], (), size)
        for parts in _concat_splits(values, y, budget.allow_consts):
            got = _assemble(steps, parts, size)
            if got is not None:
                emit(*got, size)
        if len(steps) >= size - 1 or len(values) > 4 or b.hit:
            return
        for st in _nonfinal_choices(values):
            dfs(steps + [st], values + [_apply(st, values)], size)
            if b.hit:
                return

    # iterative deepening: every shorter program is found before a longer one is tried
    for size in range(1, budget.max_steps + 1):
        dfs([], [x], size)
        if b.hit:
            break
    ranked = [found[k] for k in sorted(found)]
    return SearchResult(ranked, b.hit, b.count)


def synthesize(x: str, y: str, budget: SearchBudget | None = None):
    """Best program for the pair, or None."""
    return enumerate_programs(x, y, budget).best
