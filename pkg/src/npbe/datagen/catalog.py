"""The 45 task templates.

A task fixes the sequence of functions and the data flow between steps; the
delimiter and index arguments are left open and sampled per program.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from itertools import product
from typing import Iterator

import numpy as np

from ..dsl.program import Program, Step, type_check
from ..dsl.symbols import DELIMITERS, INTEGERS, Arg, Func

CASE = (Func.ToLower, Func.ToUpper)
D = DELIMITERS
I = INTEGERS
X, O1, O2, O3, O4 = Arg.X, Arg.O1, Arg.O2, Arg.O3, Arg.O4

# Phrases bound to GetConstString steps.  None is a lone delimiter character,
# so a constant can never be confused with a delimiter argument.
CONST_POOL: tuple[str, ...] = (
    "Hello ", ", have fun!", "Dear ", "Hi ", "Mr. ", "Ms. ", "Dr. ", " Jr.", " Sr.",
    "Thanks!", "Welcome ", " rocks", "Re: ", "Fwd: ", "ID-", "No.", "#", "!", "?",
    "...", " & co", " Ltd.", " Inc.", "user_", "@home", ".txt", ".csv", ".cpp", ".py",
    "http://", "www.", ".com", "tel:", "+86 ", "(", ")", "[", "]", "<b>", "</b>",
    " OK", " done", "todo: ", "v2", "2016", "Q1 ", " +1", "~/", "$", " USD",
)


@dataclass(frozen=True)
class TemplateStep:
    funcs: tuple[Func, ...]
    slots: tuple[tuple[Arg, ...], ...] = ()

    def choices(self) -> Iterator[Step]:
        for f in self.funcs:
            for args in product(*self.slots):
                yield Step.make(f, *args)

    @property
    def size(self) -> int:
        n = len(self.funcs)
        for s in self.slots:
            n *= len(s)
        return n


@dataclass(frozen=True)
class TaskTemplate:
    id: int
    name: str
    steps: tuple[TemplateStep, ...]
    rq2: bool = False

    def __len__(self):
        return len(self.steps)

    @property
    def n_consts(self) -> int:
        return sum(1 for s in self.steps if s.funcs == (Func.GetConstString,))

    @property
    def domain_size(self) -> int:
        n = 1
        for s in self.steps:
            n *= s.size
        return n

    @property
    def open_slots(self) -> int:
        return sum(1 for s in self.steps for d in s.slots if len(d) > 1) + sum(
            1 for s in self.steps if len(s.funcs) > 1
        )

    def contains(self, program: Program) -> bool:
        if len(program) != len(self.steps):
            return False
        for ts, st in zip(self.steps, program.active):
            if st.func not in ts.funcs or len(st.used_args) != len(ts.slots):
                return False
            if any(a not in dom for a, dom in zip(st.used_args, ts.slots)):
                return False
        return True

    def programs(self) -> Iterator[Program]:
        """Every program in the template's domain (can be large)."""
        for steps in product(*(list(s.choices()) for s in self.steps)):
            yield Program.of(steps)


def _s(funcs, *slots) -> TemplateStep:
    if isinstance(funcs, Func):
        funcs = (funcs,)
    return TemplateStep(tuple(funcs), tuple(tuple(a) if isinstance(a, tuple) else (a,) for a in slots))


GCS = _s(Func.GetConstString)

# (name, steps, rq2)
_SPECS: list[tuple[str, tuple[TemplateStep, ...], bool]] = [
    # one step
    ("Case Change", (_s(CASE, X),), False),
    ("Duplicate Input String", (_s(Func.Concatenate, X, X),), False),
    ("Append Delimiter", (_s(Func.Concatenate, X, D),), False),
    ("Wrap with Delimiters", (_s(Func.Concatenate, D, X, D),), False),
    # two steps
    ("Case Change and Concatenate with Input String", (_s(CASE, X), _s(Func.Concatenate, X, O1)), False),
    ("Concatenate with Constant", (GCS, _s(Func.Concatenate, X, O1)), False),
    ("Prepend Constant", (GCS, _s(Func.Concatenate, O1, X)), False),
    ("Split, Join", (_s(Func.Split, X, D), _s(Func.Join, O1, D)), True),
    ("Split, Select", (_s(Func.Split, X, D), _s(Func.Select, O1, I)), False),
    ("Case Change and Duplicate", (_s(CASE, X), _s(Func.Concatenate, O1, O1)), False),
    ("Case Change and Append Delimiter", (_s(CASE, X), _s(Func.Concatenate, O1, D)), False),
    # three steps
    ("Split, Select, Case Change", (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(CASE, O2)), False),
    ("Split, Join, Concatenate", (_s(Func.Split, X, D), _s(Func.Join, O1, D), _s(Func.Concatenate, X, D, O2)), True),
    ("Split, Join, Case Change", (_s(Func.Split, X, D), _s(Func.Join, O1, D), _s(CASE, O2)), False),
    ("Split, Select, Concatenate", (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Concatenate, X, D, O2)), True),
    ("Split, Select, Wrap with Delimiters",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Concatenate, D, O2, D)), False),
    ("GetConstString, Case Change, Concatenate", (GCS, _s(CASE, X), _s(Func.Concatenate, O2, O1)), False),
    ("Split, Join, Append Delimiter", (_s(Func.Split, X, D), _s(Func.Join, O1, D), _s(Func.Concatenate, O2, D)), False),
    ("GetConstString×2, Concatenate", (GCS, GCS, _s(Func.Concatenate, O1, X, O2)), False),
    ("Duplicate Field", (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Concatenate, O2, D, O2)), False),
    # four steps
    ("Split, Select, Split, Select",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Split, O2, D), _s(Func.Select, O3, I)), True),
    ("Split, Select, Select, Concatenate",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Select, O1, I), _s(Func.Concatenate, O2, D, O3)), True),
    ("Split, Join, Select, Concatenate",
     (_s(Func.Split, X, D), _s(Func.Join, O1, D), _s(Func.Select, O1, I), _s(Func.Concatenate, O3, D, O2)), True),
    ("GetConstString, Split, Join, Concatenate",
     (GCS, _s(Func.Split, X, D), _s(Func.Join, O2, D), _s(Func.Concatenate, O1, O3)), True),
    ("GetConstString, Split, Select, Concatenate",
     (GCS, _s(Func.Split, X, D), _s(Func.Select, O2, I), _s(Func.Concatenate, O1, O3)), False),
    ("Split, Select, Case Change, Concatenate",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(CASE, O2), _s(Func.Concatenate, X, D, O3)), True),
    ("Split, Join, Case Change, Concatenate",
     (_s(Func.Split, X, D), _s(Func.Join, O1, D), _s(CASE, O2), _s(Func.Concatenate, O3, D, X)), True),
    ("Split, Select, Split, Join",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Split, O2, D), _s(Func.Join, O3, D)), True),
    ("Case Change, Split, Select, Concatenate",
     (_s(CASE, X), _s(Func.Split, O1, D), _s(Func.Select, O2, I), _s(Func.Concatenate, O3, D, X)), False),
    ("Swap Fields",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Select, O1, I), _s(Func.Concatenate, O3, O2)), False),
    ("GetConstString, Split, Select, Append Constant",
     (GCS, _s(Func.Split, X, D), _s(Func.Select, O2, I), _s(Func.Concatenate, O3, O1)), False),
    # five steps
    ("Split, Join, Select, Case Change, Concatenate",
     (_s(Func.Split, X, D), _s(Func.Join, O1, D), _s(Func.Select, O1, I), _s(CASE, O3),
      _s(Func.Concatenate, O2, D, O4)), True),
    ("GetConstString, Split, Select, Case Change, Concatenate",
     (GCS, _s(Func.Split, X, D), _s(Func.Select, O2, I), _s(CASE, O3), _s(Func.Concatenate, O1, O4)), False),
    ("GetConstString×2, Split, Select, Concatenate",
     (GCS, GCS, _s(Func.Split, X, D), _s(Func.Select, O3, I), _s(Func.Concatenate, O1, O4, O2)), False),
    ("Split, Select, Select, Case Change, Concatenate",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Select, O1, I), _s(CASE, O3),
      _s(Func.Concatenate, O4, D, O2)), True),
    ("Split, Select, Split, Select, Case Change",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Split, O2, D), _s(Func.Select, O3, I),
      _s(CASE, O4)), False),
    ("Split, Select, Split, Select, Concatenate",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Split, O2, D), _s(Func.Select, O3, I),
      _s(Func.Concatenate, O4, D, O2)), True),
    ("Split, Select, Select, Select, Concatenate",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Select, O1, I), _s(Func.Select, O1, I),
      _s(Func.Concatenate, O2, O3, O4)), True),
    ("GetConstString, Split, Select, Select, Concatenate",
     (GCS, _s(Func.Split, X, D), _s(Func.Select, O2, I), _s(Func.Select, O2, I),
      _s(Func.Concatenate, O3, O1, O4)), True),
    ("Split, Select, Case Change, Select, Concatenate",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(CASE, O2), _s(Func.Select, O1, I),
      _s(Func.Concatenate, O3, D, O4)), True),
    ("GetConstString, Split, Join, Case Change, Concatenate",
     (GCS, _s(Func.Split, X, D), _s(Func.Join, O2, D), _s(CASE, O3), _s(Func.Concatenate, O4, O1)), True),
    ("Split, Select, Split, Join, Concatenate",
     (_s(Func.Split, X, D), _s(Func.Select, O1, I), _s(Func.Split, O2, D), _s(Func.Join, O3, D),
      _s(Func.Concatenate, X, D, O4)), True),
    ("Case Change, Split, Select, Select, Concatenate",
     (_s(CASE, X), _s(Func.Split, O1, D), _s(Func.Select, O2, I), _s(Func.Select, O2, I),
      _s(Func.Concatenate, O3, D, O4)), True),
    ("GetConstString×2, Split, Join, Concatenate",
     (GCS, GCS, _s(Func.Split, X, D), _s(Func.Join, O3, D), _s(Func.Concatenate, O1, O4, O2)), False),
    ("Case Change, Split, Join, Select, Concatenate",
     (_s(CASE, X), _s(Func.Split, O1, D), _s(Func.Join, O2, D), _s(Func.Select, O2, I),
      _s(Func.Concatenate, O3, D, O4)), False),
]


def build_catalog() -> list[TaskTemplate]:
    """Return the 45 task templates in a fixed order; ids are list positions."""
    catalog = [TaskTemplate(i, name, steps, rq2) for i, (name, steps, rq2) in enumerate(_SPECS)]
    for t in catalog:
        first = Program.of(next(s.choices()) for s in t.steps)
        problems = type_check(first)
        if problems:
            raise AssertionError(f"template {t.name!r} does not type-check: {problems[0]}")
    return catalog


def catalog_by_name(catalog: list[TaskTemplate] | None = None) -> dict[str, TaskTemplate]:
    return {t.name: t for t in (catalog or build_catalog())}


def subcatalog(names: list[str]) -> list[TaskTemplate]:
    """Templates with the given names, keeping their global ids."""
    by_name = catalog_by_name()
    missing = [n for n in names if n not in by_name]
    if missing:
        raise KeyError(f"unknown task(s): {', '.join(missing)}")
    return [by_name[n] for n in names]


def catalog_hash(catalog: list[TaskTemplate]) -> str:
    h = hashlib.sha256()
    for t in catalog:
        h.update(repr((t.id, t.name, t.steps, t.rq2)).encode())
    return h.hexdigest()


def instantiate(template: TaskTemplate, rng: np.random.Generator | int) -> tuple[Program, tuple[str, ...]]:
    """Sample each open function/argument slot uniformly; bind constants from the pool."""
    rng = np.random.default_rng(rng)
    steps = []
    consts = []
    for ts in template.steps:
        func = ts.funcs[int(rng.integers(len(ts.funcs)))] if len(ts.funcs) > 1 else ts.funcs[0]
        args = [dom[int(rng.integers(len(dom)))] if len(dom) > 1 else dom[0] for dom in ts.slots]
        if func is Func.GetConstString:
            consts.append(CONST_POOL[int(rng.integers(len(CONST_POOL)))])
        steps.append(Step.make(func, *args))
    return Program.of(steps), tuple(consts)
