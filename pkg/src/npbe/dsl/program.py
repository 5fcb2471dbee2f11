"""Fixed-shape programs, their 30-id encoding and the static type checker."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .symbols import (
    DELIM_CHAR,
    INT_VALUE,
    MAX_ARGS,
    MAX_STEPS,
    P,
    Q,
    SIGNATURES,
    Arg,
    Func,
    VType,
    arg_name,
    arity_range,
    ref_index,
    return_type,
)

ENCODING_LEN = MAX_STEPS * (1 + MAX_ARGS)


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class Step:
    func: Func
    args: tuple[Arg, ...] = (Arg.NoArg,) * MAX_ARGS

    def __post_init__(self):
        if len(self.args) != MAX_ARGS:
            raise ValueError(f"a step holds exactly {MAX_ARGS} argument slots, got {len(self.args)}")

    @classmethod
    def make(cls, func: Func, *args: Arg) -> "Step":
        if len(args) > MAX_ARGS:
            raise ValueError(f"too many arguments for {func.name}: {len(args)}")
        return cls(Func(func), tuple(Arg(a) for a in args) + (Arg.NoArg,) * (MAX_ARGS - len(args)))

    @property
    def used_args(self) -> tuple[Arg, ...]:
        """Arguments before the first NoArg."""
        out = []
        for a in self.args:
            if a is Arg.NoArg:
                break
            out.append(a)
        return tuple(out)

    def __str__(self):
        return f"{self.func.name}({', '.join(arg_name(a) for a in self.used_args)})"


NOFUNC_STEP = Step(Func.NoFunc)


@dataclass(frozen=True)
class Program:
    steps: tuple[Step, ...]

    def __post_init__(self):
        if len(self.steps) != MAX_STEPS:
            raise ValueError(f"a program holds exactly {MAX_STEPS} steps, got {len(self.steps)}")

    @classmethod
    def of(cls, steps: Iterable[Step]) -> "Program":
        steps = tuple(steps)
        if len(steps) > MAX_STEPS:
            raise ValueError(f"at most {MAX_STEPS} steps, got {len(steps)}")
        return cls(steps + (NOFUNC_STEP,) * (MAX_STEPS - len(steps)))

    @property
    def active(self) -> tuple[Step, ...]:
        out = []
        for s in self.steps:
            if s.func is Func.NoFunc:
                break
            out.append(s)
        return tuple(out)

    def __len__(self):
        return len(self.active)

    @property
    def functions(self) -> tuple[Func, ...]:
        return tuple(s.func for s in self.active)

    def n_consts(self) -> int:
        return sum(1 for s in self.active if s.func is Func.GetConstString)

    def encode(self) -> tuple[int, ...]:
        ids: list[int] = []
        for s in self.steps:
            ids.append(int(s.func))
            ids.extend(int(a) for a in s.args)
        return tuple(ids)

    @classmethod
    def decode(cls, ids: Sequence[int]) -> "Program":
        ids = [int(i) for i in ids]
        if len(ids) != ENCODING_LEN:
            raise DecodeError(f"expected {ENCODING_LEN} ids, got {len(ids)}")
        steps = []
        ended = False
        for t in range(MAX_STEPS):
            chunk = ids[t * (1 + MAX_ARGS):(t + 1) * (1 + MAX_ARGS)]
            if not 0 <= chunk[0] < P:
                raise DecodeError(f"function id {chunk[0]} out of range at step {t + 1}")
            for a in chunk[1:]:
                if not 0 <= a < Q:
                    raise DecodeError(f"argument id {a} out of range at step {t + 1}")
            func = Func(chunk[0])
            if ended and func is not Func.NoFunc:
                raise DecodeError(f"{func.name} at step {t + 1} follows NoFunc padding")
            ended = ended or func is Func.NoFunc
            steps.append(Step(func, tuple(Arg(a) for a in chunk[1:])))
        return cls(tuple(steps))

    def sort_key(self) -> tuple:
        """Canonical order: fewer steps first, then lexicographic encoding."""
        return (len(self), self.encode())

    def __str__(self):
        return "; ".join(str(s) for s in self.active) or "<empty>"


def as_program(steps: Iterable[tuple]) -> Program:
    """Build a program from ``(func, arg, ...)`` tuples."""
    return Program.of(Step.make(s[0], *s[1:]) for s in steps)


@dataclass(frozen=True)
class Violation:
    step: int  # 1-based
    slot: int | None  # 1-based argument slot, None for the function itself
    message: str

    def __str__(self):
        where = f"step {self.step}" if self.slot is None else f"step {self.step} slot {self.slot}"
        return f"{where}: {self.message}"


def arg_type(arg: Arg, step_types: Sequence[VType]) -> VType | None:
    """Static type of ``arg`` given return types of the preceding steps."""
    if arg in DELIM_CHAR:
        return VType.CH
    if arg in INT_VALUE:
        return VType.INT
    if arg is Arg.X:
        return VType.STR
    j = ref_index(arg)
    if j is not None and j <= len(step_types):
        return step_types[j - 1]
    return None


def type_check(program: Program) -> list[Violation]:
    """Return all arity, type, reference and padding violations (empty list means ok)."""
    problems: list[Violation] = []
    types: list[VType] = []
    ended = False
    for t, step in enumerate(program.steps, start=1):
        if step.func is Func.NoFunc:
            ended = True
        elif ended:
            problems.append(Violation(t, None, f"{step.func.name} after NoFunc padding"))
        lo, hi = arity_range(step.func)
        used = step.used_args
        n = len(used)
        for k in range(n, MAX_ARGS):
            if step.args[k] is not Arg.NoArg:
                problems.append(Violation(t, k + 1, "argument after NoArg padding"))
        if not lo <= n <= hi:
            problems.append(Violation(t, None, f"{step.func.name} takes {lo}..{hi} arguments, got {n}"))
        params = program_params(step.func, n)
        for k, a in enumerate(used):
            j = ref_index(a)
            if j is not None and j >= t:
                problems.append(Violation(t, k + 1, f"forward reference {arg_name(a)} at step {t}"))
                continue
            got = arg_type(a, types)
            if j is not None and got is VType.NULL:
                problems.append(Violation(t, k + 1, f"{arg_name(a)} refers to a NoFunc step"))
                continue
            if k < len(params) and got not in params[k]:
                want = "/".join(p.value for p in params[k])
                problems.append(Violation(t, k + 1, f"{step.func.name} expects {want}, got {got.value if got else '?'}"))
        types.append(return_type(step.func))
    return problems


def program_params(func: Func, n: int) -> list[frozenset[VType]]:
    if func is Func.Concatenate:
        return [frozenset((VType.STR, VType.CH))] * n
    return [frozenset((p,)) for p in SIGNATURES[func][0]]


def is_valid(program: Program) -> bool:
    return not type_check(program)


def step_types(program: Program) -> list[VType]:
    return [return_type(s.func) for s in program.active]
