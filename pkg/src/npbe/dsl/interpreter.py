"""Deterministic interpreter for the string DSL.

Runtime values are plain Python objects: ``str`` for Str and Ch, ``tuple`` of
``str`` for StrList, ``int`` for Int.  The static types are tracked by
:func:`npbe.dsl.program.type_check`; at runtime a delimiter is just a
one-character string.
"""

from __future__ import annotations

from typing import Sequence, Union

from .program import Program, Step, type_check
from .symbols import DELIM_CHAR, INT_VALUE, Arg, Func, in_charset, ref_index

Value = Union[str, tuple, int, None]


class ExecutionError(Exception):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


class IndexOutOfRange(ExecutionError):
    pass


class TypeMismatch(ExecutionError):
    pass


class EmptyProgram(ExecutionError):
    pass


class CharsetError(ExecutionError):
    pass


class ConstBindingError(ExecutionError):
    pass


def resolve_arg(arg: Arg, x: str, outputs: Sequence[Value], step: int) -> Value:
    if arg in DELIM_CHAR:
        return DELIM_CHAR[arg]
    if arg in INT_VALUE:
        return INT_VALUE[arg]
    if arg is Arg.X:
        return x
    j = ref_index(arg)
    if j is None or j > len(outputs):
        raise TypeMismatch(f"unresolvable argument {arg.name}", step)
    return outputs[j - 1]


def apply(func: Func, args: Sequence[Value], step: int | None = None, const: str | None = None) -> Value:
    """Apply one atomic function to already-resolved argument values."""
    try:
        if func is Func.Split:
            s, d = args
            if not isinstance(s, str):
                raise TypeMismatch("Split expects a string", step)
            return tuple(s.split(d))
        if func is Func.Join:
            parts, d = args
            if not isinstance(parts, tuple):
                raise TypeMismatch("Join expects a string list", step)
            return d.join(parts)
        if func is Func.Select:
            parts, i = args
            if not isinstance(parts, tuple):
                raise TypeMismatch("Select expects a string list", step)
            n = len(parts)
            if not -n <= i < n:
                raise IndexOutOfRange(f"Select index {i} outside list of length {n}", step)
            return parts[i]
        if func is Func.ToLower:
            return args[0].lower()
        if func is Func.ToUpper:
            return args[0].upper()
        if func is Func.Concatenate:
            if not 1 <= len(args) <= 5 or not all(isinstance(a, str) for a in args):
                raise TypeMismatch("Concatenate expects 1..5 strings or characters", step)
            return "".join(args)
        if func is Func.GetConstString:
            if const is None:
                raise ConstBindingError("missing constant binding for GetConstString", step)
            return const
    except (AttributeError, ValueError) as exc:
        raise TypeMismatch(str(exc), step) from exc
    raise TypeMismatch(f"cannot apply {func.name}", step)


def run_steps(steps: Sequence[Step], x: str, consts: Sequence[str] = ()) -> list[Value]:
    """Execute active steps in order and return every intermediate output."""
    outputs: list[Value] = []
    const_iter = iter(consts)
    for t, step in enumerate(steps, start=1):
        const = None
        if step.func is Func.GetConstString:
            const = next(const_iter, None)
            if const is None:
                raise ConstBindingError("more GetConstString steps than bindings", t)
        args = [resolve_arg(a, x, outputs, t) for a in step.used_args]
        outputs.append(apply(step.func, args, t, const))
    return outputs


def execute(program: Program, x: str, consts: Sequence[str] = (), check: bool = True) -> Value:
    """Run ``program`` on input ``x`` and return the last active step's output."""
    if check:
        problems = type_check(program)
        if problems:
            raise TypeMismatch("; ".join(str(p) for p in problems))
        if not in_charset(x):
            raise CharsetError("input contains characters outside the supported set")
    steps = program.active
    if not steps:
        raise EmptyProgram("program has no active steps")
    if len(consts) != program.n_consts():
        raise ConstBindingError(
            f"program has {program.n_consts()} GetConstString steps but {len(consts)} bindings"
        )
    return run_steps(steps, x, consts)[-1]


def try_execute(program: Program, x: str, consts: Sequence[str] = ()) -> Value:
    """Like :func:`execute` but returns None on any execution error."""
    try:
        return execute(program, x, consts, check=False)
    except ExecutionError:
        return None
