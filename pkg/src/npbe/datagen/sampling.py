"""Random input strings that are valid for a given program.

Inputs are built from the program's structure: a string that the program
splits on ``d`` is generated as ``k`` alphanumeric fields joined by ``d``,
with ``k`` large enough for every Select index applied to the pieces, and a
selected field that is split again is generated recursively.  Token lengths
are scaled down, not resampled, when the input or output would exceed the
length limit.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..dsl.interpreter import ExecutionError, execute
from ..dsl.program import Program
from ..dsl.symbols import DELIM_CHAR, INT_VALUE, MAX_STRING_LEN, Arg, Func, ref_index

MAX_FIELDS = 7
MAX_TOKEN_LEN = 10
_LOWER = string.ascii_lowercase
_UPPER = string.ascii_uppercase
_DIGITS = string.digits
_DELIM_CHARS = tuple(DELIM_CHAR.values())


class GenerationExhausted(RuntimeError):
    pass


@dataclass
class SamplerStats:
    attempts: int = 0
    rejections: int = 0
    reasons: dict = field(default_factory=dict)

    @property
    def rejection_rate(self) -> float:
        return self.rejections / self.attempts if self.attempts else 0.0

    def reject(self, reason: str):
        self.rejections += 1
        self.reasons[reason] = self.reasons.get(reason, 0) + 1


def random_token(rng: np.random.Generator, length: int | None = None) -> str:
    """Alphanumeric token: 70% lowercase, 20% mixed case, 10% uppercase letters."""
    n = int(rng.integers(1, MAX_TOKEN_LEN + 1)) if length is None else length
    style = rng.random()
    chars = []
    for _ in range(n):
        if rng.random() < 0.1:
            chars.append(_DIGITS[int(rng.integers(10))])
            continue
        if style < 0.7:
            pool = _LOWER
        elif style < 0.9:
            pool = _LOWER if rng.random() < 0.5 else _UPPER
        else:
            pool = _UPPER
        chars.append(pool[int(rng.integers(26))])
    return "".join(chars)


def _src(arg: Arg) -> int | None:
    """Value source of an argument: 0 for x, j for o_j, None for constants."""
    if arg is Arg.X:
        return 0
    return ref_index(arg)


class _Shape:
    """Split/Select structure of a program, keyed by value source."""

    def __init__(self, program: Program):
        steps = program.active
        self.alias: dict[int, int] = {}
        self.splits: dict[int, list[tuple[int, str]]] = {}
        self.selects: dict[int, list[tuple[int, int]]] = {}
        for t, step in enumerate(steps, start=1):
            args = step.used_args
            if step.func in (Func.ToLower, Func.ToUpper):
                s = _src(args[0])
                self.alias[t] = self.root(s)
            elif step.func is Func.Split:
                s = self.root(_src(args[0]))
                self.splits.setdefault(s, []).append((t, DELIM_CHAR[args[1]]))
            elif step.func is Func.Select:
                s = _src(args[0])
                self.selects.setdefault(s, []).append((t, INT_VALUE[args[1]]))

    def root(self, s: int | None) -> int | None:
        while s in self.alias:
            s = self.alias[s]
        return s


def _build(shape: _Shape, src: int, forbidden: frozenset, rng: np.random.Generator, top: bool):
    splits = shape.splits.get(src)
    if not splits:
        if not top:
            return ("tok", random_token(rng))
        n = int(rng.integers(1, 4))
        toks = [("tok", random_token(rng)) for _ in range(n)]
        if n == 1:
            return toks[0]
        d = _DELIM_CHARS[int(rng.integers(len(_DELIM_CHARS)))]
        return ("join", d, toks)
    split_step, delim = splits[0]
    if delim in forbidden:
        raise GenerationExhausted(f"field split by {delim!r} is nested inside a split by the same delimiter")
    picks = shape.selects.get(split_step, [])
    kmin = 2
    for _, i in picks:
        kmin = max(kmin, i + 1 if i >= 0 else -i)
    k = int(rng.integers(kmin, max(kmin, MAX_FIELDS) + 1))
    fields: list = [None] * k
    for u, i in picks:
        p = i if i >= 0 else k + i
        if 0 <= p < k and fields[p] is None and shape.root(u) in shape.splits:
            fields[p] = _build(shape, shape.root(u), forbidden | {delim}, rng, top=False)
    fields = [f if f is not None else ("tok", random_token(rng)) for f in fields]
    return ("join", delim, fields)


def _render(node, scale: float) -> str:
    if node[0] == "tok":
        tok = node[1]
        return tok[: max(1, int(len(tok) * scale))]
    return node[1].join(_render(c, scale) for c in node[2])


def sample_input(
    program: Program,
    rng: np.random.Generator | int,
    consts: Sequence[str] = (),
    max_attempts: int = 50,
    stats: SamplerStats | None = None,
) -> str:
    """Sample an input on which ``program`` runs and both strings fit the length limit."""
    rng = np.random.default_rng(rng)
    shape = _Shape(program)
    for _ in range(max_attempts):
        if stats is not None:
            stats.attempts += 1
        try:
            node = _build(shape, 0, frozenset(), rng, top=True)
        except GenerationExhausted:
            if stats is not None:
                stats.reject("structure")
            raise
        scale = 1.0
        for _repair in range(6):
            x = _render(node, scale)
            try:
                y = execute(program, x, consts, check=False)
            except ExecutionError:
                if stats is not None:
                    stats.reject("execution")
                break
            if not isinstance(y, str) or not y:
                if stats is not None:
                    stats.reject("output")
                break
            if len(x) <= MAX_STRING_LEN and len(y) <= MAX_STRING_LEN:
                return x
            scale *= 0.9 * min(MAX_STRING_LEN / len(x), MAX_STRING_LEN / len(y), 1.0)
        else:
            if stats is not None:
                stats.reject("length")
    raise GenerationExhausted(f"no valid input for {program} after {max_attempts} attempts")
