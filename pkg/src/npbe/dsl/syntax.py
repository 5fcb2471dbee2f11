"""Textual surface syntax: parser and pretty-printer.

Two forms are accepted.

Nested form, as programs are usually written::

    Concatenate('Hello ', Select(Split(x, '@'), 0), ', have fun!')

String literals that are not one of the twelve delimiters become
GetConstString steps.  Constants are hoisted to the front in left-to-right
order, then calls are flattened innermost-first, left to right, with identical
sub-expressions shared.

Step form, for programs whose step order the nested form cannot express::

    Split(x, '/'); Select(o1, 0); Select(o1, 1); ToUpper(o3); Concatenate(o4, '-', o2)

Every step is a flat call; constants are written ``GetConstString('...')``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

from .program import Program, Step, type_check
from .symbols import (
    CHAR_DELIM,
    DELIM_CHAR,
    INT_VALUE,
    MAX_ARGS,
    MAX_STEPS,
    VALUE_INT,
    Arg,
    Func,
    ref_arg,
    ref_index,
)


class ParseError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message if offset is None else f"{message} (at byte {offset})")
        self.offset = offset


class DslSyntaxError(ParseError):
    pass


class UnknownIdentifier(ParseError):
    pass


class ArityError(ParseError):
    """Wrong number or type of arguments, or too many steps."""


_TOKEN = re.compile(
    r"""(?P<ws>\s+)
      | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<int>-?\d+)
      | (?P<str>'(?:[^'\\]|\\.)*')
      | (?P<punct>[(),;])""",
    re.VERBOSE | re.DOTALL,
)
_ESCAPES = {"n": "\n", "t": "\t", "\\": "\\", "'": "'", '"': '"'}


@dataclass
class _Tok:
    kind: str
    text: str
    pos: int


@dataclass
class _Call:
    name: str
    args: list
    pos: int


@dataclass
class _Lit:
    value: str
    pos: int


@dataclass
class _Int:
    value: int
    pos: int


@dataclass
class _Name:
    name: str
    pos: int


def _byte_offset(text: str, pos: int) -> int:
    return len(text[:pos].encode("utf-8"))


def _unescape(body: str) -> str:
    out = []
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\" and i + 1 < len(body):
            out.append(_ESCAPES.get(body[i + 1], body[i + 1]))
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


def quote(s: str) -> str:
    return "'" + s.replace("\\", "\\\\").replace("'", "\\'").replace("\n", "\\n").replace("\t", "\\t") + "'"


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = self._lex(text)
        self.i = 0

    def _err(self, cls, message, pos):
        return cls(message, _byte_offset(self.text, pos))

    def _lex(self, text):
        toks = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if m is None:
                raise self._err(DslSyntaxError, f"unexpected character {text[pos]!r}", pos)
            if m.lastgroup != "ws":
                toks.append(_Tok(m.lastgroup, m.group(), pos))
            pos = m.end()
        toks.append(_Tok("eof", "", len(text)))
        return toks

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, text=None):
        tok = self.toks[self.i]
        if (kind and tok.kind != kind) or (text and tok.text != text):
            want = text or kind
            got = tok.text or "end of input"
            raise self._err(DslSyntaxError, f"expected {want!r}, found {got!r}", tok.pos)
        self.i += 1
        return tok

    def items(self):
        out = [self.expr()]
        while self.peek().text == ";":
            self.take()
            out.append(self.expr())
        self.take("eof")
        return out

    def expr(self):
        tok = self.peek()
        if tok.kind == "ident":
            self.take()
            if self.peek().text == "(":
                self.take()
                args = []
                if self.peek().text != ")":
                    args.append(self.expr())
                    while self.peek().text == ",":
                        self.take()
                        args.append(self.expr())
                self.take(text=")")
                return _Call(tok.text, args, tok.pos)
            return _Name(tok.text, tok.pos)
        if tok.kind == "int":
            self.take()
            return _Int(int(tok.text), tok.pos)
        if tok.kind == "str":
            self.take()
            return _Lit(_unescape(tok.text[1:-1]), tok.pos)
        got = tok.text or "end of input"
        raise self._err(DslSyntaxError, f"expected an expression, found {got!r}", tok.pos)


class _Builder:
    def __init__(self, text: str):
        self.text = text
        self.steps: list[Step] = []
        self.consts: list[str] = []
        self.memo: dict[Step, int] = {}

    def err(self, cls, message, pos):
        return cls(message, _byte_offset(self.text, pos))

    def emit(self, step: Step, pos: int, share: bool = True) -> Arg:
        if share and step in self.memo:
            return ref_arg(self.memo[step])
        if len(self.steps) >= MAX_STEPS:
            raise self.err(ArityError, f"program exceeds {MAX_STEPS} steps", pos)
        self.steps.append(step)
        n = len(self.steps)
        if share:
            self.memo[step] = n
        # the fifth step is always the last one and is never referenced
        return ref_arg(n) if n <= 4 else Arg.NoArg

    def func_of(self, call: _Call) -> Func:
        try:
            return Func[call.name]
        except KeyError:
            raise self.err(UnknownIdentifier, f"unknown function {call.name!r}", call.pos) from None

    def atom(self, node, func: Func, flat: bool) -> Arg:
        if isinstance(node, _Int):
            if node.value not in VALUE_INT:
                raise self.err(UnknownIdentifier, f"integer {node.value} is not an argument symbol", node.pos)
            return VALUE_INT[node.value]
        if isinstance(node, _Lit):
            if node.value in CHAR_DELIM:
                return CHAR_DELIM[node.value]
            if func is Func.Concatenate:
                raise self.err(DslSyntaxError, "step form writes constants as GetConstString('...')", node.pos)
            raise self.err(UnknownIdentifier, f"{node.value!r} is not a delimiter", node.pos)
        if isinstance(node, _Name):
            if node.name == "x":
                return Arg.X
            m = re.fullmatch(r"o([1-4])", node.name)
            if m:
                if not flat:
                    raise self.err(DslSyntaxError, "step references o1..o4 are only valid in step form", node.pos)
                j = int(m.group(1))
                if j > len(self.steps):
                    raise self.err(ArityError, f"forward reference {node.name} at step {len(self.steps) + 1}", node.pos)
                return ref_arg(j)
            raise self.err(UnknownIdentifier, f"unknown identifier {node.name!r}", node.pos)
        raise self.err(DslSyntaxError, "nested call in step form", node.pos)

    # nested form
    def hoist(self, node, parent: Func | None):
        if isinstance(node, _Lit) and (
            parent is None or (parent is Func.Concatenate and node.value not in CHAR_DELIM)
        ):
            self.const_refs[id(node)] = self.emit(Step.make(Func.GetConstString), node.pos, share=False)
            self.consts.append(node.value)
        elif isinstance(node, _Call):
            func = self.func_of(node)
            if func is Func.GetConstString:
                if len(node.args) != 1 or not isinstance(node.args[0], _Lit):
                    raise self.err(ArityError, "GetConstString takes one string literal", node.pos)
                self.const_refs[id(node)] = self.emit(Step.make(Func.GetConstString), node.pos, share=False)
                self.consts.append(node.args[0].value)
                return
            for a in node.args:
                self.hoist(a, func)

    def flatten(self, node) -> Arg:
        if id(node) in self.const_refs:
            return self.const_refs[id(node)]
        func = self.func_of(node)
        if len(node.args) > MAX_ARGS:
            raise self.err(ArityError, f"{func.name} called with {len(node.args)} arguments", node.pos)
        args = []
        for a in node.args:
            if isinstance(a, _Call):
                args.append(self.flatten(a))
            elif isinstance(a, _Lit) and id(a) in self.const_refs:
                args.append(self.const_refs[id(a)])
            else:
                args.append(self.atom(a, func, flat=False))
        return self.emit(Step.make(func, *args), node.pos)

    def nested(self, node):
        self.const_refs: dict[int, Arg] = {}
        if isinstance(node, (_Int, _Name)):
            raise self.err(DslSyntaxError, "a program must be a function call", node.pos)
        self.hoist(node, None)
        if isinstance(node, _Lit) or id(node) in self.const_refs:
            return
        self.flatten(node)

    # step form
    def flat_step(self, node):
        if not isinstance(node, _Call):
            raise self.err(DslSyntaxError, "each step must be a function call", node.pos)
        func = self.func_of(node)
        if func is Func.GetConstString:
            if len(node.args) != 1 or not isinstance(node.args[0], _Lit):
                raise self.err(ArityError, "GetConstString takes one string literal", node.pos)
            self.emit(Step.make(func), node.pos, share=False)
            self.consts.append(node.args[0].value)
            return
        if len(node.args) > MAX_ARGS:
            raise self.err(ArityError, f"{func.name} called with {len(node.args)} arguments", node.pos)
        args = [self.atom(a, func, flat=True) for a in node.args]
        self.emit(Step.make(func, *args), node.pos, share=False)


def parse(text: str) -> tuple[Program, tuple[str, ...]]:
    """Parse program text into a program and its constant bindings."""
    items = _Parser(text).items()
    b = _Builder(text)
    if len(items) == 1:
        b.nested(items[0])
    else:
        for item in items:
            b.flat_step(item)
    program = Program.of(b.steps)
    problems = type_check(program)
    if problems:
        raise ArityError("; ".join(str(p) for p in problems))
    return program, tuple(b.consts)


def _arg_text(arg: Arg, exprs: Sequence[str]) -> str:
    if arg in DELIM_CHAR:
        return quote(DELIM_CHAR[arg])
    if arg in INT_VALUE:
        return str(INT_VALUE[arg])
    if arg is Arg.X:
        return "x"
    return exprs[ref_index(arg) - 1]


def _nested_text(program: Program, consts: Sequence[str]) -> str:
    exprs: list[str] = []
    it = iter(consts)
    for step in program.active:
        if step.func is Func.GetConstString:
            c = next(it)
            exprs.append(f"GetConstString({quote(c)})" if c in CHAR_DELIM else quote(c))
            continue
        exprs.append(f"{step.func.name}({', '.join(_arg_text(a, exprs) for a in step.used_args)})")
    text = exprs[-1]
    if program.active[-1].func is Func.GetConstString:
        text = f"GetConstString({quote(consts[-1])})"
    return text


def _step_text(program: Program, consts: Sequence[str]) -> str:
    parts = []
    it = iter(consts)
    for step in program.active:
        if step.func is Func.GetConstString:
            parts.append(f"GetConstString({quote(next(it))})")
            continue
        args = []
        for a in step.used_args:
            if a in DELIM_CHAR:
                args.append(quote(DELIM_CHAR[a]))
            elif a in INT_VALUE:
                args.append(str(INT_VALUE[a]))
            elif a is Arg.X:
                args.append("x")
            else:
                args.append(f"o{ref_index(a)}")
        parts.append(f"{step.func.name}({', '.join(args)})")
    return "; ".join(parts)


def pretty(program: Program, consts: Sequence[str] = ()) -> str:
    """Render as a nested expression when that parses back identically, else in step form."""
    if not program.active:
        raise ValueError("cannot print an empty program")
    consts = tuple(consts)
    text = _nested_text(program, consts)
    try:
        if parse(text) == (program, consts):
            return text
    except ParseError:
        pass
    return _step_text(program, consts)
