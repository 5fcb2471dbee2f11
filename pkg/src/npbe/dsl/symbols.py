"""Function and argument vocabularies of the string DSL."""

from __future__ import annotations

from enum import Enum, IntEnum

MAX_STEPS = 5
MAX_ARGS = 5
MAX_STRING_LEN = 62

# printable ASCII plus newline
CHARSET = "\n" + "".join(chr(c) for c in range(32, 127))
_CHARSET_SET = frozenset(CHARSET)


def in_charset(text: str) -> bool:
    return all(ch in _CHARSET_SET for ch in text)


class Func(IntEnum):
    Split = 0
    Join = 1
    Select = 2
    ToLower = 3
    ToUpper = 4
    Concatenate = 5
    GetConstString = 6
    NoFunc = 7


class Arg(IntEnum):
    SPACE = 0
    NEWLINE = 1
    COMMA = 2
    DOT = 3
    BACKSLASH = 4
    AT = 5
    COLON = 6
    SEMICOLON = 7
    UNDERSCORE = 8
    EQUALS = 9
    DASH = 10
    SLASH = 11
    I0 = 12
    I1 = 13
    I2 = 14
    I3 = 15
    IM1 = 16
    IM2 = 17
    IM3 = 18
    X = 19
    O1 = 20
    O2 = 21
    O3 = 22
    O4 = 23
    NoArg = 24


P = len(Func)
Q = len(Arg)

DELIMITERS: tuple[Arg, ...] = tuple(Arg(i) for i in range(12))
INTEGERS: tuple[Arg, ...] = tuple(Arg(i) for i in range(12, 19))
REFS: tuple[Arg, ...] = (Arg.O1, Arg.O2, Arg.O3, Arg.O4)

DELIM_CHAR: dict[Arg, str] = dict(zip(DELIMITERS, " \n,.\\@:;_=-/"))
CHAR_DELIM: dict[str, Arg] = {c: a for a, c in DELIM_CHAR.items()}
INT_VALUE: dict[Arg, int] = dict(zip(INTEGERS, (0, 1, 2, 3, -1, -2, -3)))
VALUE_INT: dict[int, Arg] = {v: a for a, v in INT_VALUE.items()}


def ref_index(arg: Arg) -> int | None:
    """1-based step number referenced by ``o1``..``o4``, else None."""
    if Arg.O1 <= arg <= Arg.O4:
        return int(arg) - int(Arg.O1) + 1
    return None


def ref_arg(step: int) -> Arg:
    if not 1 <= step <= 4:
        raise ValueError(f"no reference symbol for step {step}")
    return Arg(int(Arg.O1) + step - 1)


def arg_name(arg: Arg) -> str:
    if arg in DELIM_CHAR:
        return repr(DELIM_CHAR[arg])
    if arg in INT_VALUE:
        return str(INT_VALUE[arg])
    if arg is Arg.X:
        return "x"
    if arg is Arg.NoArg:
        return "NoArg"
    return f"o{ref_index(arg)}"


class VType(Enum):
    STR = "Str"
    STR_LIST = "StrList"
    CH = "Ch"
    INT = "Int"
    NULL = "Null"


# parameter types per function; Concatenate is variadic over {Str, Ch}
SIGNATURES: dict[Func, tuple[tuple[VType, ...], VType]] = {
    Func.Split: ((VType.STR, VType.CH), VType.STR_LIST),
    Func.Join: ((VType.STR_LIST, VType.CH), VType.STR),
    Func.Select: ((VType.STR_LIST, VType.INT), VType.STR),
    Func.ToLower: ((VType.STR,), VType.STR),
    Func.ToUpper: ((VType.STR,), VType.STR),
    Func.Concatenate: ((), VType.STR),
    Func.GetConstString: ((), VType.STR),
    Func.NoFunc: ((), VType.NULL),
}


def arity_range(func: Func) -> tuple[int, int]:
    if func is Func.Concatenate:
        return 1, MAX_ARGS
    n = len(SIGNATURES[func][0])
    return n, n


def return_type(func: Func) -> VType:
    return SIGNATURES[func][1]
