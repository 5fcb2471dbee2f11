"""String-manipulation DSL: vocabularies, programs, interpreter and syntax."""

from .interpreter import (
    CharsetError,
    ConstBindingError,
    EmptyProgram,
    ExecutionError,
    IndexOutOfRange,
    TypeMismatch,
    execute,
    try_execute,
)
from .program import (
    ENCODING_LEN,
    DecodeError,
    Program,
    Step,
    Violation,
    as_program,
    is_valid,
    type_check,
)
from .symbols import CHARSET, MAX_ARGS, MAX_STEPS, MAX_STRING_LEN, P, Q, Arg, Func
from .syntax import ArityError, DslSyntaxError, ParseError, UnknownIdentifier, parse, pretty


def encode_symbols(program: Program) -> tuple[int, ...]:
    return program.encode()


def decode_symbols(ids) -> Program:
    return Program.decode(ids)
