"""Encoding, type checking, interpreter and surface syntax."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from npbe.datagen.catalog import build_catalog, instantiate
from npbe.dsl import (
    ArityError,
    DecodeError,
    DslSyntaxError,
    ENCODING_LEN,
    IndexOutOfRange,
    ParseError,
    Program,
    Step,
    TypeMismatch,
    UnknownIdentifier,
    as_program,
    execute,
    is_valid,
    parse,
    pretty,
    type_check,
)
from npbe.dsl.interpreter import ConstBindingError, EmptyProgram
from npbe.dsl.symbols import Arg, Func

CATALOG = build_catalog()

# worked examples: (program text, input, output)
WORKED = [
    ("Concatenate('Hello ', Select(Split(x, '@'), 0), ', have fun!')", "john@company.com", "Hello john, have fun!"),
    ("Concatenate(ToUpper(Select(Split(x, '/'), 1)), '-', Select(Split(x, '/'), 0))", "17/apr/2016", "APR-17"),
    ("Select(Split(Select(Split(x, '/'), -1), '.'), 0)", "/home/foo/file.cpp", "file"),
    ("Select(Split(x, '@'), 0)", "john@example.com", "john"),
    ("Select(Split(x, '@'), 0)", "james@company.com", "james"),
    ("Join(Split(x, '/'), ':')", "25/11/16", "25:11:16"),
]


@st.composite
def catalog_programs(draw):
    task = CATALOG[draw(st.integers(0, len(CATALOG) - 1))]
    return instantiate(task, draw(st.integers(0, 2**32 - 1)))


@pytest.mark.parametrize("text,x,y", WORKED)
def test_worked_examples(text, x, y):
    program, consts = parse(text)
    assert execute(program, x, consts) == y


def test_first_worked_example_symbol_layout():
    program, consts = parse(WORKED[0][0])
    assert [s.func for s in program.active] == [
        Func.GetConstString, Func.GetConstString, Func.Split, Func.Select, Func.Concatenate,
    ]
    assert program.active[2].used_args == (Arg.X, Arg.AT)
    assert program.active[3].used_args == (Arg.O3, Arg.I0)
    assert program.active[4].used_args == (Arg.O1, Arg.O4, Arg.O2)
    assert consts == ("Hello ", ", have fun!")


def test_second_worked_example_step_order():
    # the nested form flattens innermost-first; the step form keeps the tabled order
    nested, _ = parse(WORKED[1][0])
    tabled, _ = parse("Split(x, '/'); Select(o1, 0); Select(o1, 1); ToUpper(o3); Concatenate(o4, '-', o2)")
    assert str(nested) == "Split(x, '/'); Select(o1, 1); ToUpper(o2); Select(o1, 0); Concatenate(o3, '-', o4)"
    assert execute(tabled, "17/apr/2016") == execute(nested, "17/apr/2016") == "APR-17"


@given(catalog_programs())
def test_encode_decode_round_trip(pc):
    program, _ = pc
    ids = program.encode()
    assert len(ids) == ENCODING_LEN
    assert Program.decode(ids) == program


@given(catalog_programs())
def test_catalog_programs_type_check(pc):
    assert is_valid(pc[0])


@given(catalog_programs())
def test_pretty_parse_round_trip(pc):
    program, consts = pc
    assert parse(pretty(program, consts)) == (program, consts)


@given(st.lists(st.integers(0, 24), min_size=30, max_size=30))
def test_decode_never_crashes_unexpectedly(ids):
    ids[0::6] = [i % 8 for i in ids[0::6]]
    try:
        program = Program.decode(ids)
    except DecodeError:
        return
    type_check(program)  # must return a list, not raise


def test_decode_rejects_bad_ids():
    with pytest.raises(DecodeError):
        Program.decode([0] * 29)
    bad = list(as_program([(Func.ToLower, Arg.X)]).encode())
    bad[1] = 99
    with pytest.raises(DecodeError):
        Program.decode(bad)
    after_pad = list(as_program([(Func.ToLower, Arg.X)]).encode())
    after_pad[12] = int(Func.ToUpper)
    with pytest.raises(DecodeError):
        Program.decode(after_pad)


def test_type_check_reports_violations():
    assert type_check(as_program([(Func.Select, Arg.X, Arg.I0)]))  # Str where StrList expected
    assert type_check(as_program([(Func.Split, Arg.O1, Arg.AT)]))  # forward reference
    assert type_check(as_program([(Func.Split, Arg.X)]))  # arity
    assert type_check(as_program([(Func.Concatenate, Arg.I0)]))  # Int in Concatenate
    p = as_program([(Func.Split, Arg.X, Arg.AT), (Func.Concatenate, Arg.O1)])
    assert type_check(p)  # list in Concatenate


def test_sort_key_prefers_fewer_steps():
    a = as_program([(Func.ToLower, Arg.X)])
    b = as_program([(Func.Split, Arg.X, Arg.AT), (Func.Select, Arg.O1, Arg.I0)])
    c = as_program([(Func.Split, Arg.X, Arg.SPACE), (Func.Select, Arg.O1, Arg.I0)])
    assert sorted([b, a, c], key=Program.sort_key) == [a, c, b]


# --------------------------------------------------------------- interpreter


def test_select_negative_and_out_of_range():
    p = as_program([(Func.Split, Arg.X, Arg.COMMA), (Func.Select, Arg.O1, Arg.IM1)])
    assert execute(p, "a,b,c") == "c"
    p = as_program([(Func.Split, Arg.X, Arg.COMMA), (Func.Select, Arg.O1, Arg.I3)])
    with pytest.raises(IndexOutOfRange) as err:
        execute(p, "a,b,c")
    assert err.value.step == 2


def test_split_keeps_empty_fields():
    p = as_program([(Func.Split, Arg.X, Arg.COMMA)])
    assert execute(p, ",a,,b,") == ("", "a", "", "b", "")


@given(st.text(alphabet="ab,. ", max_size=20), st.sampled_from([Arg.COMMA, Arg.DOT, Arg.SPACE]))
def test_split_join_inverse(x, d):
    p = as_program([(Func.Split, Arg.X, d), (Func.Join, Arg.O1, d)])
    assert execute(p, x) == x


def test_execution_errors():
    with pytest.raises(EmptyProgram):
        execute(Program.of([]), "x")
    with pytest.raises(TypeMismatch):
        execute(as_program([(Func.Select, Arg.X, Arg.I0)]), "abc")
    with pytest.raises(ConstBindingError):
        execute(as_program([(Func.GetConstString,)]), "abc")
    with pytest.raises(ConstBindingError):
        execute(as_program([(Func.ToLower, Arg.X)]), "abc", ("extra",))


def test_case_and_concatenate():
    p = as_program([(Func.ToUpper, Arg.X), (Func.Concatenate, Arg.O1, Arg.DASH, Arg.X)])
    assert execute(p, "ab") == "AB-ab"


# -------------------------------------------------------------------- syntax


def test_step_form_parses():
    text = "Split(x, '/'); Select(o1, 0); Select(o1, 1); ToUpper(o3); Concatenate(o4, '-', o2)"
    program, consts = parse(text)
    assert execute(program, "17/apr/2016", consts) == "APR-17"
    assert pretty(program, consts) == text


def test_shared_subexpressions_are_hoisted_once():
    program, _ = parse("Concatenate(Select(Split(x, ' '), 0), Select(Split(x, ' '), 1))")
    assert [s.func for s in program.active].count(Func.Split) == 1


@pytest.mark.parametrize("text,err", [
    ("Select(Split(x, '@'), 0", DslSyntaxError),
    ("Frobnicate(x)", UnknownIdentifier),
    ("Select(Split(x, '@'))", ArityError),
    ("Select(x, 0)", ArityError),
    ("Join(Split(x,'/'),:')", DslSyntaxError),
])
def test_parse_errors(text, err):
    with pytest.raises(err) as info:
        parse(text)
    assert isinstance(info.value, ParseError)


def test_parse_error_offset():
    with pytest.raises(ParseError) as info:
        parse("Join(Split(x,'/'),:')")
    assert info.value.offset == 18


def test_delimiter_literal_as_constant():
    program, consts = parse("Concatenate(x, GetConstString(','))")
    assert consts == (",",)
    assert execute(program, "a", consts) == "a,"
    assert parse(pretty(program, consts)) == (program, consts)


@given(st.text(alphabet="ab'\\\n ", max_size=6).filter(lambda s: len(s) > 1))
def test_constant_quoting_round_trip(c):
    program = Program.of([Step.make(Func.GetConstString), Step.make(Func.Concatenate, Arg.X, Arg.O1)])
    assume(True)
    assert parse(pretty(program, (c,))) == (program, (c,))
