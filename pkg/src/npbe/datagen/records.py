"""Example records and their line-delimited JSON form."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from ..dsl.program import Program
from ..dsl.syntax import parse, pretty

SPLITS = ("train", "test_rq1", "test_rq2")


@dataclass(frozen=True)
class ExampleRecord:
    input: str
    output: str
    program: Program
    consts: tuple[str, ...]
    task_id: int
    split: str = "train"

    def relabel(self, program: Program, consts: tuple[str, ...]) -> "ExampleRecord":
        if program == self.program and consts == self.consts:
            return self
        return replace(self, program=program, consts=tuple(consts))

    @property
    def program_ids(self) -> tuple[int, ...]:
        return self.program.encode()

    def to_json(self) -> str:
        obj = {
            "input": self.input,
            "output": self.output,
            "program_ids": list(self.program_ids),
            "program_text": pretty(self.program, self.consts),
            "consts": list(self.consts),
            "task_id": self.task_id,
            "split": self.split,
        }
        return json.dumps(obj, ensure_ascii=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "ExampleRecord":
        obj = json.loads(line)
        program = Program.decode(obj["program_ids"])
        consts = tuple(obj["consts"])
        text_program, text_consts = parse(obj["program_text"])
        if text_program != program or text_consts != consts:
            raise ValueError(f"program_text {obj['program_text']!r} disagrees with program_ids")
        split = obj.get("split", "train")
        if split not in SPLITS:
            raise ValueError(f"unknown split {split!r}")
        return cls(obj["input"], obj["output"], program, consts, int(obj["task_id"]), split)
