"""Sequence sheets: tests as ordered tables of method invocations.

A sheet is one test. Each row invokes the module under test once; inputs are
literals or references (``A<k>``) to the output of an earlier row. Prompt
tests additionally carry expected outputs, written with a ``=>`` suffix.

On-disk format (UTF-8, one invocation per line)::

    sheet <id> <name>(<tag>,...)-><tag>
    <index>,<op>,<cell>,... [=> <literal>]

where a cell is a JSON literal or ``A<k>``. A JSON object encoding of the
same model is accepted as an alternate input format.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field

from .errors import (
    DoctestParseError,
    PromptParseError,
    RefError,
    SheetSyntaxError,
    UnsupportedTypeError,
)
from .values import TYPE_TAGS, canonical_encode, is_sentinel, to_value

IDENT_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
CELLREF_RE = re.compile(r"^A([0-9]+)$")

CREATE_OP = "$create"


@dataclass(frozen=True)
class MethodSignature:
    name: str
    param_types: tuple
    return_type: str

    def __post_init__(self):
        if not IDENT_RE.match(self.name):
            raise SheetSyntaxError(f"bad method name {self.name!r}")
        for tag in tuple(self.param_types) + (self.return_type,):
            if tag not in TYPE_TAGS:
                raise UnsupportedTypeError(f"unknown type tag {tag!r}")
        object.__setattr__(self, "param_types", tuple(self.param_types))

    def render(self) -> str:
        return f"{self.name}({','.join(self.param_types)})->{self.return_type}"

    @classmethod
    def parse(cls, text: str) -> "MethodSignature":
        m = re.match(r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*->\s*([a-z]+)\s*$", text)
        if not m:
            raise SheetSyntaxError(f"bad signature {text!r}")
        name, params, ret = m.group(1), m.group(2).strip(), m.group(3)
        tags = tuple(p.strip() for p in params.split(",")) if params else ()
        return cls(name, tags, ret)


@dataclass(frozen=True)
class CellRef:
    """Reference to the output of an earlier row (1-based)."""

    row: int

    def render(self) -> str:
        return f"A{self.row}"


@dataclass(frozen=True)
class Invocation:
    row_index: int
    operation: str
    inputs: tuple

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if self.operation != CREATE_OP and not IDENT_RE.match(self.operation):
            raise SheetSyntaxError(f"bad operation name {self.operation!r}")
        for inp in self.inputs:
            if isinstance(inp, CellRef):
                if not 1 <= inp.row < self.row_index:
                    raise RefError(
                        f"row {self.row_index} references A{inp.row}; only earlier outputs are referencable"
                    )


@dataclass(frozen=True)
class SequenceSheet:
    sheet_id: str
    signature: MethodSignature
    rows: tuple
    expected: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "rows", tuple(self.rows))
        object.__setattr__(self, "expected", tuple(self.expected))
        if not IDENT_RE.match(self.sheet_id):
            raise SheetSyntaxError(f"bad sheet id {self.sheet_id!r}")
        if not self.rows:
            raise SheetSyntaxError("sheet has no rows")
        for i, row in enumerate(self.rows, start=1):
            if row.row_index != i:
                raise SheetSyntaxError(
                    f"row indices must be exactly 1..{len(self.rows)}, got {row.row_index} at position {i}"
                )
            if row.operation != CREATE_OP and row.operation != self.signature.name:
                raise SheetSyntaxError(
                    f"row {i} calls {row.operation!r}, sheet signature is {self.signature.name!r}"
                )
        valid = set(range(1, len(self.rows) + 1))
        for row_index, _ in self.expected:
            if row_index not in valid:
                raise SheetSyntaxError(f"expected output for nonexistent row {row_index}")

    def expected_map(self) -> dict:
        return {i: v for i, v in self.expected}


# --- text format -------------------------------------------------------------


def _split_top_level(text: str, seps=(",",)):
    """Split on separators that sit outside strings and brackets.

    Returns the list of pieces; separators may be multi-character (used for
    '=>'). Raises SheetSyntaxError on unbalanced nesting or unclosed strings.
    """
    pieces, buf = [], []
    depth = 0
    in_str = False
    escape = False
    i = 0
    while i < len(text):
        ch = text[i]
        if in_str:
            buf.append(ch)
            if escape:
                escape = False
            elif ch == "\\":
                escape = True
            elif ch == '"':
                in_str = False
            i += 1
            continue
        if ch == '"':
            in_str = True
            buf.append(ch)
            i += 1
            continue
        if ch in "[{":
            depth += 1
        elif ch in "]}":
            depth -= 1
            if depth < 0:
                raise SheetSyntaxError(f"unbalanced brackets in {text!r}")
        if depth == 0:
            matched = next((s for s in seps if text.startswith(s, i)), None)
            if matched:
                pieces.append("".join(buf))
                buf = []
                i += len(matched)
                continue
        buf.append(ch)
        i += 1
    if in_str or depth != 0:
        raise SheetSyntaxError(f"unterminated literal in {text!r}")
    pieces.append("".join(buf))
    return pieces


def _parse_literal(token: str):
    try:
        raw = json.loads(token)
    except json.JSONDecodeError as exc:
        raise SheetSyntaxError(f"bad literal {token!r}: {exc.msg}") from exc
    return to_value(raw)


def _parse_cell(token: str):
    token = token.strip()
    m = CELLREF_RE.match(token)
    if m:
        return CellRef(int(m.group(1)))
    return _parse_literal(token)


def parse_sheet(text: str) -> SequenceSheet:
    """Parse sheet-file text (or its JSON object encoding) into a SequenceSheet."""
    stripped = text.lstrip()
    if stripped.startswith("{"):
        return sheet_from_json(stripped)

    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise SheetSyntaxError("empty sheet text")
    header = lines[0].split(None, 2)
    if len(header) != 3 or header[0] != "sheet":
        raise SheetSyntaxError(f"bad header {lines[0]!r}")
    sheet_id = header[1]
    signature = MethodSignature.parse(header[2])

    rows, expected = [], []
    for ln in lines[1:]:
        halves = _split_top_level(ln, seps=("=>",))
        if len(halves) > 2:
            raise SheetSyntaxError(f"more than one '=>' in row {ln!r}")
        fields = [f.strip() for f in _split_top_level(halves[0])]
        if len(fields) < 2:
            raise SheetSyntaxError(f"row needs at least index and op: {ln!r}")
        try:
            index = int(fields[0])
        except ValueError:
            raise SheetSyntaxError(f"bad row index {fields[0]!r}") from None
        op = fields[1]
        inputs = [_parse_cell(tok) for tok in fields[2:]]
        rows.append(Invocation(index, op, inputs))
        if len(halves) == 2:
            expected.append((index, _parse_literal(halves[1].strip())))
    return SequenceSheet(sheet_id, signature, rows, expected)


def render_sheet(sheet: SequenceSheet) -> str:
    """Canonical text form; parse_sheet(render_sheet(s)) == s."""
    expected = sheet.expected_map()
    out = [f"sheet {sheet.sheet_id} {sheet.signature.render()}"]
    for row in sheet.rows:
        cells = [r.render() if isinstance(r, CellRef) else canonical_encode(r) for r in row.inputs]
        line = ",".join([str(row.row_index), row.operation] + cells)
        if row.row_index in expected:
            line += f" => {canonical_encode(expected[row.row_index])}"
        out.append(line)
    return "\n".join(out) + "\n"


# --- JSON alternate encoding ---------------------------------------------------


def sheet_to_json(sheet: SequenceSheet) -> dict:
    def enc_input(x):
        return {"ref": x.row} if isinstance(x, CellRef) else x

    return {
        "sheet_id": sheet.sheet_id,
        "signature": sheet.signature.render(),
        "rows": [{"op": r.operation, "inputs": [enc_input(x) for x in r.inputs]} for r in sheet.rows],
        "expected": [[i, v] for i, v in sheet.expected],
    }


def sheet_from_json(obj) -> SequenceSheet:
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise SheetSyntaxError(f"bad sheet JSON: {exc.msg}") from exc
    try:
        signature = MethodSignature.parse(obj["signature"])
        rows = []
        for i, row in enumerate(obj["rows"], start=1):
            inputs = [
                CellRef(x["ref"]) if isinstance(x, dict) and set(x) == {"ref"} else to_value(x)
                for x in row["inputs"]
            ]
            rows.append(Invocation(i, row["op"], inputs))
        expected = [(int(i), to_value(v)) for i, v in obj.get("expected", [])]
        return SequenceSheet(obj["sheet_id"], signature, rows, expected)
    except (KeyError, TypeError) as exc:
        raise SheetSyntaxError(f"bad sheet JSON: {exc!r}") from exc


# --- prompt conversion ------------------------------------------------------------

_DEF_RE = re.compile(r"^\s*def\s+([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*->\s*([^:]+):")

_ANNOTATION_TAGS = {
    "int": "int",
    "float": "float",
    "str": "string",
    "bool": "bool",
    "list": "list",
    "dict": "map",
    "none": "null",
    "nonetype": "null",
}


def _annotation_tag(annotation: str) -> str:
    base = annotation.strip().split("[", 1)[0].strip().lower()
    if base not in _ANNOTATION_TAGS:
        raise PromptParseError(f"unsupported type annotation {annotation.strip()!r}")
    return _ANNOTATION_TAGS[base]


def _signature_from_def(line: str) -> MethodSignature | None:
    m = _DEF_RE.match(line)
    if not m:
        return None
    name, params, ret = m.group(1), m.group(2), m.group(3)
    tags = []
    for param in _split_top_level(params) if params.strip() else []:
        param = param.strip()
        if not param or param in ("self", "cls"):
            continue
        if ":" not in param:
            raise PromptParseError(f"parameter {param!r} has no type annotation")
        tags.append(_annotation_tag(param.split(":", 1)[1]))
    return MethodSignature(name, tuple(tags), _annotation_tag(ret))


def _python_literal(text: str):
    try:
        return to_value(ast.literal_eval(text.strip()))
    except (ValueError, SyntaxError, UnsupportedTypeError) as exc:
        raise DoctestParseError(f"bad literal {text.strip()!r}: {exc}") from exc


def _doctest_result(text: str):
    # A result on the docstring's last line drags the closing quotes along
    # (e.g. '5"""'); retry without them before giving up.
    try:
        return _python_literal(text)
    except DoctestParseError:
        if text.endswith('"""') or text.endswith("'''"):
            return _python_literal(text[:-3])
        raise


def sheets_from_prompt(prompt: str):
    """Extract the method signature and one single-row sheet per doctest pair.

    The prompt format is the usual one: a ``def`` line with annotations,
    a description, then ``>>> call`` / result pairs. Each pair becomes a
    sheet asserting that call's expected output.
    """
    signature = None
    lines = prompt.splitlines()
    for ln in lines:
        signature = _signature_from_def(ln)
        if signature:
            break
    if signature is None:
        raise PromptParseError("no signature line found in prompt")

    sheets = []
    i = 0
    while i < len(lines):
        stripped = lines[i].strip()
        if not stripped.startswith(">>>"):
            i += 1
            continue
        call = stripped[3:].strip()
        m = re.match(r"^([A-Za-z_][A-Za-z0-9_]*)\s*\((.*)\)\s*$", call)
        if not m:
            raise DoctestParseError(f"unparseable call {call!r}")
        if m.group(1) != signature.name:
            raise DoctestParseError(f"call {m.group(1)!r} does not match signature {signature.name!r}")
        # result is the next non-empty line, which must not itself be a call
        j = i + 1
        result_line = None
        while j < len(lines):
            nxt = lines[j].strip()
            if nxt in ('"""', "'''"):
                break  # docstring closed with no result in sight
            if nxt:
                result_line = nxt
                break
            j += 1
        if result_line is None or result_line.startswith(">>>"):
            raise DoctestParseError(f"call {call!r} has no result line")
        args = _python_literal(f"[{m.group(2)}]") if m.group(2).strip() else []
        value = _doctest_result(result_line)
        n = len(sheets) + 1
        sheets.append(
            SequenceSheet(
                sheet_id=f"prompt{n}",
                signature=signature,
                rows=[Invocation(1, signature.name, args)],
                expected=[(1, value)],
            )
        )
        i = j + 1
    return signature, sheets


def sheet_refs_are_dag(sheet: SequenceSheet) -> bool:
    """Reference graph is a DAG ordered by row index (true for any valid sheet)."""
    for row in sheet.rows:
        for inp in row.inputs:
            if isinstance(inp, CellRef) and inp.row >= row.row_index:
                return False
    return True


def assert_no_sentinels(sheet: SequenceSheet):
    for row in sheet.rows:
        for inp in row.inputs:
            if is_sentinel(inp):
                raise UnsupportedTypeError("sentinels cannot appear in stimulus inputs")
