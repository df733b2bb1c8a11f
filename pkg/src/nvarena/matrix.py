"""Stimulus matrix and stimulus-response matrix, plus persistence and export.

The SM is the execution plan: tests as rows, module versions as columns.
The SRM has the same shape and holds one Observation per cell. SRMs persist
as JSON Lines (one header record, then one record per cell) so a streaming
arena can append cells in completion order; the loader keys them by
(test_index, version_index).
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field, replace

from .errors import (
    DuplicateIdError,
    FormatVersionError,
    SignatureMismatchError,
    SrmFormatError,
)
from .sheets import MethodSignature, SequenceSheet, parse_sheet, render_sheet
from .values import SENTINEL_FOR_STATUS, canonical_decode, canonical_encode, is_sentinel

FORMAT_TAG = "srm/1"

STATUSES = ("ok", "error", "timeout", "crash")

ORIGINS = ("prompt_base", "provider", "manual")


def static_metrics_for(source: str) -> dict:
    return {"source_bytes": len(source.encode("utf-8")), "line_count": source.count("\n") + 1}


@dataclass(frozen=True)
class ModuleVersion:
    version_id: str
    language_tag: str
    source: str
    entry: str
    origin: str = "provider"
    static_metrics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.source:
            raise ValueError("version source must be non-empty")
        if self.origin not in ORIGINS:
            raise ValueError(f"unknown origin {self.origin!r}")
        if not self.static_metrics:
            object.__setattr__(self, "static_metrics", static_metrics_for(self.source))


@dataclass(frozen=True)
class StimulusMatrix:
    problem_id: str
    signature: MethodSignature
    tests: tuple
    versions: tuple

    def __post_init__(self):
        object.__setattr__(self, "tests", tuple(self.tests))
        object.__setattr__(self, "versions", tuple(self.versions))

    @property
    def shape(self):
        return (len(self.tests), len(self.versions))

    def version_index(self, version_id: str) -> int:
        for i, v in enumerate(self.versions):
            if v.version_id == version_id:
                return i
        raise KeyError(version_id)


def build_sm(problem_id, signature, tests, versions) -> StimulusMatrix:
    """Assemble an SM, preserving order and assigning V1..VN ids where absent."""
    numbered = []
    for i, version in enumerate(versions, start=1):
        if not version.version_id:
            version = replace(version, version_id=f"V{i}")
        numbered.append(version)

    seen = set()
    for version in numbered:
        if version.version_id in seen:
            raise DuplicateIdError(f"duplicate version_id {version.version_id!r}")
        seen.add(version.version_id)
        if version.entry != signature.name:
            raise SignatureMismatchError(
                f"version {version.version_id} entry {version.entry!r} != signature {signature.name!r}"
            )
    seen = set()
    for sheet in tests:
        if sheet.sheet_id in seen:
            raise DuplicateIdError(f"duplicate sheet_id {sheet.sheet_id!r}")
        seen.add(sheet.sheet_id)
        if sheet.signature != signature:
            raise SignatureMismatchError(
                f"sheet {sheet.sheet_id} signature {sheet.signature.render()} != {signature.render()}"
            )
    return StimulusMatrix(problem_id, signature, tuple(tests), tuple(numbered))


@dataclass(frozen=True)
class Observation:
    """Everything observed while running one test on one version."""

    status: str
    row_outputs: tuple
    wall_us: int
    per_row_wall_us: tuple
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "row_outputs", tuple(self.row_outputs))
        object.__setattr__(self, "per_row_wall_us", tuple(self.per_row_wall_us))
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        sentinel_at = [i for i, v in enumerate(self.row_outputs) if is_sentinel(v)]
        if self.status == "ok":
            if sentinel_at:
                raise ValueError("ok observation contains sentinel outputs")
        else:
            if not sentinel_at:
                raise ValueError(f"{self.status} observation has no sentinel outputs")
            # failing row and everything after it must be sentinel-filled
            first = sentinel_at[0]
            if sentinel_at != list(range(first, len(self.row_outputs))):
                raise ValueError("sentinels must fill the tail from the failing row")

    @classmethod
    def failure(cls, status, n_rows, wall_us=0, per_row_wall_us=(), ok_prefix=(), extra=None):
        """Observation for a run that failed at row len(ok_prefix)+1."""
        sentinel = SENTINEL_FOR_STATUS[status]
        outputs = tuple(ok_prefix) + (sentinel,) * (n_rows - len(ok_prefix))
        per_row = tuple(per_row_wall_us) + (0,) * (n_rows - len(per_row_wall_us))
        return cls(status, outputs, wall_us, per_row, extra or {})


@dataclass(frozen=True)
class StimulusResponseMatrix:
    stimulus: StimulusMatrix
    cells: tuple  # Observation grid, cells[test][version]

    def __post_init__(self):
        cells = tuple(tuple(row) for row in self.cells)
        object.__setattr__(self, "cells", cells)
        n_tests, n_versions = self.stimulus.shape
        if len(cells) != n_tests or any(len(row) != n_versions for row in cells):
            raise ValueError(f"cell grid shape does not match SM shape {self.stimulus.shape}")
        for t, sheet in enumerate(self.stimulus.tests):
            for v in range(n_versions):
                if len(cells[t][v].row_outputs) != len(sheet.rows):
                    raise ValueError(f"cell ({t},{v}) has wrong row count")

    @property
    def shape(self):
        return self.stimulus.shape


def output_vector(srm: StimulusResponseMatrix, test_index: int, version_index: int):
    """Canonical encodings of all row outputs of one cell (the comparison unit)."""
    n_tests, n_versions = srm.shape
    if not (0 <= test_index < n_tests and 0 <= version_index < n_versions):
        raise IndexError(f"cell ({test_index},{version_index}) outside shape {srm.shape}")
    cell = srm.cells[test_index][version_index]
    return [canonical_encode(v) for v in cell.row_outputs]


# --- persistence ---------------------------------------------------------------


def _header_record(srm: StimulusResponseMatrix) -> dict:
    sm = srm.stimulus
    return {
        "format": FORMAT_TAG,
        "problem": sm.problem_id,
        "signature": sm.signature.render(),
        "tests": [render_sheet(s) for s in sm.tests],
        "versions": [
            {
                "id": v.version_id,
                "language": v.language_tag,
                "source": v.source,
                "entry": v.entry,
                "origin": v.origin,
                "static_metrics": v.static_metrics,
            }
            for v in sm.versions
        ],
    }


def dump_srm(srm: StimulusResponseMatrix) -> str:
    out = io.StringIO()
    out.write(json.dumps(_header_record(srm), ensure_ascii=False) + "\n")
    for t in range(len(srm.stimulus.tests)):
        for v in range(len(srm.stimulus.versions)):
            cell = srm.cells[t][v]
            record = {
                "t": t,
                "v": v,
                "status": cell.status,
                "outputs": [canonical_encode(x) for x in cell.row_outputs],
                "wall_us": cell.wall_us,
                "per_row_wall_us": list(cell.per_row_wall_us),
            }
            if cell.extra:
                record["extra"] = cell.extra
            out.write(json.dumps(record, ensure_ascii=False) + "\n")
    return out.getvalue()


def save_srm(srm: StimulusResponseMatrix, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_srm(srm))


def loads_srm(text: str) -> StimulusResponseMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise SrmFormatError("empty SRM file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SrmFormatError(f"bad header record: {exc.msg}") from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT_TAG:
        raise FormatVersionError(f"unknown format {header.get('format')!r}, expected {FORMAT_TAG!r}")

    try:
        signature = MethodSignature.parse(header["signature"])
        tests = tuple(parse_sheet(s) for s in header["tests"])
        versions = tuple(
            ModuleVersion(
                version_id=v["id"],
                language_tag=v["language"],
                source=v["source"],
                entry=v["entry"],
                origin=v["origin"],
                static_metrics=v["static_metrics"],
            )
            for v in header["versions"]
        )
    except KeyError as exc:
        raise SrmFormatError(f"header missing field {exc}") from exc

    sm = StimulusMatrix(header["problem"], signature, tests, versions)
    grid = [[None] * len(versions) for _ in tests]
    for ln in lines[1:]:
        try:
            rec = json.loads(ln)
            obs = Observation(
                status=rec["status"],
                row_outputs=tuple(canonical_decode(x) for x in rec["outputs"]),
                wall_us=rec["wall_us"],
                per_row_wall_us=tuple(rec["per_row_wall_us"]),
                extra=rec.get("extra", {}),
            )
            grid[rec["t"]][rec["v"]] = obs
        except (json.JSONDecodeError, KeyError, IndexError, TypeError, ValueError) as exc:
            raise SrmFormatError(f"bad cell record {ln!r}: {exc}") from exc
    for t, row in enumerate(grid):
        for v, obs in enumerate(row):
            if obs is None:
                raise SrmFormatError(f"missing cell record for ({t},{v})")
    return StimulusResponseMatrix(sm, tuple(tuple(row) for row in grid))


def load_srm(path) -> StimulusResponseMatrix:
    with open(path, "r", encoding="utf-8") as fh:
        return loads_srm(fh.read())


def export_csv(srm: StimulusResponseMatrix, oracle=None) -> str:
    """One row per cell: problem,test,version,status,wall_us,oracle_match.

    oracle_match is 1/0 against the verdict's expected vector, empty when no
    oracle is given or the test is undecided.
    """
    sm = srm.stimulus
    lines = ["problem,test,version,status,wall_us,oracle_match"]
    for t, sheet in enumerate(sm.tests):
        for v, version in enumerate(sm.versions):
            cell = srm.cells[t][v]
            match = ""
            if oracle is not None and oracle.is_decided(t):
                match = "1" if oracle.matches(t, output_vector(srm, t, v)) else "0"
            lines.append(
                f"{sm.problem_id},{sheet.sheet_id},{version.version_id},{cell.status},{cell.wall_us},{match}"
            )
    return "\n".join(lines) + "\n"
