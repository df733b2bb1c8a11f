"""Execution arena: runs every (test, version) cell through a worker pool.

Cells are independent tasks executed by up to ``pool_size`` concurrent
slots; each slot either runs the built-in in-process stub or owns a fresh
worker subprocess for the duration of one cell. The assembled SRM is a pure
function of (SM, candidate behavior, limits), never of scheduling order.
"""

from __future__ import annotations

import contextlib
import io
import itertools
import sys
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .errors import (
    AbortedError,
    EmptyMatrixError,
    ProtocolError,
    RefError,
    SpawnError,
    WorkerUnavailableError,
)
from .matrix import Observation, StimulusMatrix, StimulusResponseMatrix
from .sheets import CellRef, SequenceSheet
from .stubexec import run_stub
from .values import SENTINEL_FOR_STATUS, is_sentinel
from .workerproto import (
    ExecuteRequest,
    ExecuteResponse,
    RowResult,
    WorkerConnection,
    decode_response,
    encode_request,
)

STUB_COMMAND = "builtin:stub"

VIRTUAL_ROW_US = 1000  # synthetic per-row wall time under virtual_time


@dataclass
class ArenaConfig:
    pool_size: int = 4
    wall_ms: int = 2000
    mem_mb: int = 256
    worker_command: dict = field(default_factory=lambda: {"python": STUB_COMMAND})
    retry_on_crash: int = 1
    virtual_time: bool = False

    def __post_init__(self):
        if self.pool_size < 1:
            raise ValueError("pool_size must be >= 1")
        if self.wall_ms < 1:
            raise ValueError("wall_ms must be >= 1")
        if self.retry_on_crash < 0:
            raise ValueError("retry_on_crash must be >= 0")


@dataclass(frozen=True)
class CellTask:
    test_index: int
    version_index: int


def resolve_refs(sheet: SequenceSheet, produced_outputs):
    """Concrete inputs per row given earlier outputs (1-based dict or list).

    Rows whose references point at failed or missing outputs come back as
    None: they must not be dispatched. An out-of-range reference raises
    RefError (parse-time validation should have caught it).
    """
    if not isinstance(produced_outputs, dict):
        produced_outputs = {i: v for i, v in enumerate(produced_outputs, start=1)}
    resolved = []
    for row in sheet.rows:
        inputs = []
        dispatchable = True
        for inp in row.inputs:
            if isinstance(inp, CellRef):
                if not 1 <= inp.row < row.row_index:
                    raise RefError(f"row {row.row_index} references A{inp.row}")
                if inp.row not in produced_outputs or is_sentinel(produced_outputs[inp.row]):
                    dispatchable = False
                    break
                inputs.append(produced_outputs[inp.row])
            else:
                inputs.append(inp)
        resolved.append(inputs if dispatchable else None)
    return resolved


def wire_rows(sheet: SequenceSheet):
    """Sheet rows in the protocol's input encoding (refs as {"ref": k})."""
    rows = []
    for row in sheet.rows:
        inputs = [{"ref": x.row} if isinstance(x, CellRef) else x for x in row.inputs]
        rows.append({"op": row.operation, "inputs": inputs})
    return rows


def execute(sm: StimulusMatrix, cfg: ArenaConfig, cancel: threading.Event | None = None) -> StimulusResponseMatrix:
    """Run all tests on all versions and assemble the SRM."""
    if not sm.tests or not sm.versions:
        raise EmptyMatrixError("stimulus matrix needs at least one test and one version")

    languages = {v.language_tag for v in sm.versions}
    for lang in sorted(languages):
        if lang not in cfg.worker_command:
            raise WorkerUnavailableError(f"no worker command configured for language {lang!r}")
    _preflight(cfg, languages)

    tasks = [CellTask(t, v) for t, v in itertools.product(range(len(sm.tests)), range(len(sm.versions)))]
    grid = [[None] * len(sm.versions) for _ in sm.tests]

    uses_stub = any(cfg.worker_command[lang] == STUB_COMMAND for lang in languages)
    shield = _stdout_shield() if uses_stub else contextlib.nullcontext()
    with shield:
        with ThreadPoolExecutor(max_workers=cfg.pool_size) as pool:
            futures = {pool.submit(_run_cell, sm, cfg, task): task for task in tasks}
            for future, task in futures.items():
                if cancel is not None and cancel.is_set():
                    pool.shutdown(wait=False, cancel_futures=True)
                    raise AbortedError("execution cancelled")
                grid[task.test_index][task.version_index] = future.result()

    return StimulusResponseMatrix(sm, tuple(tuple(row) for row in grid))


@contextlib.contextmanager
def _stdout_shield():
    # Candidate prints under the stub must not leak into the host's stdout
    # (the CLI promises a single JSON document there).
    real, sys.stdout = sys.stdout, io.StringIO()
    try:
        yield
    finally:
        sys.stdout = real


def _preflight(cfg: ArenaConfig, languages):
    """Spawn-and-ping each distinct worker command once before running cells."""
    for command in sorted({cfg.worker_command[lang] for lang in languages}):
        if command == STUB_COMMAND:
            continue
        try:
            conn = WorkerConnection(command)
        except SpawnError as exc:
            raise WorkerUnavailableError(str(exc)) from exc
        try:
            if not conn.ping():
                raise WorkerUnavailableError(f"worker {command!r} did not answer ping")
        finally:
            conn.close()


def _run_cell(sm: StimulusMatrix, cfg: ArenaConfig, task: CellTask) -> Observation:
    sheet = sm.tests[task.test_index]
    version = sm.versions[task.version_index]
    command = cfg.worker_command[version.language_tag]

    attempts = 1 + cfg.retry_on_crash
    response = None
    wall_us = 0
    for _ in range(attempts):
        req = ExecuteRequest(
            task_id=uuid.uuid4().hex,
            language_tag=version.language_tag,
            source=version.source,
            entry=version.entry,
            sheet=tuple(wire_rows(sheet)),
            wall_ms=cfg.wall_ms,
            mem_mb=cfg.mem_mb,
        )
        if command == STUB_COMMAND:
            started = time.monotonic()
            response = run_stub(req)
            wall_us = int((time.monotonic() - started) * 1e6)
        else:
            response, wall_us = _run_subprocess_cell(command, req)
        if response.status == "ok" and sum(1 for r in response.rows if r.status == "ok") != len(sheet.rows):
            response = ExecuteResponse(task_id=req.task_id, status="crash", rows=())
        if response.status != "crash":
            break
    return _observe(sheet, response, wall_us, cfg)


def _run_subprocess_cell(command: str, req: ExecuteRequest):
    """One fresh worker process per cell; any protocol breakdown is a crash.

    Returns (response, wall_us) with the wall clock around the
    request/response exchange only (spawn and handshake excluded).
    """
    crash = ExecuteResponse(task_id=req.task_id, status="crash", rows=())
    try:
        conn = WorkerConnection(command)
    except SpawnError:
        return crash, 0
    started = None
    try:
        if not conn.ping():
            return crash, 0
        started = time.monotonic()
        conn.send_line(encode_request(req))
        # outer kill: the worker's own watchdog should reply well before this
        deadline_s = (2 * req.wall_ms * max(1, len(req.sheet))) / 1000.0
        line = conn.read_line(deadline_s)
        wall_us = int((time.monotonic() - started) * 1e6)
        if line is None:
            status = "timeout" if conn.alive() else "crash"
            return ExecuteResponse(task_id=req.task_id, status=status, rows=()), wall_us
        try:
            return decode_response(line, expect_task_id=req.task_id), wall_us
        except ProtocolError:
            return crash, wall_us
    except ProtocolError:
        elapsed = int((time.monotonic() - started) * 1e6) if started else 0
        return crash, elapsed
    finally:
        conn.close()


def _observe(sheet: SequenceSheet, response: ExecuteResponse, wall_us: int, cfg: ArenaConfig) -> Observation:
    n_rows = len(sheet.rows)
    ok_values = []
    per_row = []
    for row in response.rows[:n_rows]:
        if row.status != "ok":
            break
        ok_values.append(row.value)
        per_row.append(row.wall_us)

    if response.status == "ok":
        obs = Observation("ok", tuple(ok_values), wall_us, tuple(per_row))
    else:
        if len(ok_values) == n_rows:  # inconsistent worker: keep the sentinel discipline
            ok_values.pop()
            per_row.pop()
        sentinel = SENTINEL_FOR_STATUS[response.status]
        outputs = tuple(ok_values) + (sentinel,) * (n_rows - len(ok_values))
        failed_row = response.rows[len(ok_values)] if len(response.rows) > len(ok_values) else None
        per_row = tuple(per_row) + ((failed_row.wall_us,) if failed_row else ()) + \
            (0,) * (n_rows - len(per_row) - (1 if failed_row else 0))
        obs = Observation(response.status, outputs, wall_us, per_row)

    if cfg.virtual_time:
        obs = Observation(
            obs.status,
            obs.row_outputs,
            VIRTUAL_ROW_US * n_rows,
            (VIRTUAL_ROW_US,) * n_rows,
            obs.extra,
        )
    return obs
