"""Wire protocol between the arena and execution workers, plus conformance.

Transport is JSON Lines over the worker's stdin/stdout: one request in
flight per worker process, every message a single newline-terminated JSON
object carrying ``"proto": "nv/1"``. Workers are launched as
``<command> --serve`` and must answer a ping within 2000 ms.

The conformance checker drives a fixed 12-case golden transcript against a
worker command: ok, error, timeout, crash, reference chaining, and one case
per value type.
"""

from __future__ import annotations

import json
import os
import select
import shlex
import subprocess
import time
from dataclasses import dataclass, field

from .errors import ProtocolError, SpawnError
from .values import canonical_encode

PROTO = "nv/1"
PING_TIMEOUT_MS = 2000

ROW_STATUSES = ("ok", "error", "timeout", "crash")


@dataclass(frozen=True)
class ExecuteRequest:
    task_id: str
    language_tag: str
    source: str
    entry: str
    sheet: tuple  # rows of {"op": str, "inputs": [literal | {"ref": k}]}
    wall_ms: int = 2000
    mem_mb: int = 256

    def __post_init__(self):
        object.__setattr__(self, "sheet", tuple(self.sheet))
        if self.wall_ms < 1:
            raise ProtocolError("wall_ms must be >= 1")
        for i, row in enumerate(self.sheet, start=1):
            for inp in row["inputs"]:
                if _is_ref(inp) and not 1 <= inp["ref"] < i:
                    raise ProtocolError(f"row {i} ref {inp['ref']} is not an earlier row")


@dataclass(frozen=True)
class RowResult:
    status: str
    value: object = None
    message: str = ""
    wall_us: int = 0


@dataclass(frozen=True)
class ExecuteResponse:
    task_id: str
    status: str
    rows: tuple
    wall_us: int = 0
    extra: dict = field(default_factory=dict)


def _is_ref(obj) -> bool:
    return isinstance(obj, dict) and set(obj) == {"ref"} and isinstance(obj["ref"], int) \
        and not isinstance(obj["ref"], bool)


def _check_literal(obj):
    # The wire cannot distinguish a literal {"ref": <int>} from a reference;
    # that map shape is reserved.
    if _is_ref(obj):
        raise ProtocolError('literal maps of shape {"ref": <int>} are reserved for references')
    if isinstance(obj, dict):
        for v in obj.values():
            _check_literal(v)
    elif isinstance(obj, list):
        for v in obj:
            _check_literal(v)


def encode_request(req: ExecuteRequest) -> str:
    sheet = []
    for row in req.sheet:
        inputs = []
        for inp in row["inputs"]:
            if not _is_ref(inp):
                _check_literal(inp)
            inputs.append(inp)
        sheet.append({"op": row["op"], "inputs": inputs})
    msg = {
        "proto": PROTO,
        "type": "execute",
        "task_id": req.task_id,
        "module": {"language_tag": req.language_tag, "source": req.source, "entry": req.entry},
        "sheet": sheet,
        "limits": {"wall_ms": req.wall_ms, "mem_mb": req.mem_mb},
    }
    line = json.dumps(msg, ensure_ascii=False)
    if "\n" in line or "\r" in line:
        raise ProtocolError("encoded request contains a raw newline")
    return line + "\n"


def decode_request(line: str) -> ExecuteRequest:
    msg = _load_message(line)
    if msg.get("type") != "execute":
        raise ProtocolError(f"expected execute message, got {msg.get('type')!r}")
    try:
        module = msg["module"]
        limits = msg["limits"]
        return ExecuteRequest(
            task_id=msg["task_id"],
            language_tag=module["language_tag"],
            source=module["source"],
            entry=module["entry"],
            sheet=tuple(msg["sheet"]),
            wall_ms=limits["wall_ms"],
            mem_mb=limits["mem_mb"],
        )
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed execute request: {exc!r}") from exc


def encode_response(resp: ExecuteResponse) -> str:
    rows = []
    for row in resp.rows:
        rec = {"status": row.status, "wall_us": row.wall_us}
        if row.status == "ok":
            rec["value"] = row.value
        if row.message:
            rec["message"] = row.message
        rows.append(rec)
    msg = {
        "proto": PROTO,
        "type": "result",
        "task_id": resp.task_id,
        "status": resp.status,
        "rows": rows,
        "wall_us": resp.wall_us,
    }
    if resp.extra:
        msg["extra"] = resp.extra
    line = json.dumps(msg, ensure_ascii=False)
    if "\n" in line or "\r" in line:
        raise ProtocolError("encoded response contains a raw newline")
    return line + "\n"


def decode_response(line: str, expect_task_id: str | None = None) -> ExecuteResponse:
    msg = _load_message(line)
    if msg.get("type") != "result":
        raise ProtocolError(f"expected result message, got {msg.get('type')!r}")
    try:
        status = msg["status"]
        if status not in ROW_STATUSES:
            raise ProtocolError(f"unknown status token {status!r}")
        rows = []
        for rec in msg["rows"]:
            row_status = rec["status"]
            if row_status not in ROW_STATUSES:
                raise ProtocolError(f"unknown row status token {row_status!r}")
            rows.append(
                RowResult(
                    status=row_status,
                    value=rec.get("value"),
                    message=rec.get("message", ""),
                    wall_us=rec.get("wall_us", 0),
                )
            )
        resp = ExecuteResponse(
            task_id=msg["task_id"],
            status=status,
            rows=tuple(rows),
            wall_us=msg.get("wall_us", 0),
            extra=msg.get("extra", {}),
        )
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"malformed response: {exc!r}") from exc
    for row in resp.rows[:-1]:
        if row.status != "ok":
            raise ProtocolError("rows continue past the first non-ok row")
    if expect_task_id is not None and resp.task_id != expect_task_id:
        raise ProtocolError(f"task_id {resp.task_id!r} does not echo request {expect_task_id!r}")
    return resp


def _load_message(line: str) -> dict:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"malformed JSON: {exc.msg}") from exc
    if not isinstance(msg, dict):
        raise ProtocolError("message is not a JSON object")
    if msg.get("proto") != PROTO:
        raise ProtocolError(f"missing or wrong proto field: {msg.get('proto')!r}")
    return msg


def ping_line() -> str:
    return json.dumps({"proto": PROTO, "type": "ping"}) + "\n"


def is_pong(line: str) -> bool:
    try:
        msg = json.loads(line)
    except json.JSONDecodeError:
        return False
    return isinstance(msg, dict) and msg.get("type") == "pong"


# --- worker process plumbing --------------------------------------------------


class WorkerConnection:
    """One worker child process; single request in flight at a time."""

    def __init__(self, command: str, env: dict | None = None):
        argv = shlex.split(command) + ["--serve"]
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                env=env,
            )
        except OSError as exc:
            raise SpawnError(f"cannot launch worker {command!r}: {exc}") from exc
        self._buf = b""

    def read_line(self, timeout_s: float) -> str | None:
        """Next stdout line, or None on deadline/EOF."""
        deadline = time.monotonic() + timeout_s
        fd = self.proc.stdout.fileno()
        while b"\n" not in self._buf:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return None
            ready, _, _ = select.select([fd], [], [], remaining)
            if not ready:
                return None
            chunk = os.read(fd, 65536)
            if not chunk:
                return None
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line.decode("utf-8", errors="replace")

    def send_line(self, line: str) -> None:
        try:
            self.proc.stdin.write(line.encode("utf-8"))
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"worker pipe closed: {exc}") from exc

    def ping(self, timeout_ms: int = PING_TIMEOUT_MS) -> bool:
        try:
            self.send_line(ping_line())
        except ProtocolError:
            return False
        line = self.read_line(timeout_ms / 1000.0)
        return line is not None and is_pong(line)

    def alive(self) -> bool:
        return self.proc.poll() is None

    def close(self) -> None:
        if self.proc.poll() is None:
            self.proc.kill()
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            pass
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                stream.close()
            except OSError:
                pass


# --- conformance ---------------------------------------------------------------

# Candidate sources per language; the paper's example language is the one the
# reference worker must run.
_PY = {
    "gcd": "def gcd(a: int, b: int) -> int:\n    while b != 0:\n        a, b = b, a % b\n    return abs(a)\n",
    "raise": "def f(x):\n    raise ValueError('seeded failure %r' % (x,))\n",
    "loop": "def f(x):\n    while True:\n        pass\n",
    "exit": "def f(x):\n    import os\n    os._exit(9)\n",
    "inc": "def inc(x):\n    return x + 1\n",
    "echo": "def echo(x):\n    return x\n",
    "add": "def add(a, b):\n    return a + b\n",
    "neg": "def f(x):\n    return not x\n",
}

GOLDEN_CASES = {
    "python": [
        {"id": "ok_int", "source": _PY["gcd"], "entry": "gcd",
         "sheet": [{"op": "gcd", "inputs": [3, 7]}], "expect_status": "ok", "expect_values": [1]},
        {"id": "error_raise", "source": _PY["raise"], "entry": "f",
         "sheet": [{"op": "f", "inputs": [1]}], "expect_status": "error"},
        {"id": "timeout_loop", "source": _PY["loop"], "entry": "f",
         "sheet": [{"op": "f", "inputs": [1]}], "expect_status": "timeout",
         "wall_ms": 500, "check_timing": True},
        {"id": "crash_exit", "source": _PY["exit"], "entry": "f",
         "sheet": [{"op": "f", "inputs": [1]}], "expect_status": "crash", "check_survives": True},
        {"id": "ref_chain", "source": _PY["inc"], "entry": "inc",
         "sheet": [{"op": "inc", "inputs": [3]},
                   {"op": "inc", "inputs": [{"ref": 1}]},
                   {"op": "inc", "inputs": [{"ref": 2}]}],
         "expect_status": "ok", "expect_values": [4, 5, 6]},
        {"id": "value_int", "source": _PY["echo"], "entry": "echo",
         "sheet": [{"op": "echo", "inputs": [-42]}], "expect_status": "ok", "expect_values": [-42]},
        {"id": "value_float", "source": _PY["add"], "entry": "add",
         "sheet": [{"op": "add", "inputs": [0.1, 0.2]}], "expect_status": "ok",
         "expect_values": [0.30000000000000004]},
        {"id": "value_string", "source": _PY["echo"], "entry": "echo",
         "sheet": [{"op": "echo", "inputs": ["héllo, wörld"]}], "expect_status": "ok",
         "expect_values": ["héllo, wörld"]},
        {"id": "value_bool", "source": _PY["neg"], "entry": "f",
         "sheet": [{"op": "f", "inputs": [False]}], "expect_status": "ok", "expect_values": [True]},
        {"id": "value_list", "source": _PY["echo"], "entry": "echo",
         "sheet": [{"op": "echo", "inputs": [[1, [2, 3], "a"]]}], "expect_status": "ok",
         "expect_values": [[1, [2, 3], "a"]]},
        {"id": "value_map", "source": _PY["echo"], "entry": "echo",
         "sheet": [{"op": "echo", "inputs": [{"b": 1, "a": [2]}]}], "expect_status": "ok",
         "expect_values": [{"a": [2], "b": 1}]},
        {"id": "value_null", "source": _PY["echo"], "entry": "echo",
         "sheet": [{"op": "echo", "inputs": [None]}], "expect_status": "ok", "expect_values": [None]},
    ],
}

DEFAULT_WALL_MS = 2000


@dataclass
class CaseResult:
    case_id: str
    passed: bool
    detail: str = ""


@dataclass
class ConformanceReport:
    worker_command: str
    language_tag: str
    cases: list

    @property
    def passed(self) -> int:
        return sum(1 for c in self.cases if c.passed)

    @property
    def total(self) -> int:
        return len(self.cases)

    @property
    def ok(self) -> bool:
        return self.passed == self.total

    def to_json(self) -> dict:
        return {
            "worker": self.worker_command,
            "language": self.language_tag,
            "passed": self.passed,
            "total": self.total,
            "cases": [{"id": c.case_id, "pass": c.passed, "detail": c.detail} for c in self.cases],
        }

    def render_text(self) -> str:
        lines = [f"conformance: {self.worker_command} ({self.language_tag})"]
        for c in self.cases:
            mark = "PASS" if c.passed else "FAIL"
            lines.append(f"  [{mark}] {c.case_id}" + (f" -- {c.detail}" if c.detail else ""))
        lines.append(f"{self.passed}/{self.total} cases passed")
        return "\n".join(lines)


def conformance_check(worker_command: str, language_tag: str = "python") -> ConformanceReport:
    """Drive the golden transcript against a worker command, one fresh process per case."""
    if language_tag not in GOLDEN_CASES:
        raise ValueError(f"no golden cases for language {language_tag!r}")
    results = []
    for case in GOLDEN_CASES[language_tag]:
        results.append(_run_case(worker_command, language_tag, case))
    return ConformanceReport(worker_command, language_tag, results)


def _run_case(worker_command: str, language_tag: str, case: dict) -> CaseResult:
    wall_ms = case.get("wall_ms", DEFAULT_WALL_MS)
    case_id = case["id"]
    conn = WorkerConnection(worker_command)  # SpawnError propagates: nothing to report against
    try:
        if not conn.ping():
            return CaseResult(case_id, False, "no pong within 2000 ms")
        req = ExecuteRequest(
            task_id=f"conf-{case_id}",
            language_tag=language_tag,
            source=case["source"],
            entry=case["entry"],
            sheet=tuple(case["sheet"]),
            wall_ms=wall_ms,
        )
        started = time.monotonic()
        conn.send_line(encode_request(req))
        # generous outer deadline; the timing assertion itself is separate
        deadline_s = (2 * wall_ms * max(1, len(req.sheet))) / 1000.0 + 10.0
        line = conn.read_line(deadline_s)
        elapsed_ms = (time.monotonic() - started) * 1000.0
        if line is None:
            return CaseResult(case_id, False, "no response before deadline")
        try:
            resp = decode_response(line, expect_task_id=req.task_id)
        except ProtocolError as exc:
            return CaseResult(case_id, False, f"protocol error: {exc}")
        if resp.status != case["expect_status"]:
            return CaseResult(case_id, False, f"status {resp.status!r}, expected {case['expect_status']!r}")
        if "expect_values" in case:
            got = [canonical_encode(r.value) for r in resp.rows if r.status == "ok"]
            want = [canonical_encode(v) for v in case["expect_values"]]
            if got != want:
                return CaseResult(case_id, False, f"values {got} != expected {want}")
        if case.get("check_timing") and elapsed_ms > 2 * wall_ms:
            return CaseResult(case_id, False, f"timeout reply took {elapsed_ms:.0f} ms > 2*{wall_ms} ms")
        if case.get("check_survives") and not conn.ping():
            return CaseResult(case_id, False, "serve loop did not survive the candidate fault")
        return CaseResult(case_id, True)
    finally:
        conn.close()
