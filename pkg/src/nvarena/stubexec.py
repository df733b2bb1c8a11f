"""In-process stub worker for pure-arithmetic Python candidates.

Lets the engine run fixture candidates without spawning worker processes:
the candidate source is exec'd under a restricted builtin set and each row
is interrupted via a per-thread trace hook once its wall deadline passes.
This is a convenience for trusted, CPU-only candidates, not a security
boundary; real isolation belongs to the subprocess workers.

A candidate raising SystemExit is recorded as a crash: that is the
in-language form of killing the worker process.
"""

from __future__ import annotations

import builtins as _builtins
import sys
import time

from .values import to_value
from .errors import UnsupportedTypeError
from .workerproto import ExecuteRequest, ExecuteResponse, RowResult

_SAFE_BUILTIN_NAMES = [
    "abs", "all", "any", "bool", "dict", "divmod", "enumerate", "filter", "float",
    "int", "len", "list", "map", "max", "min", "pow", "range", "repr", "reversed",
    "round", "set", "sorted", "str", "sum", "tuple", "zip", "isinstance",
    "ArithmeticError", "Exception", "IndexError", "KeyError", "OverflowError",
    "RecursionError", "RuntimeError", "StopIteration", "SystemExit", "TypeError",
    "ValueError", "ZeroDivisionError",
]

SAFE_BUILTINS = {name: getattr(_builtins, name) for name in _SAFE_BUILTIN_NAMES}


class _StubTimeout(Exception):
    pass


def _call_with_deadline(fn, args, deadline):
    """Call fn(*args), aborting via trace hook once monotonic time passes deadline.

    Works for candidates whose loops execute Python bytecode (line events);
    a loop spinning inside a C call cannot be interrupted this way.
    """

    def tracer(frame, event, arg):
        if time.monotonic() > deadline:
            raise _StubTimeout()
        return tracer

    old = sys.gettrace()
    sys.settrace(tracer)
    try:
        return fn(*args)
    finally:
        sys.settrace(old)


def run_stub(req: ExecuteRequest) -> ExecuteResponse:
    """Execute one request entirely in-process; mirrors a worker's semantics."""
    started = time.monotonic()
    namespace = {"__builtins__": SAFE_BUILTINS}
    try:
        exec(compile(req.source, "<candidate>", "exec"), namespace)
    except SyntaxError as exc:
        row = RowResult("error", message=f"compile: {exc.msg} (line {exc.lineno})")
        return _finish(req, "error", [row], started)
    except Exception as exc:
        row = RowResult("error", message=f"compile: {exc!r}")
        return _finish(req, "error", [row], started)

    fn = namespace.get(req.entry)
    if not callable(fn):
        row = RowResult("error", message=f"entry {req.entry!r} not found or not callable")
        return _finish(req, "error", [row], started)

    rows = []
    outputs = {}  # 1-based row index -> value
    for i, row in enumerate(req.sheet, start=1):
        args = []
        for inp in row["inputs"]:
            if isinstance(inp, dict) and set(inp) == {"ref"}:
                args.append(outputs[inp["ref"]])  # encode-side validation guarantees presence
            else:
                args.append(inp)
        row_started = time.monotonic()
        deadline = row_started + req.wall_ms / 1000.0
        try:
            result = _call_with_deadline(fn, args, deadline)
            value = to_value(result)
        except _StubTimeout:
            rows.append(_row("timeout", row_started, message=f"exceeded {req.wall_ms} ms"))
            return _finish(req, "timeout", rows, started)
        except SystemExit as exc:
            rows.append(_row("crash", row_started, message=f"candidate exited ({exc.code})"))
            return _finish(req, "crash", rows, started)
        except UnsupportedTypeError as exc:
            rows.append(_row("error", row_started, message=str(exc)))
            return _finish(req, "error", rows, started)
        except Exception as exc:
            rows.append(_row("error", row_started, message=f"{type(exc).__name__}: {exc}"))
            return _finish(req, "error", rows, started)
        rows.append(_row("ok", row_started, value=value))
        outputs[i] = value
    return _finish(req, "ok", rows, started)


def _row(status, row_started, value=None, message=""):
    wall_us = int((time.monotonic() - row_started) * 1e6)
    return RowResult(status, value=value, message=message, wall_us=wall_us)


def _finish(req, status, rows, started):
    return ExecuteResponse(
        task_id=req.task_id,
        status=status,
        rows=tuple(rows),
        wall_us=int((time.monotonic() - started) * 1e6),
    )
