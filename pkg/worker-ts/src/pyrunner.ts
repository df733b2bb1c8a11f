/**
 * Embedded Python runner: executes one task inside a fresh, resource-limited
 * python3 child. The child owns the in-language side of the sandbox: rlimits
 * applied before candidate code runs, per-row SIGALRM wall timeout, candidate
 * stdout/stderr captured to buffers (fd 1 is rerouted so even direct writes
 * cannot corrupt protocol framing), and results written to a duplicated fd.
 *
 * The task arrives as one JSON object on stdin:
 *   {source, entry, sheet: [{op, inputs}], wall_ms, mem_mb}
 * and exactly one JSON result line comes back:
 *   {status, rows: [...], stdout, stderr, limits}
 */
export const PY_RUNNER = `
import io, json, math, os, resource, signal, sys, time

RESULT_FD = os.dup(1)
_sink = os.open(os.devnull, os.O_WRONLY)
os.dup2(_sink, 1)
sys.stdout = io.StringIO()
sys.stderr = io.StringIO()

task = json.loads(sys.stdin.buffer.read().decode("utf-8"))
wall_ms = int(task.get("wall_ms") or 2000)
mem_mb = int(task.get("mem_mb") or 256)
n_rows = max(1, len(task["sheet"]))

applied = {}
try:
    resource.setrlimit(resource.RLIMIT_CORE, (0, 0))
except (ValueError, OSError):
    pass
try:
    floor = resource.getrusage(resource.RUSAGE_SELF).ru_maxrss * 1024 + 32 * 1024 * 1024
    limit = max(mem_mb * 1024 * 1024, floor)
    resource.setrlimit(resource.RLIMIT_AS, (limit, limit))
    applied["rlimit_as"] = limit
except (ValueError, OSError) as exc:
    applied["warning"] = "rlimit_as: " + str(exc)
try:
    cpu_s = wall_ms * n_rows * 2 // 1000 + 2
    resource.setrlimit(resource.RLIMIT_CPU, (cpu_s, cpu_s + 1))
    applied["rlimit_cpu"] = cpu_s
except (ValueError, OSError) as exc:
    applied["warning"] = "rlimit_cpu: " + str(exc)


class _RowTimeout(Exception):
    pass


def _alarm(signum, frame):
    raise _RowTimeout()


signal.signal(signal.SIGALRM, _alarm)


def _encode(v):
    if v is None or isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, float):
        if not math.isfinite(v):
            raise ValueError("non-finite float is not encodable")
        return v
    if isinstance(v, (list, tuple)):
        return [_encode(x) for x in v]
    if isinstance(v, dict):
        out = {}
        for k, val in v.items():
            if not isinstance(k, str):
                raise ValueError("map key %r is not a string" % (k,))
            out[k] = _encode(val)
        return out
    raise ValueError("value of type %s is outside the closed type set" % type(v).__name__)


def finish(status, rows):
    result = {
        "status": status,
        "rows": rows,
        "stdout": sys.stdout.getvalue()[:4096],
        "stderr": sys.stderr.getvalue()[:4096],
        "limits": applied,
    }
    os.write(RESULT_FD, (json.dumps(result) + "\\n").encode("utf-8"))
    os._exit(0)


def _us(t0):
    return int((time.monotonic() - t0) * 1e6)


ns = {}
t0 = time.monotonic()
signal.setitimer(signal.ITIMER_REAL, wall_ms / 1000.0)
try:
    exec(compile(task["source"], "<candidate>", "exec"), ns)
    fn = ns.get(task["entry"])
    if not callable(fn):
        raise NameError("entry %r not found or not callable" % task["entry"])
except _RowTimeout:
    finish("timeout", [{"status": "timeout", "message": "module load exceeded %d ms" % wall_ms, "wall_us": _us(t0)}])
except SystemExit as exc:
    finish("crash", [{"status": "crash", "message": "candidate exited (%r)" % (exc.code,), "wall_us": _us(t0)}])
except BaseException as exc:
    finish("error", [{"status": "error", "message": "compile: %s" % (exc,), "wall_us": _us(t0)}])
finally:
    signal.setitimer(signal.ITIMER_REAL, 0)

rows = []
outs = {}
for i, row in enumerate(task["sheet"], start=1):
    args = []
    for x in row["inputs"]:
        if isinstance(x, dict) and set(x) == {"ref"}:
            args.append(outs[x["ref"]])
        else:
            args.append(x)
    t0 = time.monotonic()
    signal.setitimer(signal.ITIMER_REAL, wall_ms / 1000.0)
    try:
        value = _encode(fn(*args))
    except _RowTimeout:
        rows.append({"status": "timeout", "message": "exceeded %d ms" % wall_ms, "wall_us": _us(t0)})
        finish("timeout", rows)
    except SystemExit as exc:
        rows.append({"status": "crash", "message": "candidate exited (%r)" % (exc.code,), "wall_us": _us(t0)})
        finish("crash", rows)
    except MemoryError:
        rows.append({"status": "error", "message": "memory limit exceeded", "wall_us": _us(t0)})
        finish("error", rows)
    except BaseException as exc:
        rows.append({"status": "error", "message": "%s: %s" % (type(exc).__name__, exc), "wall_us": _us(t0)})
        finish("error", rows)
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
    rows.append({"status": "ok", "value": value, "wall_us": _us(t0)})
    outs[i] = value

finish("ok", rows)
`;
