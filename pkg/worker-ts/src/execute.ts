/**
 * One task = one fresh resource-limited python3 child running the embedded
 * runner. Two timeout layers: the child's own per-row SIGALRM watchdog, and
 * this process's outer kill for candidates that starve the in-child alarm
 * (C-level spins). A child that dies without producing a result line is a
 * crash.
 */

import { spawn } from "node:child_process";
import { PY_RUNNER } from "./pyrunner.js";
import {
  DEFAULT_MEM_MB,
  DEFAULT_WALL_MS,
  type ExecuteRequest,
  type ExecuteResponse,
  type RowResult,
  PROTO,
} from "./types.js";

const PYTHON = process.env.NV_WORKER_PYTHON ?? "python3";

interface RunnerResult {
  status: string;
  rows: Array<{ status: string; value?: unknown; message?: string; wall_us: number }>;
  stdout: string;
  stderr: string;
  limits: Record<string, unknown>;
}

export function executeTask(req: ExecuteRequest): Promise<ExecuteResponse> {
  const wallMs = req.limits?.wall_ms ?? DEFAULT_WALL_MS;
  const memMb = req.limits?.mem_mb ?? DEFAULT_MEM_MB;
  const nRows = Math.max(1, req.sheet.length);
  // fire before the arena's outer kill (2 * wall_ms * rows) with margin
  const watchdogMs = Math.max(300, Math.floor(wallMs * nRows * 1.75));

  const task = {
    source: req.module.source,
    entry: req.module.entry,
    sheet: req.sheet,
    wall_ms: wallMs,
    mem_mb: memMb,
  };

  return new Promise((resolve) => {
    const started = process.hrtime.bigint();
    const child = spawn(PYTHON, ["-c", PY_RUNNER], {
      stdio: ["pipe", "pipe", "ignore"],
    });

    let buffer = "";
    let settled = false;
    let timedOut = false;

    const wallUs = () => Number((process.hrtime.bigint() - started) / 1000n);

    const settle = (status: ExecuteResponse["status"], rows: RowResult[], extra?: Record<string, unknown>) => {
      if (settled) return;
      settled = true;
      clearTimeout(watchdog);
      resolve({
        proto: PROTO,
        type: "result",
        task_id: req.task_id,
        status,
        rows,
        wall_us: wallUs(),
        ...(extra && Object.keys(extra).length > 0 ? { extra } : {}),
      });
    };

    const watchdog = setTimeout(() => {
      timedOut = true;
      child.kill("SIGKILL");
    }, watchdogMs);

    child.on("error", () => {
      settle("crash", [], { kind: "spawn" });
    });

    child.stdout.on("data", (chunk: Buffer) => {
      buffer += chunk.toString("utf-8");
      const newline = buffer.indexOf("\n");
      if (newline < 0) return;
      const line = buffer.slice(0, newline);
      child.kill("SIGKILL");
      let result: RunnerResult;
      try {
        result = JSON.parse(line) as RunnerResult;
      } catch {
        settle("crash", [], { kind: "bad-runner-output" });
        return;
      }
      const rows: RowResult[] = result.rows.map((r) => ({
        status: (["ok", "error", "timeout", "crash"].includes(r.status) ? r.status : "error") as RowResult["status"],
        ...(r.status === "ok" ? { value: r.value ?? null } : {}),
        ...(r.message ? { message: r.message } : {}),
        wall_us: r.wall_us ?? 0,
      }));
      const status = (["ok", "error", "timeout", "crash"].includes(result.status)
        ? result.status
        : "error") as ExecuteResponse["status"];
      const extra: Record<string, unknown> = { limits: result.limits ?? {} };
      if (result.stdout) extra.stdout = result.stdout;
      if (result.stderr) extra.stderr = result.stderr;
      settle(status, rows, extra);
    });

    child.on("close", () => {
      if (settled) return;
      if (timedOut) {
        settle("timeout", [
          { status: "timeout", message: `outer watchdog after ${watchdogMs} ms`, wall_us: wallUs() },
        ]);
      } else {
        settle("crash", [], { kind: "child-exit" });
      }
    });

    child.stdin.on("error", () => {
      /* child died before reading the task; close handler classifies it */
    });
    child.stdin.write(JSON.stringify(task));
    child.stdin.end();
  });
}
