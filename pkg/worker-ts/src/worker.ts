/**
 * nv/1 execution worker: JSON lines on stdin/stdout, one task in flight.
 *
 * Launch: node dist/worker.js --serve
 *
 * Replies to {"proto":"nv/1","type":"ping"} with a pong; executes
 * "execute" requests for Python candidates via a resource-limited child
 * (see execute.ts). Candidate faults never take the serve loop down, and a
 * malformed request gets an error response of kind "protocol" instead of a
 * crash. Worker diagnostics go to stderr only.
 */

import { createInterface } from "node:readline";
import { executeTask } from "./execute.js";
import { PROTO, isRef, type ExecuteRequest, type ExecuteResponse } from "./types.js";

function protocolError(taskId: string, message: string): ExecuteResponse {
  return {
    proto: PROTO,
    type: "result",
    task_id: taskId,
    status: "error",
    rows: [{ status: "error", message, wall_us: 0 }],
    wall_us: 0,
    extra: { kind: "protocol" },
  };
}

function validate(msg: Record<string, unknown>): string | null {
  const m = msg as unknown as ExecuteRequest;
  if (typeof m.task_id !== "string" || m.task_id === "") return "missing task_id";
  if (typeof m.module !== "object" || m.module === null) return "missing module";
  if (typeof m.module.source !== "string" || typeof m.module.entry !== "string") {
    return "module needs source and entry";
  }
  if (m.module.language_tag !== "python") {
    return `unsupported language_tag ${JSON.stringify(m.module.language_tag)}`;
  }
  if (!Array.isArray(m.sheet) || m.sheet.length === 0) return "sheet must be a non-empty array";
  for (let i = 0; i < m.sheet.length; i++) {
    const row = m.sheet[i];
    if (typeof row !== "object" || row === null || !Array.isArray((row as { inputs?: unknown }).inputs)) {
      return `sheet row ${i + 1} needs an inputs array`;
    }
    for (const input of (row as { inputs: unknown[] }).inputs) {
      if (isRef(input) && !(input.ref >= 1 && input.ref <= i)) {
        return `sheet row ${i + 1} references row ${input.ref}, which is not an earlier row`;
      }
    }
  }
  if (m.limits !== undefined) {
    if (typeof m.limits !== "object" || m.limits === null) return "limits must be an object";
    const wall = (m.limits as { wall_ms?: unknown }).wall_ms;
    if (wall !== undefined && (typeof wall !== "number" || wall < 1)) return "wall_ms must be >= 1";
  }
  return null;
}

export async function serve(): Promise<void> {
  const rl = createInterface({ input: process.stdin, terminal: false });
  const emit = (msg: unknown) => process.stdout.write(JSON.stringify(msg) + "\n");

  // strictly one task at a time: chain line handling on a queue
  let pending: Promise<void> = Promise.resolve();

  const handle = async (line: string): Promise<void> => {
    if (!line.trim()) return;
    let msg: Record<string, unknown>;
    try {
      msg = JSON.parse(line) as Record<string, unknown>;
    } catch {
      emit(protocolError("", "malformed JSON"));
      return;
    }
    if (typeof msg !== "object" || msg === null) {
      emit(protocolError("", "message is not an object"));
      return;
    }
    if (msg.type === "ping") {
      emit({ proto: PROTO, type: "pong" });
      return;
    }
    if (msg.proto !== PROTO) {
      emit(protocolError(String(msg.task_id ?? ""), `missing or wrong proto field`));
      return;
    }
    if (msg.type !== "execute") {
      emit(protocolError(String(msg.task_id ?? ""), `unknown message type ${JSON.stringify(msg.type)}`));
      return;
    }
    const problem = validate(msg);
    if (problem !== null) {
      emit(protocolError(String(msg.task_id ?? ""), problem));
      return;
    }
    try {
      emit(await executeTask(msg as unknown as ExecuteRequest));
    } catch (err) {
      // candidate faults are handled inside executeTask; this is a worker bug
      process.stderr.write(`worker internal error: ${String(err)}\n`);
      emit(protocolError(String(msg.task_id ?? ""), "internal worker error"));
    }
  };

  rl.on("line", (line) => {
    pending = pending.then(() => handle(line));
  });

  await new Promise<void>((resolve) => rl.on("close", resolve));
  await pending;
}

if (process.argv.includes("--serve")) {
  serve().catch((err) => {
    process.stderr.write(`fatal: ${String(err)}\n`);
    process.exit(1);
  });
} else if (import.meta.url === `file://${process.argv[1]}`) {
  process.stderr.write("usage: node worker.js --serve\n");
  process.exit(2);
}
