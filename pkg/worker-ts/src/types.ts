/** nv/1 wire protocol shapes (JSON lines over stdin/stdout). */

export const PROTO = "nv/1";

export type Status = "ok" | "error" | "timeout" | "crash";

export interface ExecuteRequest {
  proto: string;
  type: "execute";
  task_id: string;
  module: { language_tag: string; source: string; entry: string };
  sheet: Array<{ op: string; inputs: unknown[] }>;
  limits?: { wall_ms?: number; mem_mb?: number };
}

export interface RowResult {
  status: Status;
  value?: unknown;
  message?: string;
  wall_us: number;
}

export interface ExecuteResponse {
  proto: string;
  type: "result";
  task_id: string;
  status: Status;
  rows: RowResult[];
  wall_us: number;
  extra?: Record<string, unknown>;
}

export const DEFAULT_WALL_MS = 2000;
export const DEFAULT_MEM_MB = 256;

export function isRef(x: unknown): x is { ref: number } {
  return (
    typeof x === "object" &&
    x !== null &&
    !Array.isArray(x) &&
    Object.keys(x).length === 1 &&
    typeof (x as { ref?: unknown }).ref === "number"
  );
}
