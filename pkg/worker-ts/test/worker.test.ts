import { afterEach, describe, expect, it } from "vitest";
import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { fileURLToPath } from "node:url";
import path from "node:path";

const WORKER = path.join(path.dirname(fileURLToPath(import.meta.url)), "..", "dist", "worker.js");

interface Reply {
  [key: string]: any;
}

class WorkerHandle {
  proc: ChildProcessWithoutNullStreams;
  private buffer = "";
  private waiters: Array<(line: string | null) => void> = [];
  private closed = false;

  constructor() {
    this.proc = spawn("node", [WORKER, "--serve"], { stdio: ["pipe", "pipe", "pipe"] });
    this.proc.stdout.on("data", (chunk: Buffer) => {
      this.buffer += chunk.toString("utf-8");
      let idx;
      while ((idx = this.buffer.indexOf("\n")) >= 0) {
        const line = this.buffer.slice(0, idx);
        this.buffer = this.buffer.slice(idx + 1);
        this.waiters.shift()?.(line);
      }
    });
    this.proc.on("close", () => {
      this.closed = true;
      while (this.waiters.length) this.waiters.shift()?.(null);
    });
  }

  send(msg: unknown): void {
    this.proc.stdin.write(JSON.stringify(msg) + "\n");
  }

  readLine(timeoutMs = 10_000): Promise<string | null> {
    return new Promise((resolve) => {
      if (this.closed) return resolve(null);
      const timer = setTimeout(() => resolve(null), timeoutMs);
      this.waiters.push((line) => {
        clearTimeout(timer);
        resolve(line);
      });
    });
  }

  async roundtrip(msg: unknown, timeoutMs = 10_000): Promise<Reply | null> {
    this.send(msg);
    const line = await this.readLine(timeoutMs);
    return line === null ? null : (JSON.parse(line) as Reply);
  }

  kill(): void {
    this.proc.kill("SIGKILL");
  }
}

let worker: WorkerHandle | null = null;

function start(): WorkerHandle {
  worker = new WorkerHandle();
  return worker;
}

afterEach(() => {
  worker?.kill();
  worker = null;
});

function executeMsg(
  source: string,
  entry: string,
  sheet: Array<{ op: string; inputs: unknown[] }>,
  limits: { wall_ms?: number; mem_mb?: number } = { wall_ms: 2000, mem_mb: 256 },
  taskId = "task-1",
) {
  return {
    proto: "nv/1",
    type: "execute",
    task_id: taskId,
    module: { language_tag: "python", source, entry },
    sheet,
    limits,
  };
}

describe("protocol basics", () => {
  it("answers ping with pong within the liveness budget", async () => {
    const w = start();
    const reply = await w.roundtrip({ proto: "nv/1", type: "ping" }, 2000);
    expect(reply?.type).toBe("pong");
  });

  it("rejects malformed JSON with a protocol-kind error and keeps serving", async () => {
    const w = start();
    w.proc.stdin.write("{not json\n");
    const reply = JSON.parse((await w.readLine())!);
    expect(reply.status).toBe("error");
    expect(reply.extra.kind).toBe("protocol");
    const pong = await w.roundtrip({ proto: "nv/1", type: "ping" });
    expect(pong?.type).toBe("pong");
  });

  it("rejects non-python candidates", async () => {
    const w = start();
    const msg = executeMsg("fn main() {}", "main", [{ op: "main", inputs: [] }]);
    (msg.module as any).language_tag = "rust";
    const reply = await w.roundtrip(msg);
    expect(reply?.status).toBe("error");
    expect(reply?.extra.kind).toBe("protocol");
  });

  it("echoes the task id", async () => {
    const w = start();
    const reply = await w.roundtrip(
      executeMsg("def f(x):\n    return x\n", "f", [{ op: "f", inputs: [1] }], {}, "echo-me"),
    );
    expect(reply?.task_id).toBe("echo-me");
  });
});

describe("candidate execution", () => {
  it("runs the gcd example", async () => {
    const w = start();
    const source = "def gcd(a, b):\n    while b != 0:\n        a, b = b, a % b\n    return abs(a)\n";
    const reply = await w.roundtrip(
      executeMsg(source, "gcd", [
        { op: "gcd", inputs: [3, 7] },
        { op: "gcd", inputs: [10, 15] },
      ]),
    );
    expect(reply?.status).toBe("ok");
    expect(reply?.rows.map((r: Reply) => r.value)).toEqual([1, 5]);
  });

  it("chains row references", async () => {
    const w = start();
    const reply = await w.roundtrip(
      executeMsg("def inc(x):\n    return x + 1\n", "inc", [
        { op: "inc", inputs: [3] },
        { op: "inc", inputs: [{ ref: 1 }] },
        { op: "inc", inputs: [{ ref: 2 }] },
      ]),
    );
    expect(reply?.rows.map((r: Reply) => r.value)).toEqual([4, 5, 6]);
  });

  it("keeps value fidelity across the closed type set", async () => {
    const w = start();
    const echo = "def echo(x):\n    return x\n";
    const values = [42, 0.5, "héllo, wörld", true, [1, [2, 3], "a"], { b: 1, a: [2] }, null];
    for (const v of values) {
      const reply = await w.roundtrip(executeMsg(echo, "echo", [{ op: "echo", inputs: [v] }]));
      expect(reply?.status).toBe("ok");
      expect(reply?.rows[0].value).toEqual(v);
    }
  });

  it("computes float sums with binary64 semantics", async () => {
    const w = start();
    const reply = await w.roundtrip(
      executeMsg("def add(a, b):\n    return a + b\n", "add", [{ op: "add", inputs: [0.1, 0.2] }]),
    );
    expect(reply?.rows[0].value).toBe(0.30000000000000004);
  });

  it("reports in-language exceptions as row errors", async () => {
    const w = start();
    const reply = await w.roundtrip(
      executeMsg("def f(x):\n    raise ValueError('boom %r' % (x,))\n", "f", [{ op: "f", inputs: [7] }]),
    );
    expect(reply?.status).toBe("error");
    expect(reply?.rows[0].status).toBe("error");
    expect(reply?.rows[0].message).toContain("boom");
  });

  it("reports compile failures", async () => {
    const w = start();
    const reply = await w.roundtrip(
      executeMsg("def f(:\n", "f", [{ op: "f", inputs: [1] }]),
    );
    expect(reply?.status).toBe("error");
    expect(reply?.rows[0].message).toContain("compile");
  });

  it("stops a hard loop within twice the wall budget", async () => {
    const w = start();
    const started = Date.now();
    const reply = await w.roundtrip(
      executeMsg("def f(x):\n    while True:\n        pass\n", "f", [{ op: "f", inputs: [1] }], {
        wall_ms: 500,
      }),
    );
    const elapsed = Date.now() - started;
    expect(reply?.status).toBe("timeout");
    expect(elapsed).toBeLessThan(1000);
  });

  it("survives a candidate that kills its process, and reports crash", async () => {
    const w = start();
    const reply = await w.roundtrip(
      executeMsg("def f(x):\n    import os\n    os._exit(9)\n", "f", [{ op: "f", inputs: [1] }]),
    );
    expect(reply?.status).toBe("crash");
    const pong = await w.roundtrip({ proto: "nv/1", type: "ping" });
    expect(pong?.type).toBe("pong");
  });

  it("contains a memory bomb within the mem_mb limit", async () => {
    const w = start();
    const bomb = "def f(x):\n    data = []\n    for i in range(4096):\n        data.append(bytearray(1024 * 1024))\n    return len(data)\n";
    const reply = await w.roundtrip(
      executeMsg(bomb, "f", [{ op: "f", inputs: [1] }], { wall_ms: 5000, mem_mb: 64 }),
      25_000,
    );
    expect(["error", "crash"]).toContain(reply?.status);
  });

  it("captures candidate stdout without corrupting framing", async () => {
    const w = start();
    const noisy =
      "def f(x):\n" +
      "    import sys, os\n" +
      "    print('line noise')\n" +
      "    os.write(1, b'raw fd noise\\n')\n" +
      "    sys.stderr.write('err noise')\n" +
      "    return x\n";
    const reply = await w.roundtrip(executeMsg(noisy, "f", [{ op: "f", inputs: [5] }]));
    expect(reply?.status).toBe("ok");
    expect(reply?.rows[0].value).toBe(5);
    expect(reply?.extra.stdout).toContain("line noise");
    expect(reply?.extra.stderr).toContain("err noise");
  });

  it("rejects unencodable return values as row errors", async () => {
    const w = start();
    const reply = await w.roundtrip(
      executeMsg("def f(x):\n    return float('inf')\n", "f", [{ op: "f", inputs: [1] }]),
    );
    expect(reply?.status).toBe("error");
    expect(reply?.rows[0].message).toContain("non-finite");
    const objReply = await w.roundtrip(
      executeMsg("def f(x):\n    return object()\n", "f", [{ op: "f", inputs: [1] }]),
    );
    expect(objReply?.status).toBe("error");
  });

  it("applies default limits when none are sent", async () => {
    const w = start();
    const msg = executeMsg("def f(x):\n    return x\n", "f", [{ op: "f", inputs: [1] }]);
    delete (msg as any).limits;
    const reply = await w.roundtrip(msg);
    expect(reply?.status).toBe("ok");
    expect(reply?.extra.limits.rlimit_as).toBeGreaterThan(0);
  });

  it("handles sequential tasks one at a time", async () => {
    const w = start();
    const src = "def f(x):\n    return x * 2\n";
    for (let i = 1; i <= 3; i++) {
      const reply = await w.roundtrip(
        executeMsg(src, "f", [{ op: "f", inputs: [i] }], { wall_ms: 2000 }, `seq-${i}`),
      );
      expect(reply?.task_id).toBe(`seq-${i}`);
      expect(reply?.rows[0].value).toBe(i * 2);
    }
  });
});
