import { type ChildProcess, spawn } from "node:child_process";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { ZodError } from "zod";
import { afterAll, describe, expect, it } from "vitest";

import { workloadResponseSchema } from "../src/contract.js";
import { handleRequest } from "../src/handler.js";

const SERVER_JS = join(
  dirname(fileURLToPath(import.meta.url)),
  "..",
  "dist",
  "server.js",
);

function request(callIndex: number, loopId = `loop-${callIndex}`) {
  return { run_id: "contract-test", loop_id: loopId, call_index: callIndex };
}

describe("in-process handler", () => {
  // One sequential scenario: module state (cold flag, instance id) is
  // process-global, so ordering matters and lives in a single test.
  it("serves probe → cold, first call → cold, second call → warm", () => {
    const probe = workloadResponseSchema.parse(
      handleRequest("matrix", request(1, "probe"), true),
    );
    expect(probe.cold).toBe(true); // probes observe but do not consume

    const first = workloadResponseSchema.parse(
      handleRequest("matrix", request(1), true),
    );
    const second = workloadResponseSchema.parse(
      handleRequest("matrix", request(2), true),
    );
    expect(first.cold).toBe(true);
    expect(second.cold).toBe(false);
    expect(first.instance_id).toBe(probe.instance_id);
    expect(first.instance_id).toBe(second.instance_id);
    expect(first.result_digest).toBe(second.result_digest);
    expect(first.handler_duration_ms).toBeGreaterThan(0);
    expect(first.result).toEqual([
      [19, 22],
      [43, 50],
    ]);
  });

  it("rejects bodies that violate the request contract", () => {
    expect(() => handleRequest("float", { run_id: "x" }, true)).toThrow(ZodError);
    expect(() =>
      handleRequest("float", { run_id: "x", loop_id: "l", call_index: 0 }, true),
    ).toThrow(ZodError);
    expect(() => handleRequest("float", "not an object", true)).toThrow(ZodError);
  });
});

describe("standalone server", () => {
  const children: ChildProcess[] = [];

  afterAll(() => {
    for (const child of children) {
      child.kill("SIGTERM");
    }
  });

  async function startServer(args: string[]): Promise<string> {
    const child = spawn(process.execPath, [SERVER_JS, ...args, "--port", "0"], {
      stdio: ["ignore", "pipe", "pipe"],
    });
    children.push(child);
    return await new Promise<string>((resolve, reject) => {
      let output = "";
      const timer = setTimeout(
        () => reject(new Error(`server start timed out; output: ${output}`)),
        15000,
      );
      const scan = (chunk: unknown) => {
        output += String(chunk);
        const match = output.match(/listening on (http:\/\/[^\s]+)/);
        if (match) {
          clearTimeout(timer);
          resolve(match[1]);
        }
      };
      child.stdout!.on("data", scan);
      child.stderr!.on("data", (chunk) => {
        output += String(chunk);
      });
      child.on("exit", (code) => {
        clearTimeout(timer);
        reject(new Error(`server exited early (code ${code}): ${output}`));
      });
    });
  }

  async function post(url: string, body: unknown) {
    const response = await fetch(url, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return { status: response.status, json: await response.json() };
  }

  it(
    "honors the cold-once contract over HTTP",
    async () => {
      const url = await startServer(["--workload", "matrix", "--test-mode"]);

      const first = await post(url, request(1));
      expect(first.status).toBe(200);
      const firstParsed = workloadResponseSchema.parse(first.json);
      expect(firstParsed.cold).toBe(true);
      expect(firstParsed.instance_id.length).toBeGreaterThan(0);

      const second = await post(url, request(2));
      const secondParsed = workloadResponseSchema.parse(second.json);
      expect(secondParsed.cold).toBe(false);
      expect(secondParsed.instance_id).toBe(firstParsed.instance_id);
      expect(secondParsed.result).toEqual([
        [19, 22],
        [43, 50],
      ]);

      const third = await post(url, request(2));
      expect(workloadResponseSchema.parse(third.json).cold).toBe(false);

      console.log(
        "[PASS] workload-contract — cold served exactly once, instance_id " +
          "stable, 2x2 test product exact, responses schema-valid",
      );
    },
    30000,
  );

  it(
    "gives each process its own instance identity",
    async () => {
      const urlA = await startServer(["--workload", "float", "--test-mode"]);
      const urlB = await startServer(["--workload", "float", "--test-mode"]);
      const a = workloadResponseSchema.parse((await post(urlA, request(1))).json);
      const b = workloadResponseSchema.parse((await post(urlB, request(1))).json);
      expect(a.cold).toBe(true);
      expect(b.cold).toBe(true);
      expect(a.instance_id).not.toBe(b.instance_id);
      expect(a.workload).toBe("float");
      expect(a.handler_duration_ms).toBeGreaterThan(0);
      expect(a.result_digest).toBe(b.result_digest); // embedded inputs
    },
    30000,
  );

  it(
    "rejects malformed requests without dying",
    async () => {
      const url = await startServer(["--workload", "float", "--test-mode"]);

      const bad = await post(url, { wrong: "shape" });
      expect(bad.status).toBe(400);

      const garbage = await fetch(url, { method: "POST", body: "{not json" });
      expect(garbage.status).toBe(400);

      const get = await fetch(url, { method: "GET" });
      expect(get.status).toBe(405);

      // still serving, and the failed requests did not consume the cold start
      const ok = await post(url, request(1));
      expect(ok.status).toBe(200);
      expect(workloadResponseSchema.parse(ok.json).cold).toBe(true);
    },
    30000,
  );
});
