import { createServer, type IncomingMessage, type ServerResponse } from "node:http";
import type { AddressInfo } from "node:net";
import { parseArgs } from "node:util";
import { ZodError } from "zod";

import { handleRequest, type WorkloadName } from "./handler.js";

const MAX_BODY_BYTES = 1024 * 1024;

function usageError(message: string): never {
  console.error(message);
  console.error(
    "usage: server --workload float|matrix [--port N] [--host ADDR] [--test-mode]",
  );
  process.exit(2);
}

function parseCli(argv: string[]): {
  workload: WorkloadName;
  port: number;
  host: string;
  testMode: boolean;
} {
  let values;
  try {
    ({ values } = parseArgs({
      args: argv,
      options: {
        workload: { type: "string" },
        port: { type: "string", default: "8080" },
        host: { type: "string", default: "127.0.0.1" },
        "test-mode": { type: "boolean", default: false },
      },
    }));
  } catch (error) {
    usageError(String(error));
  }
  const workload = values.workload;
  if (workload !== "float" && workload !== "matrix") {
    usageError(`--workload must be "float" or "matrix", got ${JSON.stringify(workload)}`);
  }
  const port = Number(values.port);
  if (!Number.isInteger(port) || port < 0 || port > 65535) {
    usageError(`--port must be an integer in [0, 65535], got ${JSON.stringify(values.port)}`);
  }
  return { workload, port, host: values.host, testMode: values["test-mode"] };
}

async function readBody(request: IncomingMessage): Promise<string> {
  const chunks: Buffer[] = [];
  let total = 0;
  for await (const chunk of request) {
    total += (chunk as Buffer).length;
    if (total > MAX_BODY_BYTES) {
      throw new Error(`request body exceeds ${MAX_BODY_BYTES} bytes`);
    }
    chunks.push(chunk as Buffer);
  }
  return Buffer.concat(chunks).toString("utf-8");
}

function sendJson(response: ServerResponse, status: number, payload: unknown): void {
  const raw = JSON.stringify(payload);
  response.writeHead(status, {
    "Content-Type": "application/json",
    "Content-Length": Buffer.byteLength(raw),
  });
  response.end(raw);
}

export function main(argv: string[] = process.argv.slice(2)): void {
  const { workload, port, host, testMode } = parseCli(argv);

  const server = createServer(async (request, response) => {
    if (request.method !== "POST") {
      sendJson(response, 405, { error: "only POST is supported" });
      return;
    }
    let body: unknown;
    try {
      body = JSON.parse(await readBody(request));
    } catch (error) {
      sendJson(response, 400, { error: `unparseable request body: ${String(error)}` });
      return;
    }
    try {
      sendJson(response, 200, handleRequest(workload, body, testMode));
    } catch (error) {
      if (error instanceof ZodError) {
        sendJson(response, 400, { error: `invalid request: ${error.message}` });
      } else {
        sendJson(response, 500, { error: String(error) });
      }
    }
  });

  server.listen(port, host, () => {
    const bound = (server.address() as AddressInfo).port;
    console.log(`workload=${workload} test_mode=${testMode}`);
    console.log(`listening on http://${host}:${bound}`);
  });

  const shutdown = () => {
    server.close(() => process.exit(0));
  };
  process.on("SIGINT", shutdown);
  process.on("SIGTERM", shutdown);
}

main();
