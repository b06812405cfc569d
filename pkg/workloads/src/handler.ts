import { randomUUID } from "node:crypto";
import { performance } from "node:perf_hooks";

import {
  PROBE_LOOP_ID,
  workloadRequestSchema,
  type WorkloadResponse,
} from "./contract.js";
import {
  FLOAT_TEST_ITERATIONS,
  runFloat,
  runMatrix,
  runMatrixTestMode,
} from "./compute.js";

export type WorkloadName = "float" | "matrix";

// Process-lifetime identity and the one-shot cold signal. FaaS platforms
// serve at most one request at a time per instance, so plain module state
// is sufficient — no locking.
const instanceId = `wl-${randomUUID()}`;
let servedMeasuredRequest = false;

/**
 * Validate a request body and execute the workload.
 *
 * The first measured request of the process reports cold=true; probes
 * (loop_id "probe") are reachability checks and leave the cold signal
 * untouched. Duration is measured around the compute section only, so it
 * excludes parsing and serialization overhead.
 *
 * Throws ZodError for bodies that do not match the request contract.
 */
export function handleRequest(
  workload: WorkloadName,
  body: unknown,
  testMode = false,
): WorkloadResponse {
  const request = workloadRequestSchema.parse(body);
  const cold = !servedMeasuredRequest;
  if (request.loop_id !== PROBE_LOOP_ID) {
    servedMeasuredRequest = true;
  }

  const startedAt = performance.now();
  const computed =
    workload === "float"
      ? runFloat(testMode ? FLOAT_TEST_ITERATIONS : undefined)
      : testMode
        ? runMatrixTestMode()
        : runMatrix();
  const handlerDurationMs = performance.now() - startedAt;

  const response: WorkloadResponse = {
    instance_id: instanceId,
    cold,
    handler_duration_ms: handlerDurationMs,
    workload,
    result_digest: computed.digest,
  };
  if (computed.product !== undefined) {
    response.result = computed.product;
  }
  return response;
}
