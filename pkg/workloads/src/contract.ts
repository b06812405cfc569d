import { z } from "zod";

/**
 * Request body POSTed by the measurement harness. `call_index` is 1 for the
 * head call of a pair or burst (expected cold) and 2 for follow-up calls.
 */
export const workloadRequestSchema = z.object({
  run_id: z.string().min(1),
  loop_id: z.string().min(1),
  call_index: z.number().int().min(1),
});

export type WorkloadRequest = z.infer<typeof workloadRequestSchema>;

/**
 * Response contract parsed by the harness. `instance_id` is constant for the
 * lifetime of one handler process; `cold` is true exactly once per process —
 * on the first measured request it serves. `result_digest` is stable across
 * calls because all workload inputs are embedded constants. `result` carries
 * the raw product only in test mode (tiny matrices), for contract checks.
 */
export const workloadResponseSchema = z.object({
  instance_id: z.string().min(1),
  cold: z.boolean(),
  handler_duration_ms: z.number().nonnegative(),
  workload: z.enum(["float", "matrix"]),
  result_digest: z.string().regex(/^[0-9a-f]{64}$/),
  result: z.array(z.array(z.number())).optional(),
});

export type WorkloadResponse = z.infer<typeof workloadResponseSchema>;

/**
 * Reachability probes use this loop_id. A probe is answered like any other
 * request but does not consume the one-shot cold signal, so a probed-then-
 * measured fresh process still reports its first measured call as cold.
 */
export const PROBE_LOOP_ID = "probe";
