import { createHash } from "node:crypto";

/**
 * Workload kernels with all inputs embedded as constants, so results — and
 * therefore digests — are identical across invocations and instances.
 * Default sizes are tuned to land near ~100 ms on a small FaaS memory tier;
 * test sizes keep contract tests fast.
 */

export const FLOAT_ITERATIONS = 10_000_000;
export const FLOAT_TEST_ITERATIONS = 100_000;

export const MATRIX_N = 256;
export const MATRIX_SEED = 20221212;

/** Tiny fixed operands for test mode; product is [[19, 22], [43, 50]]. */
export const TEST_MATRIX_A = [
  [1, 2],
  [3, 4],
];
export const TEST_MATRIX_B = [
  [5, 6],
  [7, 8],
];

export interface ComputeOutput {
  /** sha256 hex over a canonical rendering of the computed result. */
  digest: string;
  /** Raw product matrix, populated only for tiny test-mode operands. */
  product?: number[][];
}

function sha256(text: string): string {
  return createHash("sha256").update(text).digest("hex");
}

/**
 * Transcendental-chain float workload: accumulate sqrt(|sin(cos(i))|) over a
 * fixed iteration count. The digest is taken over the sum rounded to 1e-6,
 * which is stable for a fixed JS engine build.
 */
export function runFloat(iterations: number = FLOAT_ITERATIONS): ComputeOutput {
  let acc = 0;
  for (let i = 0; i < iterations; i++) {
    acc += Math.sqrt(Math.abs(Math.sin(Math.cos(i))));
  }
  return { digest: sha256(`float:${iterations}:${acc.toFixed(6)}`) };
}

/**
 * Deterministic matrix entries in [0, 100) from a Park–Miller linear
 * congruential generator. Small integer entries keep every dot product exact
 * in float64, so digests are engine-independent.
 */
export function lcgMatrix(n: number, seed: number): Float64Array {
  let state = seed % 2147483647;
  if (state <= 0) {
    state += 2147483646;
  }
  const out = new Float64Array(n * n);
  for (let i = 0; i < out.length; i++) {
    state = (state * 16807) % 2147483647;
    out[i] = state % 100;
  }
  return out;
}

/** Flat row-major n×n multiply, plain i-k-j loop. */
export function matMul(a: Float64Array, b: Float64Array, n: number): Float64Array {
  const c = new Float64Array(n * n);
  for (let i = 0; i < n; i++) {
    for (let k = 0; k < n; k++) {
      const aik = a[i * n + k];
      const rowB = k * n;
      const rowC = i * n;
      for (let j = 0; j < n; j++) {
        c[rowC + j] += aik * b[rowB + j];
      }
    }
  }
  return c;
}

function digestMatrix(values: ArrayLike<number>, n: number): string {
  const parts = new Array<string>(values.length);
  for (let i = 0; i < values.length; i++) {
    parts[i] = String(values[i]);
  }
  return sha256(`matrix:${n}:${parts.join(",")}`);
}

/** Matrix workload over the embedded seeded operands. */
export function runMatrix(n: number = MATRIX_N, seed: number = MATRIX_SEED): ComputeOutput {
  const product = matMul(lcgMatrix(n, seed), lcgMatrix(n, seed + 1), n);
  return { digest: digestMatrix(product, n) };
}

/** Matrix workload over the fixed 2×2 test operands, product included. */
export function runMatrixTestMode(): ComputeOutput {
  const n = TEST_MATRIX_A.length;
  const a = Float64Array.from(TEST_MATRIX_A.flat());
  const b = Float64Array.from(TEST_MATRIX_B.flat());
  const flat = matMul(a, b, n);
  const product: number[][] = [];
  for (let i = 0; i < n; i++) {
    product.push(Array.from(flat.subarray(i * n, (i + 1) * n)));
  }
  return { digest: digestMatrix(flat, n), product };
}
