import { describe, expect, it } from "vitest";

import {
  FLOAT_ITERATIONS,
  FLOAT_TEST_ITERATIONS,
  MATRIX_N,
  MATRIX_SEED,
  lcgMatrix,
  matMul,
  runFloat,
  runMatrix,
  runMatrixTestMode,
} from "../src/compute.js";

// Reference digests computed once by a standalone script that re-implements
// the kernels independently (plain arrays, naive i-j-k multiply). Integer
// matrix entries make every dot product exact in float64, so the two routes
// must agree bit for bit; the float digest is pinned for this engine build.
const FLOAT_TEST_DIGEST =
  "83e36d816352f370f4e4c9e3343434248d3029279b5b1e457e93fe67c61a80eb";
const FLOAT_FULL_DIGEST =
  "8c2d278a8cb3a77d02a790b748ad18638d7724276795c00db7fdee02613347d6";
const MATRIX_256_DIGEST =
  "0c55e1d9fc004bd07b4a3f2147925deda89856409845ddeb4d9f0d7df121cf2c";
const MATRIX_8_DIGEST =
  "19aca2acad6b9803d848e12da3a6362698550a52fd7374e873b9ad73cca641d0";

describe("matrix workload", () => {
  it("test mode multiplies the embedded 2x2 operands correctly", () => {
    expect(runMatrixTestMode().product).toEqual([
      [19, 22],
      [43, 50],
    ]);
  });

  it("matches a naive multiply on small seeded operands", () => {
    const n = 8;
    const a = lcgMatrix(n, MATRIX_SEED);
    const b = lcgMatrix(n, MATRIX_SEED + 1);
    const got = matMul(a, b, n);
    for (let i = 0; i < n; i++) {
      for (let j = 0; j < n; j++) {
        let sum = 0;
        for (let k = 0; k < n; k++) {
          sum += a[i * n + k] * b[k * n + j];
        }
        expect(got[i * n + j]).toBe(sum);
      }
    }
  });

  it("produces the pinned digest at small size", () => {
    expect(runMatrix(8, MATRIX_SEED).digest).toBe(MATRIX_8_DIGEST);
  });

  it("produces the pinned digest at the default size, repeatably", () => {
    const first = runMatrix();
    const second = runMatrix();
    expect(first.digest).toBe(MATRIX_256_DIGEST);
    expect(second.digest).toBe(MATRIX_256_DIGEST);
    expect(first.product).toBeUndefined();
  });

  it("default size is the embedded constant", () => {
    expect(MATRIX_N).toBe(256);
  });
});

describe("float workload", () => {
  it("produces the pinned digest at test size, repeatably", () => {
    expect(runFloat(FLOAT_TEST_ITERATIONS).digest).toBe(FLOAT_TEST_DIGEST);
    expect(runFloat(FLOAT_TEST_ITERATIONS).digest).toBe(FLOAT_TEST_DIGEST);
  });

  it("produces the pinned digest at the default iteration count", () => {
    expect(FLOAT_ITERATIONS).toBe(10_000_000);
    expect(runFloat().digest).toBe(FLOAT_FULL_DIGEST);
  });
});

describe("seeded matrix entries", () => {
  it("are deterministic and bounded", () => {
    const a = lcgMatrix(16, MATRIX_SEED);
    const b = lcgMatrix(16, MATRIX_SEED);
    expect(Array.from(a)).toEqual(Array.from(b));
    for (const value of a) {
      expect(Number.isInteger(value)).toBe(true);
      expect(value).toBeGreaterThanOrEqual(0);
      expect(value).toBeLessThan(100);
    }
  });

  it("differ across seeds", () => {
    const a = Array.from(lcgMatrix(16, MATRIX_SEED));
    const b = Array.from(lcgMatrix(16, MATRIX_SEED + 1));
    expect(a).not.toEqual(b);
  });
});
