import { spawnSync } from "node:child_process";
import { mkdirSync, mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import {
  BoundArray,
  BoundaryError,
  readTensorFile,
  validateBound,
  writeTensorFile,
} from "./tensor.js";

/** The kernel process failed: nonzero exit or unspawnable binary. */
export class BridgeError extends Error {
  constructor(
    message: string,
    public readonly exitCode: number | null = null,
    public readonly stderr = ""
  ) {
    super(message);
  }
}

/** Attention inputs for one refinement call, all rank-2 and same width. */
export interface AttentionInputs {
  q: BoundArray;
  kSelf: BoundArray;
  vSelf: BoundArray;
  kRef: BoundArray;
  vRef: BoundArray;
}

function kernelBin(): string {
  return process.env.CODI_BIN ?? "codi";
}

function runKernel(args: string[]): string {
  const res = spawnSync(kernelBin(), args, { encoding: "utf8" });
  if (res.error) {
    throw new BridgeError(`cannot spawn ${kernelBin()}: ${res.error.message}`);
  }
  if (res.status !== 0) {
    const detail = (res.stderr ?? "").trim();
    throw new BridgeError(
      `${kernelBin()} exited ${res.status}: ${detail}`,
      res.status,
      detail
    );
  }
  return res.stdout;
}

function withScratch<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "codi-bridge-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

function expectRank(arr: BoundArray, rank: number, name: string): void {
  validateBound(arr, name);
  if (arr.shape.length !== rank) {
    throw new BoundaryError(`${name}: expected rank ${rank}, got ${arr.shape.length}`);
  }
}

/**
 * Exact optimal transport plan between two mass vectors under a cost
 * matrix. Contracts mirror the kernel: masses nonnegative, each side
 * summing to 1, cost shaped (a.length, b.length).
 */
export function boundSolveOt(a: BoundArray, b: BoundArray, cost: BoundArray): BoundArray {
  expectRank(a, 1, "a");
  expectRank(b, 1, "b");
  expectRank(cost, 2, "cost");
  if (cost.shape[0] !== a.shape[0] || cost.shape[1] !== b.shape[0]) {
    throw new BoundaryError(
      `cost is ${cost.shape[0]}x${cost.shape[1]}, masses need ${a.shape[0]}x${b.shape[0]}`
    );
  }
  return withScratch((dir) => {
    writeTensorFile(join(dir, "a.cft"), a, "a");
    writeTensorFile(join(dir, "b.cft"), b, "b");
    writeTensorFile(join(dir, "cost.cft"), cost, "cost");
    const out = join(dir, "plan.cft");
    runKernel([
      "ot", "solve",
      "--masses-a", join(dir, "a.cft"),
      "--masses-b", join(dir, "b.cft"),
      "--cost", join(dir, "cost.cft"),
      "--out", out,
    ]);
    return readTensorFile(out);
  });
}

/** Apply a transport plan to reference feature rows. */
export function boundTransportFeatures(
  plan: BoundArray,
  features: BoundArray,
  mode: "barycentric" | "literal" = "barycentric"
): BoundArray {
  expectRank(plan, 2, "plan");
  expectRank(features, 2, "features");
  if (features.shape[0] !== plan.shape[0]) {
    throw new BoundaryError(
      `plan has ${plan.shape[0]} rows, features has ${features.shape[0]}`
    );
  }
  return withScratch((dir) => {
    writeTensorFile(join(dir, "plan.cft"), plan, "plan");
    writeTensorFile(join(dir, "features.cft"), features, "features");
    const out = join(dir, "moved.cft");
    runKernel([
      "ot", "transport",
      "--plan", join(dir, "plan.cft"),
      "--features", join(dir, "features.cft"),
      "--mode", mode,
      "--out", out,
    ]);
    return readTensorFile(out);
  });
}

/** Indices of the top-alpha fraction of saliency scores, ascending. */
export function boundSelectTopAlpha(saliency: BoundArray, alpha: number): number[] {
  expectRank(saliency, 1, "saliency");
  return withScratch((dir) => {
    writeTensorFile(join(dir, "saliency.cft"), saliency, "saliency");
    const stdout = runKernel([
      "refine",
      "--saliency", join(dir, "saliency.cft"),
      "--alpha", String(alpha),
    ]);
    const report = JSON.parse(stdout) as { selected: number[] };
    return report.selected;
  });
}

/**
 * Saliency-filtered cross-image attention. The saliency length must
 * match the reference key rows; alpha picks the retained fraction.
 */
export function boundRefine(
  inputs: AttentionInputs,
  saliency: BoundArray,
  alpha: number,
  literal = false
): BoundArray {
  const parts: [string, BoundArray][] = [
    ["q", inputs.q],
    ["k_self", inputs.kSelf],
    ["v_self", inputs.vSelf],
    ["k_ref", inputs.kRef],
    ["v_ref", inputs.vRef],
  ];
  for (const [name, arr] of parts) {
    expectRank(arr, 2, name);
  }
  expectRank(saliency, 1, "saliency");
  if (inputs.kRef.shape[0] !== saliency.shape[0]) {
    throw new BoundaryError(
      `saliency covers ${saliency.shape[0]} tokens, k_ref has ${inputs.kRef.shape[0]} rows`
    );
  }
  return withScratch((dir) => {
    const bundleDir = join(dir, "bundle");
    mkdirSync(bundleDir);
    for (const [name, arr] of parts) {
      writeTensorFile(join(bundleDir, `${name}.cft`), arr, name);
    }
    writeTensorFile(join(dir, "saliency.cft"), saliency, "saliency");
    const out = join(dir, "refined.cft");
    const args = [
      "refine",
      "--saliency", join(dir, "saliency.cft"),
      "--alpha", String(alpha),
      "--bundle-dir", bundleDir,
      "--out", out,
    ];
    if (literal) args.push("--literal-renorm");
    runKernel(args);
    return readTensorFile(out);
  });
}
