import { readFileSync, writeFileSync } from "node:fs";

/**
 * A tensor crossing the language boundary: logical shape plus one
 * contiguous float32 buffer in row-major order.
 */
export interface BoundArray {
  shape: readonly number[];
  data: Float32Array;
}

/** Raised before anything is spawned when an input array is unusable. */
export class BoundaryError extends Error {}

/** Raised when bytes on disk do not parse as a CFT1 tensor. */
export class TensorFormatError extends Error {}

const MAGIC = [0x43, 0x46, 0x54, 0x31]; // "CFT1"
const MAX_RANK = 3;

export function elementCount(shape: readonly number[]): number {
  return shape.reduce((acc, d) => acc * d, 1);
}

/**
 * Validate shape, contiguity, and finiteness. The data buffer must hold
 * exactly the row-major element count; a mismatch means the view does
 * not cover the tensor it claims to.
 */
export function validateBound(arr: BoundArray, name: string): void {
  if (!Array.isArray(arr.shape) || arr.shape.length < 1 || arr.shape.length > MAX_RANK) {
    throw new BoundaryError(`${name}: shape must have rank 1..${MAX_RANK}`);
  }
  for (const dim of arr.shape) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new BoundaryError(`${name}: dimensions must be positive integers, got ${dim}`);
    }
  }
  if (!(arr.data instanceof Float32Array)) {
    throw new BoundaryError(`${name}: data must be a Float32Array`);
  }
  const expected = elementCount(arr.shape);
  if (arr.data.length !== expected) {
    throw new BoundaryError(
      `${name}: buffer holds ${arr.data.length} values, shape needs ${expected}`
    );
  }
  for (let i = 0; i < arr.data.length; i++) {
    if (!Number.isFinite(arr.data[i])) {
      throw new BoundaryError(`${name}: non-finite value at index ${i}`);
    }
  }
}

export function encodeTensor(arr: BoundArray, name = "tensor"): Buffer {
  validateBound(arr, name);
  const rank = arr.shape.length;
  const headerLen = 4 + 1 + 4 * rank;
  const buf = Buffer.alloc(headerLen + 4 * arr.data.length);
  for (let i = 0; i < 4; i++) buf[i] = MAGIC[i];
  buf[4] = rank;
  const view = new DataView(buf.buffer, buf.byteOffset, buf.length);
  for (let i = 0; i < rank; i++) {
    view.setUint32(5 + 4 * i, arr.shape[i], true);
  }
  for (let i = 0; i < arr.data.length; i++) {
    view.setFloat32(headerLen + 4 * i, arr.data[i], true);
  }
  return buf;
}

export function decodeTensor(buf: Buffer): BoundArray {
  if (buf.length < 5) {
    throw new TensorFormatError(`file too short for a header: ${buf.length} bytes`);
  }
  for (let i = 0; i < 4; i++) {
    if (buf[i] !== MAGIC[i]) {
      throw new TensorFormatError("bad magic, not a CFT1 tensor");
    }
  }
  const rank = buf[4];
  if (rank < 1 || rank > MAX_RANK) {
    throw new TensorFormatError(`rank byte must be 1..${MAX_RANK}, got ${rank}`);
  }
  const headerLen = 4 + 1 + 4 * rank;
  if (buf.length < headerLen) {
    throw new TensorFormatError("file too short for its dimension list");
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.length);
  const shape: number[] = [];
  for (let i = 0; i < rank; i++) {
    shape.push(view.getUint32(5 + 4 * i, true));
  }
  if (shape.some((d) => d === 0)) {
    throw new TensorFormatError(`zero dimension in shape [${shape.join(", ")}]`);
  }
  const count = elementCount(shape);
  if (buf.length !== headerLen + 4 * count) {
    throw new TensorFormatError(
      `payload is ${buf.length - headerLen} bytes, shape needs ${4 * count}`
    );
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = view.getFloat32(headerLen + 4 * i, true);
    if (!Number.isFinite(data[i])) {
      throw new TensorFormatError(`non-finite value at index ${i}`);
    }
  }
  return { shape, data };
}

export function readTensorFile(path: string): BoundArray {
  return decodeTensor(readFileSync(path));
}

export function writeTensorFile(path: string, arr: BoundArray, name = "tensor"): void {
  writeFileSync(path, encodeTensor(arr, name));
}
