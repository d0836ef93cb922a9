import { describe, expect, it } from "vitest";

import {
  BoundaryError,
  TensorFormatError,
  decodeTensor,
  encodeTensor,
  validateBound,
} from "../src/tensor.js";

describe("CFT1 codec", () => {
  it("pins the byte layout", () => {
    const buf = encodeTensor({ shape: [2, 2], data: Float32Array.of(1, 2, 3, 4) });
    expect(buf.length).toBe(4 + 1 + 8 + 16);
    expect(buf.subarray(0, 4).toString("ascii")).toBe("CFT1");
    expect(buf[4]).toBe(2);
    expect(buf.readUInt32LE(5)).toBe(2);
    expect(buf.readUInt32LE(9)).toBe(2);
    expect(buf.readFloatLE(13)).toBe(1);
    expect(buf.readFloatLE(25)).toBe(4);
  });

  it("round-trips values and bytes exactly", () => {
    const data = Float32Array.of(0.1, -0, 3.5e-20, 123456.78, -9.25, 2 ** -126);
    const arr = { shape: [2, 3, 1], data };
    const buf = encodeTensor(arr);
    const back = decodeTensor(buf);
    expect(back.shape).toEqual([2, 3, 1]);
    expect(Buffer.compare(encodeTensor(back), buf)).toBe(0);
    expect(Array.from(back.data)).toEqual(Array.from(data));
  });

  it("rejects malformed headers and payloads", () => {
    const good = encodeTensor({ shape: [3], data: Float32Array.of(1, 2, 3) });

    const badMagic = Buffer.from(good);
    badMagic[0] = 0x58;
    expect(() => decodeTensor(badMagic)).toThrow(TensorFormatError);

    const badRank = Buffer.from(good);
    badRank[4] = 7;
    expect(() => decodeTensor(badRank)).toThrow(TensorFormatError);

    expect(() => decodeTensor(good.subarray(0, good.length - 4))).toThrow(
      TensorFormatError
    );
    expect(() => decodeTensor(Buffer.concat([good, Buffer.alloc(1)]))).toThrow(
      TensorFormatError
    );
    expect(() => decodeTensor(Buffer.alloc(3))).toThrow(TensorFormatError);
  });

  it("rejects non-finite payloads in both directions", () => {
    expect(() =>
      encodeTensor({ shape: [2], data: Float32Array.of(1, Infinity) })
    ).toThrow(BoundaryError);
    const good = encodeTensor({ shape: [1], data: Float32Array.of(1) });
    const nan = Buffer.from(good);
    nan.writeFloatLE(NaN, 9);
    expect(() => decodeTensor(nan)).toThrow(TensorFormatError);
  });

  it("validates shape against buffer length", () => {
    expect(() =>
      validateBound({ shape: [2, 3], data: new Float32Array(5) }, "x")
    ).toThrow(BoundaryError);
    expect(() =>
      validateBound({ shape: [0], data: new Float32Array(0) }, "x")
    ).toThrow(BoundaryError);
    expect(() =>
      validateBound({ shape: [1, 1, 1, 1], data: new Float32Array(1) }, "x")
    ).toThrow(BoundaryError);
    expect(() =>
      validateBound({ shape: [2], data: [1, 2] as unknown as Float32Array }, "x")
    ).toThrow(BoundaryError);
  });
});
