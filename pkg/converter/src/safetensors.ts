/**
 * Minimal safetensors reader/writer (the checkpoint interchange format).
 *
 * Layout: u64 LE header length, JSON header mapping tensor name to
 * { dtype, shape, data_offsets: [start, end] } with offsets relative to
 * the byte after the header, plus an optional "__metadata__" object of
 * string values. Only F32 and F64 tensors are handled; that covers every
 * tensor a trained compressor checkpoint contains.
 */

export type Dtype = "F32" | "F64";

export interface Tensor {
  dtype: Dtype;
  shape: number[];
  /** Always float64 in memory; dtype records the stored precision. */
  data: Float64Array;
}

export interface Checkpoint {
  tensors: Map<string, Tensor>;
  metadata: Record<string, string>;
}

export class BadCheckpointError extends Error {}

const BYTES: Record<Dtype, number> = { F32: 4, F64: 8 };

export function numel(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function readSafetensors(buf: Buffer): Checkpoint {
  if (buf.length < 8) {
    throw new BadCheckpointError("file too small for a safetensors header");
  }
  const headerLen = Number(buf.readBigUInt64LE(0));
  if (8 + headerLen > buf.length) {
    throw new BadCheckpointError("header extends past end of file");
  }
  let header: Record<string, unknown>;
  try {
    header = JSON.parse(buf.subarray(8, 8 + headerLen).toString("utf-8"));
  } catch (err) {
    throw new BadCheckpointError(`header is not valid JSON: ${err}`);
  }
  const dataStart = 8 + headerLen;
  const tensors = new Map<string, Tensor>();
  let metadata: Record<string, string> = {};
  for (const [name, entry] of Object.entries(header)) {
    if (name === "__metadata__") {
      metadata = entry as Record<string, string>;
      continue;
    }
    const { dtype, shape, data_offsets } = entry as {
      dtype: string;
      shape: number[];
      data_offsets: [number, number];
    };
    if (dtype !== "F32" && dtype !== "F64") {
      throw new BadCheckpointError(`${name}: unsupported dtype ${dtype}`);
    }
    const [start, end] = data_offsets;
    if (dataStart + end > buf.length || end - start !== numel(shape) * BYTES[dtype]) {
      throw new BadCheckpointError(`${name}: bad data offsets`);
    }
    // copy to a fresh, aligned buffer before viewing as floats
    const bytes = Uint8Array.prototype.slice.call(buf, dataStart + start, dataStart + end);
    const view =
      dtype === "F32"
        ? new Float32Array(bytes.buffer, 0, numel(shape))
        : new Float64Array(bytes.buffer, 0, numel(shape));
    tensors.set(name, { dtype, shape: [...shape], data: Float64Array.from(view) });
  }
  return { tensors, metadata };
}

export function writeSafetensors(ckpt: Checkpoint): Buffer {
  const header: Record<string, unknown> = {};
  if (Object.keys(ckpt.metadata).length > 0) {
    header["__metadata__"] = ckpt.metadata;
  }
  const chunks: Buffer[] = [];
  let offset = 0;
  for (const [name, t] of ckpt.tensors) {
    const raw =
      t.dtype === "F32"
        ? Buffer.from(Float32Array.from(t.data).buffer)
        : Buffer.from(Float64Array.from(t.data).buffer);
    header[name] = {
      dtype: t.dtype,
      shape: t.shape,
      data_offsets: [offset, offset + raw.length],
    };
    chunks.push(raw);
    offset += raw.length;
  }
  const headerBuf = Buffer.from(JSON.stringify(header), "utf-8");
  const lenBuf = Buffer.alloc(8);
  lenBuf.writeBigUInt64LE(BigInt(headerBuf.length), 0);
  return Buffer.concat([lenBuf, headerBuf, ...chunks]);
}
