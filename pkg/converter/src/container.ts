/**
 * Writer/reader for the s4dc weight container (see docs/weights_format.md
 * in the engine repository). This is the converter's only coupling to the
 * engine: the byte format, reproduced exactly.
 */

export interface ModelConfig {
  num_blocks: number;
  channels: number;
  ssm_order: number;
  control_dim: number;
  control_embedding_dim: number;
  sample_rate: number;
}

export type ContainerDtype = "f32" | "c64";

export interface ContainerTensor {
  shape: number[];
  dtype: ContainerDtype;
  /** f32 scalars, or interleaved re/im pairs for c64. */
  data: Float32Array;
}

export class BadContainerError extends Error {}

const MAGIC = Buffer.from("S4DC", "ascii");
const VERSION = 1;

const CONFIG_KEY_ORDER: (keyof ModelConfig)[] = [
  "num_blocks", "channels", "ssm_order",
  "control_dim", "control_embedding_dim", "sample_rate",
];

function canonicalConfig(config: ModelConfig): ModelConfig {
  const out = {} as Record<string, number>;
  for (const key of CONFIG_KEY_ORDER) {
    out[key] = config[key];
  }
  return out as unknown as ModelConfig;
}

function scalarsPerEntry(dtype: ContainerDtype): number {
  return dtype === "c64" ? 2 : 1;
}

export function writeContainer(
  config: ModelConfig,
  tensors: Map<string, ContainerTensor>,
  bnEps?: number,
): Buffer {
  const index: object[] = [];
  const chunks: Buffer[] = [];
  let offset = 0;
  for (const [name, t] of tensors) {
    const raw = Buffer.from(Float32Array.from(t.data).buffer);
    index.push({ name, shape: t.shape, dtype: t.dtype, offset, nbytes: raw.length });
    chunks.push(raw);
    offset += raw.length;
  }
  const manifest: Record<string, unknown> = {
    config: canonicalConfig(config),
    tensors: index,
  };
  if (bnEps !== undefined) {
    manifest["bn_eps"] = bnEps;
  }
  const manifestBuf = Buffer.from(JSON.stringify(manifest), "utf-8");
  const header = Buffer.alloc(16);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(VERSION, 4);
  header.writeBigUInt64LE(BigInt(manifestBuf.length), 8);
  return Buffer.concat([header, manifestBuf, ...chunks]);
}

export function readContainer(buf: Buffer): {
  config: ModelConfig;
  tensors: Map<string, ContainerTensor>;
  bnEps?: number;
} {
  if (buf.length < 16 || !buf.subarray(0, 4).equals(MAGIC)) {
    throw new BadContainerError("not a weight container (bad magic)");
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) {
    throw new BadContainerError(`unsupported container version ${version}`);
  }
  const manifestLen = Number(buf.readBigUInt64LE(8));
  if (16 + manifestLen > buf.length) {
    throw new BadContainerError("manifest extends past end of file");
  }
  let manifest: {
    config: ModelConfig;
    tensors: { name: string; shape: number[]; dtype: ContainerDtype; offset: number; nbytes: number }[];
    bn_eps?: number;
  };
  try {
    manifest = JSON.parse(buf.subarray(16, 16 + manifestLen).toString("utf-8"));
  } catch (err) {
    throw new BadContainerError(`manifest is not valid JSON: ${err}`);
  }
  const payload = buf.subarray(16 + manifestLen);
  const tensors = new Map<string, ContainerTensor>();
  for (const entry of manifest.tensors) {
    const count = entry.shape.reduce((a, b) => a * b, 1) * scalarsPerEntry(entry.dtype);
    if (entry.offset + entry.nbytes > payload.length || entry.nbytes !== count * 4) {
      throw new BadContainerError(`${entry.name}: data outside payload`);
    }
    const bytes = Uint8Array.prototype.slice.call(
      payload, entry.offset, entry.offset + entry.nbytes);
    tensors.set(entry.name, {
      shape: [...entry.shape],
      dtype: entry.dtype,
      data: new Float32Array(bytes.buffer, 0, count),
    });
  }
  return { config: manifest.config, tensors, bnEps: manifest.bn_eps };
}
