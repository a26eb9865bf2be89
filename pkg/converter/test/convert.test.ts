import { describe, expect, it } from "vitest";
import { readContainer, writeContainer } from "../src/container.js";
import {
  convert,
  DEFAULT_BN_EPS,
  MissingConfigError,
  MissingTensorError,
  ShapeMismatchError,
  UnmappedTensorError,
} from "../src/mapping.js";
import { CONFIG, checkpointFromContainer, randomContainerTensors } from "./helpers.js";

function fixture() {
  const tensors = randomContainerTensors(CONFIG);
  const blob = writeContainer(CONFIG, tensors, DEFAULT_BN_EPS);
  const ckpt = checkpointFromContainer(CONFIG, tensors, DEFAULT_BN_EPS);
  return { tensors, blob, ckpt };
}

describe("convert", () => {
  it("synthetic checkpoint round-trips to a bitwise-equal container", () => {
    const { blob, ckpt } = fixture();
    const { container } = convert(ckpt);
    expect(container.equals(blob)).toBe(true);
  });

  it("every source tensor is consumed exactly once in the audit", () => {
    const { ckpt } = fixture();
    const { audit } = convert(ckpt);
    const sources = audit.map((entry) => entry.source).sort();
    const expected = [...ckpt.tensors.keys()].sort();
    expect(sources).toEqual(expected);
  });

  it("bookkeeping-only tensors are explicitly skipped", () => {
    const { ckpt } = fixture();
    const { audit } = convert(ckpt);
    const skipped = audit.filter((entry) => entry.action === "skipped");
    expect(skipped.map((entry) => entry.source)).toEqual([
      "blocks.0.norm.num_batches_tracked",
      "blocks.1.norm.num_batches_tracked",
    ]);
    expect(skipped.every((entry) => entry.target === null)).toBe(true);
  });

  it("log step size becomes a linear step via exp", () => {
    const { tensors, ckpt } = fixture();
    const { container } = convert(ckpt);
    const parsed = readContainer(container);
    expect([...parsed.tensors.get("blocks.0.ssm.dt")!.data])
      .toEqual([...tensors.get("blocks.0.ssm.dt")!.data]);
  });

  it("accepts a linear step size directly", () => {
    const { ckpt } = fixture();
    const logDt = ckpt.tensors.get("blocks.0.ssm.log_dt")!;
    ckpt.tensors.delete("blocks.0.ssm.log_dt");
    ckpt.tensors.set("blocks.0.ssm.dt", {
      dtype: "F32",
      shape: logDt.shape,
      data: Float64Array.from(logDt.data, Math.exp).map(Math.fround),
    });
    const { audit } = convert(ckpt);
    const entry = audit.find((a) => a.source === "blocks.0.ssm.dt");
    expect(entry?.action).toBe("copied");
  });

  it("rejects an unexpected extra tensor, naming it", () => {
    const { ckpt } = fixture();
    ckpt.tensors.set("blocks.0.mystery", { dtype: "F32", shape: [1], data: Float64Array.of(0) });
    expect(() => convert(ckpt)).toThrow(UnmappedTensorError);
    expect(() => convert(ckpt)).toThrow(/blocks\.0\.mystery/);
  });

  it("rejects a missing tensor", () => {
    const { ckpt } = fixture();
    ckpt.tensors.delete("contract.bias");
    expect(() => convert(ckpt)).toThrow(MissingTensorError);
  });

  it("rejects a wrong shape", () => {
    const { ckpt } = fixture();
    ckpt.tensors.set("expand.weight", { dtype: "F32", shape: [3, 1], data: new Float64Array(3) });
    expect(() => convert(ckpt)).toThrow(ShapeMismatchError);
  });

  it("requires a config from metadata or override", () => {
    const { ckpt } = fixture();
    ckpt.metadata = {};
    expect(() => convert(ckpt)).toThrow(MissingConfigError);
    const { config } = convert(ckpt, {
      num_blocks: 2, channels: 4, ssm_order: 4, control_embedding_dim: 8,
    });
    expect(config.channels).toBe(4);
    expect(config.sample_rate).toBe(44100);
  });

  it("container carries the checkpoint's bn_eps", () => {
    const { tensors } = fixture();
    const ckpt = checkpointFromContainer(CONFIG, tensors, 1e-3);
    const { container } = convert(ckpt);
    expect(readContainer(container).bnEps).toBe(1e-3);
  });
});
