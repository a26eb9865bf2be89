/** Shared fixtures: synthetic containers and their inverse-mapped checkpoints. */

import { ContainerTensor, ModelConfig } from "../src/container.js";
import { Checkpoint, Tensor } from "../src/safetensors.js";
import { CONTROL_HIDDEN } from "../src/mapping.js";

export const CONFIG: ModelConfig = {
  num_blocks: 2,
  channels: 4,
  ssm_order: 4,
  control_dim: 2,
  control_embedding_dim: 8,
  sample_rate: 44100,
};

let seedState = 12345;
function rand(): number {
  // deterministic LCG so fixtures are stable across runs
  seedState = (seedState * 1103515245 + 12345) % 2147483648;
  return seedState / 2147483648 - 0.5;
}

function f32(shape: number[], fill?: () => number): ContainerTensor {
  const n = shape.reduce((a, b) => a * b, 1);
  return {
    shape,
    dtype: "f32",
    data: Float32Array.from({ length: n }, fill ?? rand),
  };
}

function c64(shape: number[]): ContainerTensor {
  const n = shape.reduce((a, b) => a * b, 1);
  return { shape, dtype: "c64", data: Float32Array.from({ length: 2 * n }, rand) };
}

/** Raw-norm container tensor set in canonical order. */
export function randomContainerTensors(cfg: ModelConfig): Map<string, ContainerTensor> {
  const { channels: c, ssm_order: n, control_embedding_dim: e } = cfg;
  const out = new Map<string, ContainerTensor>();
  out.set("expand.weight", f32([c, 1]));
  out.set("expand.bias", f32([c]));
  for (let i = 0; i < cfg.num_blocks; i++) {
    const p = `blocks.${i}.`;
    out.set(p + "mix.weight", f32([c, c]));
    out.set(p + "mix.bias", f32([c]));
    out.set(p + "prelu1.a", f32([c]));
    out.set(p + "ssm.lambda", c64([c, n]));
    out.set(p + "ssm.b", c64([c, n]));
    out.set(p + "ssm.c", c64([c, n]));
    out.set(p + "ssm.d", f32([c]));
    out.set(p + "ssm.dt", f32([c], () => 0.001 + Math.abs(rand()) * 0.099));
    out.set(p + "norm.mean", f32([c]));
    out.set(p + "norm.var", f32([c], () => 0.5 + Math.abs(rand())));
    out.set(p + "norm.weight", f32([c]));
    out.set(p + "norm.bias", f32([c]));
    out.set(p + "film.weight", f32([2 * c, e]));
    out.set(p + "film.bias", f32([2 * c]));
    out.set(p + "prelu2.a", f32([c]));
  }
  const dims: [number, number][] = [
    [CONTROL_HIDDEN, cfg.control_dim],
    [CONTROL_HIDDEN, CONTROL_HIDDEN],
    [e, CONTROL_HIDDEN],
  ];
  dims.forEach(([outD, inD], i) => {
    out.set(`control_mlp.${i}.weight`, f32([outD, inD]));
    out.set(`control_mlp.${i}.bias`, f32([outD]));
    if (i < 2) {
      out.set(`control_mlp.${i}.prelu`, f32([CONTROL_HIDDEN]));
    }
  });
  out.set("contract.weight", f32([1, c]));
  out.set("contract.bias", f32([1]));
  return out;
}

/** Inverse mapping: training-style checkpoint that converts back to the container. */
export function checkpointFromContainer(
  cfg: ModelConfig,
  tensors: Map<string, ContainerTensor>,
  bnEps: number,
): Checkpoint {
  const ckpt: Checkpoint = {
    tensors: new Map<string, Tensor>(),
    metadata: { config: JSON.stringify(cfg), bn_eps: String(bnEps) },
  };
  for (const [name, t] of tensors) {
    if (t.dtype === "c64") {
      const n = t.data.length / 2;
      const re = new Float64Array(n);
      const im = new Float64Array(n);
      for (let i = 0; i < n; i++) {
        re[i] = t.data[2 * i];
        im[i] = t.data[2 * i + 1];
      }
      const base = name.replace(/\.(lambda|b|c)$/, ".$1");
      ckpt.tensors.set(base + "_re", { dtype: "F32", shape: t.shape, data: re });
      ckpt.tensors.set(base + "_im", { dtype: "F32", shape: t.shape, data: im });
    } else if (name.endsWith("ssm.dt")) {
      // store the log step in double precision so exp() recovers the
      // original f32 values bitwise
      const logDt = Float64Array.from(t.data, Math.log);
      ckpt.tensors.set(name.replace(/\.dt$/, ".log_dt"),
        { dtype: "F64", shape: t.shape, data: logDt });
    } else if (name.endsWith("norm.mean")) {
      ckpt.tensors.set(name.replace(/mean$/, "running_mean"),
        { dtype: "F32", shape: t.shape, data: Float64Array.from(t.data) });
    } else if (name.endsWith("norm.var")) {
      ckpt.tensors.set(name.replace(/var$/, "running_var"),
        { dtype: "F32", shape: t.shape, data: Float64Array.from(t.data) });
    } else {
      ckpt.tensors.set(name, { dtype: "F32", shape: t.shape, data: Float64Array.from(t.data) });
    }
  }
  for (let i = 0; i < cfg.num_blocks; i++) {
    ckpt.tensors.set(`blocks.${i}.norm.num_batches_tracked`,
      { dtype: "F32", shape: [1], data: Float64Array.of(60) });
  }
  return ckpt;
}
