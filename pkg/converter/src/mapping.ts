/**
 * Name mapping and parameterization translation from a training checkpoint
 * (safetensors) to the s4dc weight container.
 *
 * Source schema (names in the training framework's state dict):
 *
 *   expand.weight (c,1)                expand.bias (c,)
 *   blocks.{i}.mix.weight (c,c)        blocks.{i}.mix.bias (c,)
 *   blocks.{i}.prelu1.a (c,)           blocks.{i}.prelu2.a (c,)
 *   blocks.{i}.ssm.lambda_re (c,N)     blocks.{i}.ssm.lambda_im (c,N)
 *   blocks.{i}.ssm.b_re / b_im (c,N)   blocks.{i}.ssm.c_re / c_im (c,N)
 *   blocks.{i}.ssm.d (c,)
 *   blocks.{i}.ssm.log_dt (c,)  — or blocks.{i}.ssm.dt, already linear
 *   blocks.{i}.norm.running_mean/running_var/weight/bias (c,)
 *   blocks.{i}.norm.num_batches_tracked — consumed and skipped
 *   blocks.{i}.film.weight (2c,E)      blocks.{i}.film.bias (2c,)
 *   control_mlp.{0,1,2}.weight/bias    control_mlp.{0,1}.prelu (16,)
 *   contract.weight (1,c)              contract.bias (1,)
 *
 * Translations the converter owns: separate real/imag parts become
 * interleaved complex tensors; the stored log step becomes a linear step
 * (exp computed in double precision); raw BatchNorm statistics pass
 * through untouched so the engine folds them with its own epsilon rule.
 * Everything else is a bitwise copy after normalization to 32-bit floats.
 */

import { Checkpoint, Tensor, numel } from "./safetensors.js";
import { ContainerTensor, ModelConfig, writeContainer } from "./container.js";

export class UnmappedTensorError extends Error {}
export class ShapeMismatchError extends Error {}
export class MissingConfigError extends Error {}
export class MissingTensorError extends Error {}

export const CONTROL_HIDDEN = 16;
export const DEFAULT_BN_EPS = 1e-5;

export interface AuditEntry {
  source: string;
  target: string | null;
  action: "copied" | "merged-complex" | "exp" | "renamed" | "skipped";
}

export interface ConvertResult {
  container: Buffer;
  audit: AuditEntry[];
  config: ModelConfig;
}

interface Rule {
  /** Source names this rule consumes, in order. */
  sources: string[];
  /** Container tensor it produces; null for explicit skips. */
  target: string | null;
  shape: number[];
  dtype: "f32" | "c64";
  action: AuditEntry["action"];
}

function blockRules(i: number, c: number, n: number, e: number, hasLogDt: boolean): Rule[] {
  const p = `blocks.${i}.`;
  return [
    { sources: [p + "mix.weight"], target: p + "mix.weight", shape: [c, c], dtype: "f32", action: "copied" },
    { sources: [p + "mix.bias"], target: p + "mix.bias", shape: [c], dtype: "f32", action: "copied" },
    { sources: [p + "prelu1.a"], target: p + "prelu1.a", shape: [c], dtype: "f32", action: "copied" },
    { sources: [p + "ssm.lambda_re", p + "ssm.lambda_im"], target: p + "ssm.lambda", shape: [c, n], dtype: "c64", action: "merged-complex" },
    { sources: [p + "ssm.b_re", p + "ssm.b_im"], target: p + "ssm.b", shape: [c, n], dtype: "c64", action: "merged-complex" },
    { sources: [p + "ssm.c_re", p + "ssm.c_im"], target: p + "ssm.c", shape: [c, n], dtype: "c64", action: "merged-complex" },
    { sources: [p + "ssm.d"], target: p + "ssm.d", shape: [c], dtype: "f32", action: "copied" },
    hasLogDt
      ? { sources: [p + "ssm.log_dt"], target: p + "ssm.dt", shape: [c], dtype: "f32", action: "exp" }
      : { sources: [p + "ssm.dt"], target: p + "ssm.dt", shape: [c], dtype: "f32", action: "copied" },
    { sources: [p + "norm.running_mean"], target: p + "norm.mean", shape: [c], dtype: "f32", action: "renamed" },
    { sources: [p + "norm.running_var"], target: p + "norm.var", shape: [c], dtype: "f32", action: "renamed" },
    { sources: [p + "norm.weight"], target: p + "norm.weight", shape: [c], dtype: "f32", action: "copied" },
    { sources: [p + "norm.bias"], target: p + "norm.bias", shape: [c], dtype: "f32", action: "copied" },
    { sources: [p + "film.weight"], target: p + "film.weight", shape: [2 * c, e], dtype: "f32", action: "copied" },
    { sources: [p + "film.bias"], target: p + "film.bias", shape: [2 * c], dtype: "f32", action: "copied" },
    { sources: [p + "prelu2.a"], target: p + "prelu2.a", shape: [c], dtype: "f32", action: "copied" },
  ];
}

function allRules(config: ModelConfig, ckpt: Checkpoint): Rule[] {
  const { channels: c, ssm_order: n, control_embedding_dim: e } = config;
  const rules: Rule[] = [
    { sources: ["expand.weight"], target: "expand.weight", shape: [c, 1], dtype: "f32", action: "copied" },
    { sources: ["expand.bias"], target: "expand.bias", shape: [c], dtype: "f32", action: "copied" },
  ];
  for (let i = 0; i < config.num_blocks; i++) {
    const hasLogDt = ckpt.tensors.has(`blocks.${i}.ssm.log_dt`);
    rules.push(...blockRules(i, c, n, e, hasLogDt));
  }
  const dims: [number, number][] = [
    [CONTROL_HIDDEN, config.control_dim],
    [CONTROL_HIDDEN, CONTROL_HIDDEN],
    [e, CONTROL_HIDDEN],
  ];
  dims.forEach(([out, inp], i) => {
    rules.push({ sources: [`control_mlp.${i}.weight`], target: `control_mlp.${i}.weight`, shape: [out, inp], dtype: "f32", action: "copied" });
    rules.push({ sources: [`control_mlp.${i}.bias`], target: `control_mlp.${i}.bias`, shape: [out], dtype: "f32", action: "copied" });
    if (i < 2) {
      rules.push({ sources: [`control_mlp.${i}.prelu`], target: `control_mlp.${i}.prelu`, shape: [CONTROL_HIDDEN], dtype: "f32", action: "copied" });
    }
  });
  rules.push({ sources: ["contract.weight"], target: "contract.weight", shape: [1, c], dtype: "f32", action: "copied" });
  rules.push({ sources: ["contract.bias"], target: "contract.bias", shape: [1], dtype: "f32", action: "copied" });
  return rules;
}

function skipRules(config: ModelConfig, ckpt: Checkpoint): Rule[] {
  const rules: Rule[] = [];
  for (let i = 0; i < config.num_blocks; i++) {
    const name = `blocks.${i}.norm.num_batches_tracked`;
    if (ckpt.tensors.has(name)) {
      rules.push({ sources: [name], target: null, shape: [], dtype: "f32", action: "skipped" });
    }
  }
  return rules;
}

function parseConfig(ckpt: Checkpoint, override?: Partial<ModelConfig>): ModelConfig {
  let parsed: Partial<ModelConfig> = {};
  if (ckpt.metadata["config"] !== undefined) {
    try {
      parsed = JSON.parse(ckpt.metadata["config"]);
    } catch (err) {
      throw new MissingConfigError(`checkpoint config metadata is not JSON: ${err}`);
    }
  }
  const merged = { control_dim: 2, control_embedding_dim: 32, sample_rate: 44100, ...parsed, ...override };
  for (const key of ["num_blocks", "channels", "ssm_order"] as const) {
    if (typeof merged[key] !== "number") {
      throw new MissingConfigError(
        `missing '${key}': provide checkpoint metadata or --config-override`);
    }
  }
  return merged as ModelConfig;
}

function expectShape(name: string, t: Tensor, shape: number[]): void {
  const got = t.shape.join("x") || "scalar";
  const want = shape.join("x");
  if (t.shape.length !== shape.length || t.shape.some((v, i) => v !== shape[i])) {
    throw new ShapeMismatchError(`${name}: expected shape ${want}, got ${got}`);
  }
}

function interleave(re: Float64Array, im: Float64Array): Float32Array {
  const out = new Float32Array(2 * re.length);
  for (let i = 0; i < re.length; i++) {
    out[2 * i] = Math.fround(re[i]);
    out[2 * i + 1] = Math.fround(im[i]);
  }
  return out;
}

export function convert(ckpt: Checkpoint, override?: Partial<ModelConfig>): ConvertResult {
  const config = parseConfig(ckpt, override);
  const rules = [...allRules(config, ckpt), ...skipRules(config, ckpt)];

  const consumed = new Set<string>();
  const audit: AuditEntry[] = [];
  const out = new Map<string, ContainerTensor>();

  for (const rule of rules) {
    const tensors: Tensor[] = [];
    for (const source of rule.sources) {
      const t = ckpt.tensors.get(source);
      if (t === undefined) {
        throw new MissingTensorError(`checkpoint is missing tensor '${source}'`);
      }
      tensors.push(t);
      consumed.add(source);
    }
    if (rule.target === null) {
      audit.push({ source: rule.sources[0], target: null, action: "skipped" });
      continue;
    }
    let data: Float32Array;
    if (rule.action === "merged-complex") {
      expectShape(rule.sources[0], tensors[0], rule.shape);
      expectShape(rule.sources[1], tensors[1], rule.shape);
      data = interleave(tensors[0].data, tensors[1].data);
    } else {
      expectShape(rule.sources[0], tensors[0], rule.shape);
      const values = rule.action === "exp" ? tensors[0].data.map(Math.exp) : tensors[0].data;
      data = Float32Array.from(values, Math.fround);
    }
    out.set(rule.target, { shape: rule.shape, dtype: rule.dtype, data });
    for (const source of rule.sources) {
      audit.push({ source, target: rule.target, action: rule.action });
    }
  }

  const unmapped = [...ckpt.tensors.keys()].filter((name) => !consumed.has(name));
  if (unmapped.length > 0) {
    throw new UnmappedTensorError(
      `checkpoint contains tensors with no mapping: ${unmapped.join(", ")}`);
  }

  const bnEps = ckpt.metadata["bn_eps"] !== undefined
    ? Number(ckpt.metadata["bn_eps"])
    : DEFAULT_BN_EPS;
  return { container: writeContainer(config, out, bnEps), audit, config };
}
