/**
 * Command-line entry point.
 *
 *   node dist/cli.js --input ckpt.safetensors --output model.s4dc
 *                    [--config-override '{"channels":32,...}']
 *                    [--audit mapping.json]
 *
 * Prints the tensor-mapping audit (every source tensor consumed exactly
 * once or explicitly skipped); --audit additionally writes it as JSON.
 */

import { parseArgs } from "node:util";
import { readFileSync, writeFileSync } from "node:fs";
import { readSafetensors } from "./safetensors.js";
import {
  convert,
  MissingConfigError,
  MissingTensorError,
  ShapeMismatchError,
  UnmappedTensorError,
} from "./mapping.js";
import { BadCheckpointError } from "./safetensors.js";

export function main(argv: string[]): number {
  let args;
  try {
    args = parseArgs({
      args: argv,
      options: {
        input: { type: "string" },
        output: { type: "string" },
        "config-override": { type: "string" },
        audit: { type: "string" },
      },
    }).values;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
  if (!args.input || !args.output) {
    console.error("usage: cli.js --input CKPT --output CONTAINER "
      + "[--config-override JSON] [--audit FILE]");
    return 2;
  }
  try {
    const ckpt = readSafetensors(readFileSync(args.input));
    const override = args["config-override"]
      ? JSON.parse(args["config-override"])
      : undefined;
    const { container, audit, config } = convert(ckpt, override);
    writeFileSync(args.output, container);
    if (args.audit) {
      writeFileSync(args.audit, JSON.stringify(audit, null, 2));
    }
    console.log(`config: channels=${config.channels} ssm_order=${config.ssm_order} `
      + `num_blocks=${config.num_blocks}`);
    for (const entry of audit) {
      const arrow = entry.target === null ? "(skipped)" : `-> ${entry.target}`;
      console.log(`  ${entry.source} ${arrow} [${entry.action}]`);
    }
    console.log(`wrote ${args.output} (${audit.length} source tensors consumed)`);
    return 0;
  } catch (err) {
    if (err instanceof UnmappedTensorError || err instanceof ShapeMismatchError
      || err instanceof MissingConfigError || err instanceof MissingTensorError
      || err instanceof BadCheckpointError
      || (err as NodeJS.ErrnoException).code === "ENOENT") {
      console.error(`error: ${(err as Error).message}`);
      return 2;
    }
    console.error(`internal error: ${err}`);
    return 1;
  }
}

const invokedDirectly = process.argv[1] !== undefined
  && import.meta.url.endsWith(process.argv[1].split("/").pop() as string);
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
