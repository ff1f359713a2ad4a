#!/usr/bin/env node
/**
 * Invocation: nerf-shim --repo DIR (--data DIR | --stub) --iters N [--eval]
 *             --report PATH [--probe] [--inject-nan-at N]
 *
 * Exit 0 means the report was written, even when the code under test failed;
 * nonzero is reserved for shim infrastructure problems.
 */

import { runSmoke, InfrastructureError, ShimInvocation } from "./runner.js";
import { writeReport } from "./report.js";

interface Args {
  repo?: string;
  data?: string;
  stub: boolean;
  iters?: number;
  eval: boolean;
  probe: boolean;
  report?: string;
  injectNanAt?: number;
}

export function parseArgs(argv: string[]): Args {
  const args: Args = { stub: false, eval: false, probe: false };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const next = () => {
      i += 1;
      if (i >= argv.length) throw new InfrastructureError(`missing value for ${flag}`);
      return argv[i];
    };
    switch (flag) {
      case "--repo":
        args.repo = next();
        break;
      case "--data":
        args.data = next();
        break;
      case "--stub":
        args.stub = true;
        break;
      case "--iters":
        args.iters = Number.parseInt(next(), 10);
        break;
      case "--eval":
        args.eval = true;
        break;
      case "--probe":
        args.probe = true;
        break;
      case "--report":
        args.report = next();
        break;
      case "--inject-nan-at":
        args.injectNanAt = Number.parseInt(next(), 10);
        break;
      default:
        throw new InfrastructureError(`unknown flag ${flag}`);
    }
  }
  if (!args.repo) throw new InfrastructureError("--repo is required");
  if (!args.report) throw new InfrastructureError("--report is required");
  if (!args.stub && !args.data) throw new InfrastructureError("pass --data DIR or --stub");
  if (args.stub && args.data) throw new InfrastructureError("--data and --stub are exclusive");
  if (!Number.isInteger(args.iters) || (args.iters ?? 0) <= 0) {
    throw new InfrastructureError("--iters must be a positive integer");
  }
  return args;
}

export function main(argv: string[]): number {
  let args: Args;
  try {
    args = parseArgs(argv);
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 2;
  }
  const invocation: ShimInvocation = {
    repoDir: args.repo!,
    dataDir: args.stub ? null : args.data!,
    iters: args.iters!,
    evaluate: args.eval,
    probe: args.probe,
    injectNanAt: args.injectNanAt,
  };
  try {
    const report = runSmoke(invocation);
    writeReport(args.report!, report);
    return 0;
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    return 3;
  }
}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url === new URL(`file://${process.argv[1]}`).href;
if (invokedDirectly) {
  process.exit(main(process.argv.slice(2)));
}
