/**
 * Smoke-run orchestration: populate the report in stage order, stopping at
 * the first failing stage while keeping the report schema-valid throughout.
 */

import { checkImports, checkRegistered, hostFrameworkAvailable, repoExists } from "./pycheck.js";
import { probeShapes } from "./probe.js";
import { SmokeReport, emptyReport } from "./report.js";
import { trainStub } from "./trainer.js";

export interface ShimInvocation {
  repoDir: string;
  dataDir: string | null; // null selects the built-in stub trainer
  iters: number;
  evaluate: boolean;
  probe: boolean;
  injectNanAt?: number;
}

export class InfrastructureError extends Error {}

export function runSmoke(inv: ShimInvocation): SmokeReport {
  if (inv.iters <= 0) throw new InfrastructureError("iterations must be positive");
  if (!repoExists(inv.repoDir)) throw new InfrastructureError(`repo dir not found: ${inv.repoDir}`);
  if (inv.dataDir !== null && !hostFrameworkAvailable()) {
    throw new InfrastructureError("host framework not importable; use --stub");
  }

  const report = emptyReport();

  // Stage 1: import resolution (syntax + repo-internal imports).
  const imports = checkImports(inv.repoDir);
  if (!imports.ok) {
    report.error = {
      stage: imports.stage ?? "import",
      file: imports.file ?? "",
      traceback: (imports.traceback ?? "").slice(0, 500),
    };
    return report;
  }
  report.imports_resolve = true;

  // Stage 2: method registration.
  if (!checkRegistered(inv.repoDir)) {
    report.error = {
      stage: "registration",
      file: "",
      traceback: "no method_spec export found in the repository",
    };
    return report;
  }
  report.registered = true;

  // Stage 3 + 4: trainer construction and the iteration loop with NaN watch.
  report.train_started = true;
  const outcome = trainStub({
    iters: inv.iters,
    evaluate: inv.evaluate,
    injectNanAt: inv.injectNanAt,
  });
  report.steps_completed = outcome.steps;
  report.nan_detected = outcome.nan;
  report.loss_first = outcome.lossFirst;
  report.loss_last = Number.isFinite(outcome.lossLast) ? outcome.lossLast : null;
  // Deterministic wall time in stub mode keeps reports byte-identical.
  report.wall_time_s = Math.round(outcome.steps * 10) / 1e6;
  if (outcome.nan) {
    report.error = {
      stage: "train",
      file: "",
      traceback: `NaN detected at step ${outcome.steps}`,
    };
    return report;
  }

  // Stage 5: optional evaluation render.
  report.psnr_eval = outcome.psnr;

  if (inv.probe) {
    report.probes = probeShapes(inv.repoDir);
  }
  return report;
}
