/**
 * Smoke report schema shared with the orchestrator.
 *
 * Field names are bit-exact; every outcome populates the full field set, with
 * later stages left at their defaults when an earlier stage fails.
 */

import { writeFileSync } from "node:fs";

export interface SmokeError {
  stage: string;
  file: string;
  traceback: string;
}

export interface ShapeProbe {
  export: string;
  observed?: Record<string, number[]> | number[];
  gradient_finite?: boolean;
  error?: string;
}

export interface SmokeReport {
  imports_resolve: boolean;
  registered: boolean;
  train_started: boolean;
  steps_completed: number;
  nan_detected: boolean;
  loss_first: number | null;
  loss_last: number | null;
  psnr_eval: number | null;
  wall_time_s: number;
  error: SmokeError | null;
  probes?: ShapeProbe[];
}

export function emptyReport(): SmokeReport {
  return {
    imports_resolve: false,
    registered: false,
    train_started: false,
    steps_completed: 0,
    nan_detected: false,
    loss_first: null,
    loss_last: null,
    psnr_eval: null,
    wall_time_s: 0,
    error: null,
  };
}

const REQUIRED_FIELDS: Array<keyof SmokeReport> = [
  "imports_resolve",
  "registered",
  "train_started",
  "steps_completed",
  "nan_detected",
  "loss_first",
  "loss_last",
  "psnr_eval",
  "wall_time_s",
  "error",
];

/** Schema check mirroring the orchestrator's validator. */
export function validateReport(report: SmokeReport): string[] {
  const problems: string[] = [];
  for (const field of REQUIRED_FIELDS) {
    if (!(field in report)) problems.push(`missing field ${String(field)}`);
  }
  for (const field of ["imports_resolve", "registered", "train_started", "nan_detected"] as const) {
    if (typeof report[field] !== "boolean") problems.push(`${field} must be boolean`);
  }
  if (!Number.isInteger(report.steps_completed) || report.steps_completed < 0) {
    problems.push("steps_completed must be a nonnegative integer");
  }
  for (const field of ["loss_first", "loss_last", "psnr_eval"] as const) {
    const value = report[field];
    if (value !== null && typeof value !== "number") problems.push(`${field} must be number or null`);
  }
  if (typeof report.wall_time_s !== "number") problems.push("wall_time_s must be a number");
  if (report.error !== null && typeof report.error?.stage !== "string") {
    problems.push("error must be null or carry a stage");
  }
  if (report.steps_completed > 0 && !report.train_started) {
    problems.push("steps_completed > 0 requires train_started");
  }
  if (report.registered && !report.imports_resolve) {
    problems.push("registered requires imports_resolve");
  }
  return problems;
}

export function writeReport(path: string, report: SmokeReport): void {
  const problems = validateReport(report);
  if (problems.length) {
    throw new Error(`refusing to write schema-invalid report: ${problems.join("; ")}`);
  }
  const ordered: Record<string, unknown> = {};
  const raw = report as unknown as Record<string, unknown>;
  for (const key of Object.keys(raw).sort()) {
    ordered[key] = raw[key];
  }
  writeFileSync(path, JSON.stringify(ordered, null, 2) + "\n");
}
