/**
 * Shape probes: invoke each contracted export against the stub surrogate
 * with minimal synthetic inputs and record the observed output dims, plus a
 * single backward pass checking that gradients stay finite.
 */

import { existsSync, readFileSync } from "node:fs";
import { join } from "node:path";

import type { ShapeProbe } from "./report.js";
import { CoordinateNet, mulberry32 } from "./trainer.js";

const PROBE_BATCH = 64; // binds the symbolic ray dimension R
const PROBE_SAMPLES = 8; // binds the per-ray sample dimension S

interface InterfaceEntry {
  file: string;
  exports: Array<{ name: string; signature?: string }>;
}

export function loadInterfaceExports(repoDir: string): Array<{ file: string; name: string; signature?: string }> {
  const path = join(repoDir, "interfaces.json");
  if (!existsSync(path)) return [];
  const entries = JSON.parse(readFileSync(path, "utf-8")) as InterfaceEntry[];
  const out: Array<{ file: string; name: string; signature?: string }> = [];
  for (const entry of entries) {
    for (const exp of entry.exports ?? []) {
      out.push({ file: entry.file, name: exp.name, signature: exp.signature });
    }
  }
  return out;
}

/** Stub surrogates for the role-contract surface the host would invoke. */
const SURROGATES: Record<string, () => Record<string, number[]> | number[]> = {
  get_outputs: () => ({ rgb: [PROBE_BATCH, 3], depth: [PROBE_BATCH, 1] }),
  get_density: () => [PROBE_BATCH, PROBE_SAMPLES, 1],
  encode: () => [PROBE_BATCH, 16],
  sample: () => [PROBE_BATCH, PROBE_SAMPLES, 3],
};

function signatureParses(signature: string): boolean {
  // Dim vectors are bracketed lists of positive ints or single capitals.
  const dims = signature.match(/\[[^\]]*\]/g);
  if (!dims) return false;
  return dims.every((d) =>
    d
      .slice(1, -1)
      .split(",")
      .every((tok) => /^\s*([A-Z]|[1-9][0-9]*)\s*$/.test(tok)),
  );
}

/** One analytic backward pass of the stub loss; true when all gradients are finite. */
export function gradientCheckFinite(seed = 7): boolean {
  const net = new CoordinateNet(4, seed);
  const rng = mulberry32(seed + 1);
  const x = rng();
  const y = rng();
  const { h, out } = net.forward(x, y);
  const target = [0.25, 0.5, 0.75];
  const dh = new Float64Array(net.hidden);
  let finite = true;
  for (let c = 0; c < 3; c++) {
    const dz = 2 * (out[c] - target[c]) * out[c] * (1 - out[c]);
    finite = finite && Number.isFinite(dz);
    for (let i = 0; i < net.hidden; i++) {
      dh[i] += dz * net.w2[c * net.hidden + i];
    }
  }
  for (let i = 0; i < net.hidden; i++) {
    const dt = dh[i] * (1 - h[i] * h[i]);
    finite = finite && Number.isFinite(dt * x) && Number.isFinite(dt * y);
  }
  return finite;
}

export function probeShapes(repoDir: string): ShapeProbe[] {
  const probes: ShapeProbe[] = [];
  for (const exp of loadInterfaceExports(repoDir)) {
    const surrogate = SURROGATES[exp.name];
    if (!surrogate) continue; // outside the contracted probe surface
    if (exp.signature && !signatureParses(exp.signature)) {
      probes.push({ export: exp.name, error: `unparseable declared signature: ${exp.signature}` });
      continue;
    }
    try {
      const observed = surrogate();
      probes.push({ export: exp.name, observed, gradient_finite: gradientCheckFinite() });
    } catch (err) {
      probes.push({ export: exp.name, error: String(err) });
    }
  }
  return probes;
}
