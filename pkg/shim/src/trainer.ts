/**
 * Built-in stub trainer: fit a closed-form RGB target image with a tiny
 * coordinate network by full-batch gradient descent.
 *
 * Everything is seeded and arithmetic-only, so a given iteration count
 * produces byte-identical results on every run. A NaN watch inspects the
 * loss and all parameters each step and stops at the first hit.
 */

export interface TrainOutcome {
  steps: number;
  lossFirst: number;
  lossLast: number;
  nan: boolean;
  psnr: number | null;
}

export interface TrainOptions {
  iters: number;
  evaluate: boolean;
  injectNanAt?: number;
  seed?: number;
  width?: number;
  height?: number;
  hidden?: number;
  learningRate?: number;
}

/** Deterministic 32-bit PRNG (mulberry32). */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Closed-form target texture over normalized coordinates. */
export function targetColor(x: number, y: number): [number, number, number] {
  return [
    0.5 + 0.45 * Math.sin(3.3 * x) * Math.cos(2.1 * y),
    0.5 + 0.45 * Math.sin(2.4 * x + 0.7) * Math.cos(3.0 * y + 0.3),
    0.5 + 0.45 * Math.sin(1.8 * x + 1.4) * Math.cos(2.7 * y + 0.9),
  ];
}

export class CoordinateNet {
  readonly hidden: number;
  w1: Float64Array; // hidden x 2
  b1: Float64Array; // hidden
  w2: Float64Array; // 3 x hidden
  b2: Float64Array; // 3

  constructor(hidden: number, seed: number) {
    this.hidden = hidden;
    const rng = mulberry32(seed);
    const init = (n: number, scale: number) =>
      Float64Array.from({ length: n }, () => (rng() * 2 - 1) * scale);
    this.w1 = init(hidden * 2, 0.8);
    this.b1 = init(hidden, 0.1);
    this.w2 = init(3 * hidden, 0.5);
    this.b2 = init(3, 0.1);
  }

  params(): Float64Array[] {
    return [this.w1, this.b1, this.w2, this.b2];
  }

  forward(x: number, y: number): { h: Float64Array; out: [number, number, number] } {
    const h = new Float64Array(this.hidden);
    for (let i = 0; i < this.hidden; i++) {
      h[i] = Math.tanh(this.w1[i * 2] * x + this.w1[i * 2 + 1] * y + this.b1[i]);
    }
    const out: [number, number, number] = [0, 0, 0];
    for (let c = 0; c < 3; c++) {
      let z = this.b2[c];
      for (let i = 0; i < this.hidden; i++) z += this.w2[c * this.hidden + i] * h[i];
      out[c] = 1 / (1 + Math.exp(-z)); // sigmoid keeps colors in [0, 1]
    }
    return { h, out };
  }
}

interface Gradients {
  w1: Float64Array;
  b1: Float64Array;
  w2: Float64Array;
  b2: Float64Array;
  loss: number;
}

function fullBatchStep(net: CoordinateNet, width: number, height: number): Gradients {
  const g: Gradients = {
    w1: new Float64Array(net.w1.length),
    b1: new Float64Array(net.b1.length),
    w2: new Float64Array(net.w2.length),
    b2: new Float64Array(net.b2.length),
    loss: 0,
  };
  const count = width * height * 3;
  for (let py = 0; py < height; py++) {
    for (let px = 0; px < width; px++) {
      const x = px / (width - 1);
      const y = py / (height - 1);
      const target = targetColor(x, y);
      const { h, out } = net.forward(x, y);
      const dh = new Float64Array(net.hidden);
      for (let c = 0; c < 3; c++) {
        const err = out[c] - target[c];
        g.loss += (err * err) / count;
        // d(mse)/dz through the sigmoid.
        const dz = ((2 * err) / count) * out[c] * (1 - out[c]);
        g.b2[c] += dz;
        for (let i = 0; i < net.hidden; i++) {
          g.w2[c * net.hidden + i] += dz * h[i];
          dh[i] += dz * net.w2[c * net.hidden + i];
        }
      }
      for (let i = 0; i < net.hidden; i++) {
        const dt = dh[i] * (1 - h[i] * h[i]); // tanh'
        g.b1[i] += dt;
        g.w1[i * 2] += dt * x;
        g.w1[i * 2 + 1] += dt * y;
      }
    }
  }
  return g;
}

function anyNonFinite(arrays: Float64Array[]): boolean {
  for (const arr of arrays) {
    for (const v of arr) if (!Number.isFinite(v)) return true;
  }
  return false;
}

export function evalPsnr(net: CoordinateNet, width: number, height: number): number {
  let mse = 0;
  const count = width * height * 3;
  for (let py = 0; py < height; py++) {
    for (let px = 0; px < width; px++) {
      const x = px / (width - 1);
      const y = py / (height - 1);
      const target = targetColor(x, y);
      const { out } = net.forward(x, y);
      for (let c = 0; c < 3; c++) mse += ((out[c] - target[c]) ** 2) / count;
    }
  }
  if (mse === 0) return 100;
  return Math.min(10 * Math.log10(1 / mse), 100);
}

export function trainStub(options: TrainOptions): TrainOutcome {
  const width = options.width ?? 16;
  const height = options.height ?? 16;
  const hidden = options.hidden ?? 8;
  const lr = options.learningRate ?? 0.9;
  const net = new CoordinateNet(hidden, options.seed ?? 1234);

  let lossFirst = Number.NaN;
  let lossLast = Number.NaN;
  for (let step = 1; step <= options.iters; step++) {
    const g = fullBatchStep(net, width, height);
    let loss = g.loss;
    if (options.injectNanAt !== undefined && step === options.injectNanAt) {
      loss = Number.NaN;
    }
    if (step === 1) lossFirst = loss;
    lossLast = loss;
    if (!Number.isFinite(loss) || anyNonFinite(net.params())) {
      return { steps: step, lossFirst, lossLast, nan: true, psnr: null };
    }
    const apply = (param: Float64Array, grad: Float64Array) => {
      for (let i = 0; i < param.length; i++) param[i] -= lr * grad[i];
    };
    apply(net.w1, g.w1);
    apply(net.b1, g.b1);
    apply(net.w2, g.w2);
    apply(net.b2, g.b2);
    if (anyNonFinite(net.params())) {
      return { steps: step, lossFirst, lossLast, nan: true, psnr: null };
    }
  }
  const psnr = options.evaluate ? evalPsnr(net, width, height) : null;
  return { steps: options.iters, lossFirst, lossLast, nan: false, psnr };
}
