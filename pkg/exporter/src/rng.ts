/**
 * Deterministic PRNG so repeated exports with the same seed are
 * bit-identical across platforms: FNV-1a string hashing into a
 * splitmix32-initialized mulberry32 stream, Box-Muller for normals.
 */

export function hashString(text: string): number {
  let h = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 0x01000193);
  }
  return h >>> 0;
}

export class Rng {
  private state: number;
  private spareGaussian: number | null = null;

  constructor(seed: number | string) {
    const base = typeof seed === 'string' ? hashString(seed) : seed >>> 0;
    // splitmix32 scramble so nearby integer seeds decorrelate
    let z = (base + 0x9e3779b9) >>> 0;
    z = Math.imul(z ^ (z >>> 16), 0x21f0aaad) >>> 0;
    z = Math.imul(z ^ (z >>> 15), 0x735a2d97) >>> 0;
    this.state = (z ^ (z >>> 15)) >>> 0;
  }

  /** Derive an independent stream for a labeled subcomponent. */
  fork(label: string): Rng {
    return new Rng((this.state ^ hashString(label)) >>> 0);
  }

  /** Uniform in [0, 1). */
  next(): number {
    this.state = (this.state + 0x6d2b79f5) >>> 0;
    let t = this.state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  }

  /** Standard normal via Box-Muller. */
  gaussian(): number {
    if (this.spareGaussian !== null) {
      const value = this.spareGaussian;
      this.spareGaussian = null;
      return value;
    }
    let u = 0;
    while (u === 0) {
      u = this.next();
    }
    const v = this.next();
    const radius = Math.sqrt(-2.0 * Math.log(u));
    const angle = 2.0 * Math.PI * v;
    this.spareGaussian = radius * Math.sin(angle);
    return radius * Math.cos(angle);
  }

  fillGaussian(out: Float64Array): Float64Array {
    for (let i = 0; i < out.length; i++) {
      out[i] = this.gaussian();
    }
    return out;
  }
}
