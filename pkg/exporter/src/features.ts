/**
 * Semantic features and text-prompted foreground masks for the first frame
 * of a video, at latent-grid resolution.
 *
 * Features come from a deterministic patch embedder (14-pixel patches,
 * seeded two-layer projection over pooled color and patch position) and are
 * bilinearly resampled from the native patch grid to (h, w). Masks threshold
 * a saliency field (luminance deviation plus a prompt-seeded perturbation
 * scaled by the frame's contrast) at its 60th percentile, so a constant
 * frame segments to an empty foreground.
 */

import { LatentGrid, VideoTensor, firstFrame } from './backend.js';
import { Rng } from './rng.js';

export const PATCH_SIZE = 14;
export const FEATURE_DIM = 32;
const HIDDEN_DIM = 24;
const MASK_PERCENTILE = 0.6;

interface Frame {
  height: number;
  width: number;
  channels: number;
  data: Float32Array;
}

function patchMean(frame: Frame, y0: number, x0: number, channel: number): number {
  let sum = 0;
  let count = 0;
  const yEnd = Math.min(y0 + PATCH_SIZE, frame.height);
  const xEnd = Math.min(x0 + PATCH_SIZE, frame.width);
  for (let y = y0; y < yEnd; y++) {
    for (let x = x0; x < xEnd; x++) {
      sum += frame.data[(y * frame.width + x) * frame.channels + channel];
      count++;
    }
  }
  return sum / count;
}

/** Patch-grid features for one frame, (gridH * gridW * FEATURE_DIM). */
export function patchFeatures(frame: Frame): { gridH: number; gridW: number; data: Float64Array } {
  const gridH = Math.ceil(frame.height / PATCH_SIZE);
  const gridW = Math.ceil(frame.width / PATCH_SIZE);
  const inputDim = frame.channels + 2;
  const w1 = new Rng('features/layer1').fillGaussian(new Float64Array(HIDDEN_DIM * inputDim));
  const w2 = new Rng('features/layer2').fillGaussian(new Float64Array(FEATURE_DIM * HIDDEN_DIM));
  const data = new Float64Array(gridH * gridW * FEATURE_DIM);
  const input = new Float64Array(inputDim);
  const hidden = new Float64Array(HIDDEN_DIM);
  for (let gy = 0; gy < gridH; gy++) {
    for (let gx = 0; gx < gridW; gx++) {
      for (let c = 0; c < frame.channels; c++) {
        input[c] = patchMean(frame, gy * PATCH_SIZE, gx * PATCH_SIZE, c);
      }
      input[frame.channels] = gy / Math.max(gridH - 1, 1);
      input[frame.channels + 1] = gx / Math.max(gridW - 1, 1);
      for (let hIdx = 0; hIdx < HIDDEN_DIM; hIdx++) {
        let acc = 0;
        for (let i = 0; i < inputDim; i++) {
          acc += w1[hIdx * inputDim + i] * input[i];
        }
        hidden[hIdx] = Math.tanh(acc);
      }
      const base = (gy * gridW + gx) * FEATURE_DIM;
      for (let fIdx = 0; fIdx < FEATURE_DIM; fIdx++) {
        let acc = 0;
        for (let hIdx = 0; hIdx < HIDDEN_DIM; hIdx++) {
          acc += w2[fIdx * HIDDEN_DIM + hIdx] * hidden[hIdx];
        }
        data[base + fIdx] = Math.tanh(acc);
      }
    }
  }
  return { gridH, gridW, data };
}

/** Bilinear resample of a (srcH, srcW, d) grid to (dstH, dstW, d). */
export function resampleBilinear(
  src: Float64Array,
  srcH: number,
  srcW: number,
  d: number,
  dstH: number,
  dstW: number,
): Float64Array {
  const out = new Float64Array(dstH * dstW * d);
  for (let y = 0; y < dstH; y++) {
    const sy = Math.min(Math.max(((y + 0.5) * srcH) / dstH - 0.5, 0), srcH - 1);
    const y0 = Math.floor(sy);
    const y1 = Math.min(y0 + 1, srcH - 1);
    const fy = sy - y0;
    for (let x = 0; x < dstW; x++) {
      const sx = Math.min(Math.max(((x + 0.5) * srcW) / dstW - 0.5, 0), srcW - 1);
      const x0 = Math.floor(sx);
      const x1 = Math.min(x0 + 1, srcW - 1);
      const fx = sx - x0;
      for (let c = 0; c < d; c++) {
        const v00 = src[(y0 * srcW + x0) * d + c];
        const v01 = src[(y0 * srcW + x1) * d + c];
        const v10 = src[(y1 * srcW + x0) * d + c];
        const v11 = src[(y1 * srcW + x1) * d + c];
        const top = v00 * (1 - fx) + v01 * fx;
        const bottom = v10 * (1 - fx) + v11 * fx;
        out[(y * dstW + x) * d + c] = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

/** Feature grid for the first frame of a video at (h, w, FEATURE_DIM). */
export function featureGrid(video: VideoTensor, grid: LatentGrid): Float64Array {
  const frame = firstFrame(video);
  const { gridH, gridW, data } = patchFeatures(frame);
  return resampleBilinear(data, gridH, gridW, FEATURE_DIM, grid.h, grid.w);
}

function luminance(frame: Frame, y: number, x: number): number {
  let sum = 0;
  for (let c = 0; c < frame.channels; c++) {
    sum += frame.data[(y * frame.width + x) * frame.channels + c];
  }
  return sum / frame.channels;
}

/**
 * Binary foreground mask (h * w, values 0/1); empty when the frame has no
 * contrast for the saliency field to latch onto.
 */
export function segmentForeground(video: VideoTensor, grid: LatentGrid, prompt: string): Uint8Array {
  const frame = firstFrame(video);
  const cellH = frame.height / grid.h;
  const cellW = frame.width / grid.w;
  const lum = new Float64Array(grid.h * grid.w);
  for (let y = 0; y < grid.h; y++) {
    for (let x = 0; x < grid.w; x++) {
      let sum = 0;
      let count = 0;
      const yEnd = Math.min(Math.ceil((y + 1) * cellH), frame.height);
      const xEnd = Math.min(Math.ceil((x + 1) * cellW), frame.width);
      for (let fy = Math.floor(y * cellH); fy < yEnd; fy++) {
        for (let fx = Math.floor(x * cellW); fx < xEnd; fx++) {
          sum += luminance(frame, fy, fx);
          count++;
        }
      }
      lum[y * grid.w + x] = sum / count;
    }
  }
  const mean = lum.reduce((a, b) => a + b, 0) / lum.length;
  const variance = lum.reduce((a, b) => a + (b - mean) * (b - mean), 0) / lum.length;
  const std = Math.sqrt(variance);
  const rng = new Rng(`mask/${prompt}`);
  const saliency = new Float64Array(lum.length);
  for (let i = 0; i < lum.length; i++) {
    saliency[i] = Math.abs(lum[i] - mean) + 0.5 * std * rng.next();
  }
  const sorted = Float64Array.from(saliency).sort();
  const threshold = sorted[Math.min(Math.floor(MASK_PERCENTILE * sorted.length), sorted.length - 1)];
  const mask = new Uint8Array(lum.length);
  for (let i = 0; i < lum.length; i++) {
    mask[i] = saliency[i] > threshold ? 1 : 0;
  }
  return mask;
}
