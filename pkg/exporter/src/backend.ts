/**
 * Model backends that turn a video into latent tokens and cross-frame
 * attention. The built-in "reference" backend is a small deterministic
 * stand-in with the same interface contract a real video DiT binding
 * would implement: encode to a latent grid, add noise at a timestep, run
 * multi-head attention over [text; video] tokens at a chosen block,
 * average heads, and hand back the full softmax rows.
 */

import { findRecord, readContainer, TensorRecord } from './container.js';
import { Rng } from './rng.js';

export const TOTAL_STEPS = 50;
export const NUM_BLOCKS = 42;
export const NUM_HEADS = 4;
export const LATENT_CHANNELS = 16;
export const TEMPORAL_DOWNSAMPLE = 4;
export const SPATIAL_DOWNSAMPLE = 8;

export interface LatentGrid {
  f: number;
  h: number;
  w: number;
}

export interface VideoTensor {
  frames: number;
  height: number;
  width: number;
  channels: number;
  /** Row-major (frame, y, x, channel) values in [0, 1]. */
  data: Float32Array;
}

export interface AttentionResult {
  grid: LatentGrid;
  /**
   * Head-averaged video-to-video attention (f*h*w x f*h*w). Rows are
   * slices of a softmax over text + video tokens with the text columns
   * removed and no renormalization, so each row sums to less than 1.
   */
  attention: Float64Array;
}

export interface ModelBackend {
  readonly name: string;
  latentGrid(video: VideoTensor): LatentGrid;
  attention(video: VideoTensor, timestep: number, block: number, prompt: string, seed: number): AttentionResult;
}

export async function loadVideo(path: string): Promise<VideoTensor> {
  const records = await readContainer(path);
  const record: TensorRecord = findRecord(records, 'video');
  if (record.dtype !== 'float32') {
    throw new Error(`video record must be float32, got ${record.dtype}`);
  }
  let [frames, height, width, channels] = [0, 0, 0, 1];
  if (record.shape.length === 4) {
    [frames, height, width, channels] = record.shape;
  } else if (record.shape.length === 3) {
    [frames, height, width] = record.shape;
  } else {
    throw new Error(`video record must be (F, H, W[, C]), got [${record.shape}]`);
  }
  return { frames, height, width, channels, data: record.data as Float32Array };
}

/** First frame of a video as (H, W, C). */
export function firstFrame(video: VideoTensor): { height: number; width: number; channels: number; data: Float32Array } {
  const size = video.height * video.width * video.channels;
  return {
    height: video.height,
    width: video.width,
    channels: video.channels,
    data: video.data.subarray(0, size),
  };
}

function ceilDiv(a: number, b: number): number {
  return Math.ceil(a / b);
}

/** Mean over a pooling block, truncated at the video boundary. */
function poolBlock(video: VideoTensor, t0: number, y0: number, x0: number, channel: number): number {
  let sum = 0;
  let count = 0;
  const tEnd = Math.min(t0 + TEMPORAL_DOWNSAMPLE, video.frames);
  const yEnd = Math.min(y0 + SPATIAL_DOWNSAMPLE, video.height);
  const xEnd = Math.min(x0 + SPATIAL_DOWNSAMPLE, video.width);
  for (let t = t0; t < tEnd; t++) {
    for (let y = y0; y < yEnd; y++) {
      for (let x = x0; x < xEnd; x++) {
        sum += video.data[((t * video.height + y) * video.width + x) * video.channels + channel];
        count++;
      }
    }
  }
  return sum / count;
}

function softmaxRow(scores: Float64Array): Float64Array {
  let max = -Infinity;
  for (const s of scores) {
    max = Math.max(max, s);
  }
  const out = new Float64Array(scores.length);
  let total = 0;
  for (let i = 0; i < scores.length; i++) {
    out[i] = Math.exp(scores[i] - max);
    total += out[i];
  }
  for (let i = 0; i < scores.length; i++) {
    out[i] /= total;
  }
  return out;
}

export class ReferenceBackend implements ModelBackend {
  readonly name = 'reference';

  latentGrid(video: VideoTensor): LatentGrid {
    return {
      f: ceilDiv(video.frames, TEMPORAL_DOWNSAMPLE),
      h: ceilDiv(video.height, SPATIAL_DOWNSAMPLE),
      w: ceilDiv(video.width, SPATIAL_DOWNSAMPLE),
    };
  }

  /** Pooled patches projected to LATENT_CHANNELS with seeded weights. */
  encode(video: VideoTensor): { grid: LatentGrid; tokens: Float64Array } {
    const grid = this.latentGrid(video);
    const weights = new Rng(`${this.name}/encoder`).fillGaussian(
      new Float64Array(LATENT_CHANNELS * (video.channels + 2)),
    );
    const tokens = new Float64Array(grid.f * grid.h * grid.w * LATENT_CHANNELS);
    let index = 0;
    for (let t = 0; t < grid.f; t++) {
      for (let y = 0; y < grid.h; y++) {
        for (let x = 0; x < grid.w; x++) {
          for (let c = 0; c < LATENT_CHANNELS; c++) {
            let value = 0;
            const row = c * (video.channels + 2);
            for (let ch = 0; ch < video.channels; ch++) {
              value +=
                weights[row + ch] *
                poolBlock(video, t * TEMPORAL_DOWNSAMPLE, y * SPATIAL_DOWNSAMPLE, x * SPATIAL_DOWNSAMPLE, ch);
            }
            value += weights[row + video.channels] * (y / Math.max(grid.h - 1, 1));
            value += weights[row + video.channels + 1] * (x / Math.max(grid.w - 1, 1));
            tokens[index++] = Math.tanh(value);
          }
        }
      }
    }
    return { grid, tokens };
  }

  /** Blend the clean latent with seeded noise at the given timestep. */
  addNoise(tokens: Float64Array, timestep: number, seed: number): Float64Array {
    const alpha = 1 - timestep / TOTAL_STEPS;
    const rng = new Rng(`noise/${seed}/${timestep}`);
    const out = new Float64Array(tokens.length);
    const scaleSignal = Math.sqrt(alpha);
    const scaleNoise = Math.sqrt(1 - alpha);
    for (let i = 0; i < tokens.length; i++) {
      out[i] = scaleSignal * tokens[i] + scaleNoise * rng.gaussian();
    }
    return out;
  }

  /** Hashed per-word prompt embeddings; the empty prompt still owns one token. */
  textTokens(prompt: string): Float64Array {
    const words = prompt.split(/\s+/).filter((w) => w.length > 0);
    const count = Math.max(1, Math.min(words.length, 8));
    const tokens = new Float64Array(count * LATENT_CHANNELS);
    for (let i = 0; i < count; i++) {
      const rng = new Rng(`text/${words[i] ?? ''}/${i}`);
      for (let c = 0; c < LATENT_CHANNELS; c++) {
        tokens[i * LATENT_CHANNELS + c] = rng.gaussian();
      }
    }
    return tokens;
  }

  attention(video: VideoTensor, timestep: number, block: number, prompt: string, seed: number): AttentionResult {
    if (!Number.isInteger(timestep) || timestep < 0 || timestep >= TOTAL_STEPS) {
      throw new Error(`timestep ${timestep} outside [0, ${TOTAL_STEPS})`);
    }
    if (!Number.isInteger(block) || block < 0 || block >= NUM_BLOCKS) {
      throw new Error(`block ${block} outside [0, ${NUM_BLOCKS}) for model ${this.name}`);
    }
    const { grid, tokens } = this.encode(video);
    const noised = this.addNoise(tokens, timestep, seed);
    const text = this.textTokens(prompt);
    const nText = text.length / LATENT_CHANNELS;
    const nVideo = grid.f * grid.h * grid.w;
    const n = nText + nVideo;

    const sequence = new Float64Array(n * LATENT_CHANNELS);
    sequence.set(text, 0);
    sequence.set(noised, text.length);

    const averaged = new Float64Array(nVideo * nVideo);
    const scale = 1 / Math.sqrt(LATENT_CHANNELS);
    for (let head = 0; head < NUM_HEADS; head++) {
      const wq = new Rng(`${this.name}/block${block}/head${head}/q`).fillGaussian(
        new Float64Array(LATENT_CHANNELS * LATENT_CHANNELS),
      );
      const wk = new Rng(`${this.name}/block${block}/head${head}/k`).fillGaussian(
        new Float64Array(LATENT_CHANNELS * LATENT_CHANNELS),
      );
      const q = project(sequence, n, wq);
      const k = project(sequence, n, wk);
      const scores = new Float64Array(n);
      for (let row = nText; row < n; row++) {
        for (let col = 0; col < n; col++) {
          let dot = 0;
          for (let c = 0; c < LATENT_CHANNELS; c++) {
            dot += q[row * LATENT_CHANNELS + c] * k[col * LATENT_CHANNELS + c];
          }
          scores[col] = dot * scale;
        }
        const probs = softmaxRow(scores);
        const outRow = (row - nText) * nVideo;
        for (let col = 0; col < nVideo; col++) {
          averaged[outRow + col] += probs[nText + col] / NUM_HEADS;
        }
      }
    }
    return { grid, attention: averaged };
  }
}

function project(sequence: Float64Array, n: number, weights: Float64Array): Float64Array {
  const out = new Float64Array(n * LATENT_CHANNELS);
  const d = LATENT_CHANNELS;
  for (let i = 0; i < n; i++) {
    for (let row = 0; row < d; row++) {
      let acc = 0;
      for (let col = 0; col < d; col++) {
        acc += weights[row * d + col] * sequence[i * d + col];
      }
      out[i * d + row] = acc * (1 / Math.sqrt(d));
    }
  }
  return out;
}

const BACKENDS: Record<string, () => ModelBackend> = {
  reference: () => new ReferenceBackend(),
};

export function resolveBackend(model: string): ModelBackend {
  const factory = BACKENDS[model];
  if (!factory) {
    throw new Error(`unknown model ${JSON.stringify(model)}; available: ${Object.keys(BACKENDS).join(', ')}`);
  }
  return factory();
}
