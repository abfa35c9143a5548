/**
 * Export entry points: attention containers and feature/mask containers in
 * the toolkit's MAFT format.
 */

import { byteRecord, floatRecord, TensorRecord, writeContainer } from './container.js';
import { loadVideo, resolveBackend, LatentGrid } from './backend.js';
import { FEATURE_DIM, featureGrid, segmentForeground } from './features.js';

export interface ExportSpec {
  /** Backend identifier; "reference" is built in. */
  model: string;
  /** Noise timestep the attention is read at. */
  timestep: number;
  /** Transformer block index the attention is read from. */
  block: number;
  /** Container holding the reference `video` record. */
  videoPath: string;
  /** Container holding the target first frame; defaults to videoPath. */
  targetPath?: string;
  /** Segmentation prompt (attention export uses the empty prompt). */
  prompt: string;
  outPath: string;
  seed: number;
}

export const DEFAULT_TIMESTEP = 5;
export const DEFAULT_BLOCK = 18;

function metaShapeRecord(grid: LatentGrid): TensorRecord {
  return floatRecord('meta_shape', [3], [grid.f, grid.h, grid.w]);
}

/**
 * Write `attention` (head-averaged, text columns removed, rows not
 * renormalized) and `meta_shape` for the reference video.
 */
export async function exportAttention(spec: ExportSpec): Promise<LatentGrid> {
  const backend = resolveBackend(spec.model);
  const video = await loadVideo(spec.videoPath);
  const { grid, attention } = backend.attention(video, spec.timestep, spec.block, spec.prompt, spec.seed);
  const tokens = grid.f * grid.h * grid.w;
  await writeContainer(spec.outPath, [
    metaShapeRecord(grid),
    floatRecord('attention', [tokens, tokens], attention),
  ]);
  return grid;
}

/**
 * Write `features_ref` / `features_tgt` (resampled to the latent grid) and
 * binary `mask_ref` / `mask_tgt` for the first frames of the reference and
 * target videos. An empty segmentation is flagged with `mask_empty/<side>`
 * instead of failing.
 */
export async function exportFeaturesAndMasks(spec: ExportSpec): Promise<LatentGrid> {
  const backend = resolveBackend(spec.model);
  const refVideo = await loadVideo(spec.videoPath);
  const tgtVideo = await loadVideo(spec.targetPath ?? spec.videoPath);
  const grid = backend.latentGrid(refVideo);

  const records: TensorRecord[] = [metaShapeRecord(grid)];
  const sides: Array<['ref' | 'tgt', typeof refVideo]> = [
    ['ref', refVideo],
    ['tgt', tgtVideo],
  ];
  for (const [side, video] of sides) {
    const features = featureGrid(video, grid);
    const mask = segmentForeground(video, grid, spec.prompt);
    records.push(floatRecord(`features_${side}`, [grid.h, grid.w, FEATURE_DIM], features));
    records.push(byteRecord(`mask_${side}`, [grid.h, grid.w], mask));
    if (!mask.some((v) => v === 1)) {
      console.warn(`warning: segmentation produced an empty ${side} foreground`);
      records.push(byteRecord(`mask_empty/${side}`, [1], [1]));
    }
  }
  await writeContainer(spec.outPath, records);
  return grid;
}
