#!/usr/bin/env node
/**
 * Command line front-end: `export-attn` and `export-feat` write MAFT
 * containers the primary toolkit consumes directly.
 */

import { DEFAULT_BLOCK, DEFAULT_TIMESTEP, ExportSpec, exportAttention, exportFeaturesAndMasks } from './export.js';

const USAGE = `usage:
  motionkit-export export-attn --video <container> --out <container>
      [--model reference] [--timestep ${DEFAULT_TIMESTEP}] [--block ${DEFAULT_BLOCK}] [--seed 0]
  motionkit-export export-feat --video <container> --out <container>
      [--target <container>] [--prompt <text>] [--model reference] [--seed 0]

The --video/--target containers must hold a float32 "video" record shaped
(F, H, W[, C]). export-attn always runs the model with the empty prompt;
--prompt only steers mask segmentation in export-feat.`;

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    const key = argv[i];
    if (!key.startsWith('--') || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got ${key}`);
    }
    flags.set(key.slice(2), argv[i + 1]);
  }
  return flags;
}

function requireFlag(flags: Map<string, string>, name: string): string {
  const value = flags.get(name);
  if (value === undefined) {
    throw new Error(`missing required flag --${name}`);
  }
  return value;
}

function intFlag(flags: Map<string, string>, name: string, fallback: number): number {
  const raw = flags.get(name);
  if (raw === undefined) {
    return fallback;
  }
  const value = Number(raw);
  if (!Number.isInteger(value)) {
    throw new Error(`--${name} must be an integer, got ${raw}`);
  }
  return value;
}

function buildSpec(flags: Map<string, string>, emptyPrompt: boolean): ExportSpec {
  return {
    model: flags.get('model') ?? 'reference',
    timestep: intFlag(flags, 'timestep', DEFAULT_TIMESTEP),
    block: intFlag(flags, 'block', DEFAULT_BLOCK),
    videoPath: requireFlag(flags, 'video'),
    targetPath: flags.get('target'),
    prompt: emptyPrompt ? '' : flags.get('prompt') ?? '',
    outPath: requireFlag(flags, 'out'),
    seed: intFlag(flags, 'seed', 0),
  };
}

export async function main(argv: string[]): Promise<number> {
  const [command, ...rest] = argv;
  if (command === undefined || command === '--help' || command === '-h') {
    console.log(USAGE);
    return 0;
  }
  try {
    const flags = parseFlags(rest);
    if (command === 'export-attn') {
      const grid = await exportAttention(buildSpec(flags, true));
      console.log(`wrote attention for latent grid f=${grid.f} h=${grid.h} w=${grid.w}`);
      return 0;
    }
    if (command === 'export-feat') {
      const grid = await exportFeaturesAndMasks(buildSpec(flags, false));
      console.log(`wrote features and masks at h=${grid.h} w=${grid.w}`);
      return 0;
    }
    console.error(`unknown command ${command}\n${USAGE}`);
    return 2;
  } catch (error) {
    console.error(`error: ${error instanceof Error ? error.message : error}`);
    return 1;
  }
}

const isDirectRun = process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split('/').pop() ?? '');
if (isDirectRun) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
