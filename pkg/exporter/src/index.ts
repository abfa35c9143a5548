export * from './container.js';
export * from './rng.js';
export * from './backend.js';
export * from './features.js';
export * from './export.js';
