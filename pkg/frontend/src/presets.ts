// Preset persistence: browser local storage plus JSON file import/export.
// Schema "preset-v1"; presets saved under a different checkpoint get a
// warning badge instead of being rejected.

import { AdParams } from "./envelope.js";
import { FEATURE_NAMES, Features, validateFeatures } from "./request.js";

export const PRESET_VERSION = "preset-v1";
const STORAGE_KEY = "psynth.presets";

export interface Preset {
  version: typeof PRESET_VERSION;
  name: string;
  features: Features;
  envelope: { attack_ms: number; decay_ms: number; amplitude: number };
  created_at: string;
  checkpoint_hash: string | null;
}

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export function makePreset(
  name: string,
  features: Features,
  envelope: AdParams,
  checkpointHash: string | null,
  now: () => string = () => new Date().toISOString(),
): Preset {
  return {
    version: PRESET_VERSION,
    name,
    features: { ...features },
    envelope: {
      attack_ms: envelope.attackMs,
      decay_ms: envelope.decayMs,
      amplitude: envelope.amplitude,
    },
    created_at: now(),
    checkpoint_hash: checkpointHash,
  };
}

export function validatePreset(doc: unknown): Preset {
  const p = doc as Preset;
  if (!p || p.version !== PRESET_VERSION) {
    throw new Error(`not a ${PRESET_VERSION} document`);
  }
  if (typeof p.name !== "string" || !p.name) throw new Error("preset needs a name");
  const badFields = validateFeatures(p.features ?? ({} as Features));
  if (badFields.length > 0) throw new Error(`invalid features: ${badFields.join(", ")}`);
  const env = p.envelope;
  if (
    !env ||
    !Number.isFinite(env.attack_ms) ||
    !Number.isFinite(env.decay_ms) ||
    env.decay_ms <= 0 ||
    !(env.amplitude > 0 && env.amplitude <= 1)
  ) {
    throw new Error("invalid envelope parameters");
  }
  return p;
}

export function exportPreset(preset: Preset): string {
  return JSON.stringify(preset, null, 2);
}

export function importPreset(text: string): Preset {
  return validatePreset(JSON.parse(text));
}

/** True when the preset was saved against a different checkpoint. */
export function needsCheckpointWarning(preset: Preset, currentHash: string | null): boolean {
  return preset.checkpoint_hash !== null && currentHash !== null &&
    preset.checkpoint_hash !== currentHash;
}

export class PresetStore {
  constructor(private storage: StorageLike) {}

  list(): Preset[] {
    const raw = this.storage.getItem(STORAGE_KEY);
    if (!raw) return [];
    try {
      const docs = JSON.parse(raw) as unknown[];
      return docs.map(validatePreset);
    } catch {
      return [];
    }
  }

  save(preset: Preset): void {
    const all = this.list().filter((p) => p.name !== preset.name);
    all.push(validatePreset(preset));
    all.sort((a, b) => a.name.localeCompare(b.name));
    this.storage.setItem(STORAGE_KEY, JSON.stringify(all));
  }

  get(name: string): Preset | undefined {
    return this.list().find((p) => p.name === name);
  }

  remove(name: string): void {
    this.storage.setItem(
      STORAGE_KEY,
      JSON.stringify(this.list().filter((p) => p.name !== name)),
    );
  }
}

export function presetToState(preset: Preset): { features: Features; envelope: AdParams } {
  const features = {} as Features;
  for (const name of FEATURE_NAMES) features[name] = preset.features[name];
  return {
    features,
    envelope: {
      attackMs: preset.envelope.attack_ms,
      decayMs: preset.envelope.decay_ms,
      amplitude: preset.envelope.amplitude,
    },
  };
}
