// Pure mapping from UI state to the service's synthesis request body.
// The same state must always serialize to the identical JSON string.

import { AdParams } from "./envelope.js";

export const FEATURE_NAMES = [
  "hardness",
  "depth",
  "brightness",
  "roughness",
  "boominess",
  "warmth",
  "sharpness",
] as const;

export type FeatureName = (typeof FEATURE_NAMES)[number];
export type Features = Record<FeatureName, number>;

export interface UiState {
  features: Features;
  envelope: AdParams;
}

export interface SynthesisRequestBody {
  features: Features;
  envelope: { kind: "ad"; attack_ms: number; decay_ms: number; amplitude: number };
}

export function defaultFeatures(): Features {
  const out = {} as Features;
  for (const name of FEATURE_NAMES) out[name] = 0.5;
  return out;
}

export function validateFeatures(features: Features): string[] {
  const bad: string[] = [];
  for (const name of FEATURE_NAMES) {
    const v = features[name];
    if (typeof v !== "number" || !Number.isFinite(v) || v < 0 || v > 1) bad.push(name);
  }
  return bad;
}

export function buildRequest(state: UiState): SynthesisRequestBody {
  const features = {} as Features;
  for (const name of FEATURE_NAMES) features[name] = state.features[name];
  return {
    features,
    envelope: {
      kind: "ad",
      attack_ms: state.envelope.attackMs,
      decay_ms: state.envelope.decayMs,
      amplitude: state.envelope.amplitude,
    },
  };
}

export function serializeRequest(state: UiState): string {
  return JSON.stringify(buildRequest(state));
}
