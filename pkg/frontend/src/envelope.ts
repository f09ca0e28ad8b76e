// Attack/decay envelope math, mirroring the server's closed form exactly:
// linear rise to `amplitude` over the attack, then exponential decay with
// time constant `decayMs`. Sampled at 16 kHz.

export const SAMPLE_RATE = 16000;
export const ENVELOPE_LENGTH = 16000;

export interface AdParams {
  attackMs: number;
  decayMs: number;
  amplitude: number;
}

export const AD_LIMITS = {
  attackMs: { min: 0, max: 100 },
  decayMs: { min: 10, max: 900 },
  amplitude: { min: 0.01, max: 1 },
} as const;

export const AD_DEFAULTS: AdParams = { attackMs: 5, decayMs: 50, amplitude: 1.0 };

export function clampAd(params: AdParams): AdParams {
  const clamp = (v: number, lo: number, hi: number) => Math.min(Math.max(v, lo), hi);
  return {
    attackMs: clamp(params.attackMs, AD_LIMITS.attackMs.min, AD_LIMITS.attackMs.max),
    decayMs: clamp(params.decayMs, AD_LIMITS.decayMs.min, AD_LIMITS.decayMs.max),
    amplitude: clamp(params.amplitude, AD_LIMITS.amplitude.min, AD_LIMITS.amplitude.max),
  };
}

/** Envelope value at integer sample index n; identical to the server formula. */
export function envelopeAt(params: AdParams, n: number): number {
  const attackSamples = Math.round((params.attackMs / 1000) * SAMPLE_RATE);
  const decaySamples = (params.decayMs / 1000) * SAMPLE_RATE;
  if (attackSamples === 0) {
    return params.amplitude * Math.exp(-n / decaySamples);
  }
  if (n <= attackSamples) {
    return params.amplitude * Math.min(n / attackSamples, 1);
  }
  return params.amplitude * Math.exp(-(n - attackSamples) / decaySamples);
}

/** Preview curve of `points` samples spread over the full envelope length. */
export function envelopePreview(params: AdParams, points = 200): Float64Array {
  const out = new Float64Array(points);
  for (let i = 0; i < points; i++) {
    const n = Math.round((i * (ENVELOPE_LENGTH - 1)) / (points - 1));
    out[i] = envelopeAt(params, n);
  }
  return out;
}
