import { describe, expect, it } from "vitest";

import { decodeWavPcm16, fft, logSpectrogram } from "../src/audio.js";

function pcm16Wav(samples: number[], rate = 16000): ArrayBuffer {
  const data = new Int16Array(samples.map((v) => Math.round(v * 32768)));
  const buffer = new ArrayBuffer(44 + data.byteLength);
  const view = new DataView(buffer);
  const write = (off: number, text: string) => {
    for (let i = 0; i < text.length; i++) view.setUint8(off + i, text.charCodeAt(i));
  };
  write(0, "RIFF");
  view.setUint32(4, 36 + data.byteLength, true);
  write(8, "WAVE");
  write(12, "fmt ");
  view.setUint32(16, 16, true);
  view.setUint16(20, 1, true);
  view.setUint16(22, 1, true);
  view.setUint32(24, rate, true);
  view.setUint32(28, rate * 2, true);
  view.setUint16(32, 2, true);
  view.setUint16(34, 16, true);
  write(36, "data");
  view.setUint32(40, data.byteLength, true);
  new Int16Array(buffer, 44).set(data);
  return buffer;
}

describe("decodeWavPcm16", () => {
  it("recovers samples within one quantization step", () => {
    const values = [0, 0.5, -0.25, 0.999];
    const decoded = decodeWavPcm16(pcm16Wav(values));
    expect(decoded.sampleRate).toBe(16000);
    expect(decoded.samples.length).toBe(4);
    for (let i = 0; i < values.length; i++) {
      expect(Math.abs(decoded.samples[i] - values[i])).toBeLessThanOrEqual(1 / 32768);
    }
  });

  it("rejects non-wav buffers", () => {
    expect(() => decodeWavPcm16(new TextEncoder().encode("junk data!").buffer))
      .toThrow(/RIFF/);
  });
});

describe("fft", () => {
  it("locates a pure tone in the right bin", () => {
    const n = 1024;
    const re = new Float64Array(n);
    const im = new Float64Array(n);
    for (let i = 0; i < n; i++) re[i] = Math.sin((2 * Math.PI * 64 * i) / n);
    fft(re, im);
    let best = 0;
    for (let b = 1; b <= n / 2; b++) {
      if (Math.hypot(re[b], im[b]) > Math.hypot(re[best], im[best])) best = b;
    }
    expect(best).toBe(64);
  });

  it("rejects non-power-of-two lengths", () => {
    expect(() => fft(new Float64Array(12), new Float64Array(12))).toThrow();
  });
});

describe("logSpectrogram", () => {
  it("emits the expected frame count and low-frequency dominance for a kick", () => {
    const n = 16000;
    const samples = new Float32Array(n);
    for (let i = 0; i < n; i++) {
      samples[i] = 0.8 * Math.exp(-i / 4000) * Math.sin((2 * Math.PI * 60 * i) / 16000);
    }
    const spec = logSpectrogram(samples);
    expect(spec.length).toBe(30);
    const low = spec[0].slice(1, 10).reduce((a, b) => a + b, 0);
    const high = spec[0].slice(200, 209).reduce((a, b) => a + b, 0);
    expect(low).toBeGreaterThan(high);
  });
});
