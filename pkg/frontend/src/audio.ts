// Minimal PCM16 mono WAV decoding (the only format the service emits) and
// the spectral math behind the visualizers. Kept DOM-free so it is testable.

export interface DecodedWav {
  samples: Float32Array;
  sampleRate: number;
}

export function decodeWavPcm16(buffer: ArrayBuffer): DecodedWav {
  const view = new DataView(buffer);
  const tag = (off: number) =>
    String.fromCharCode(view.getUint8(off), view.getUint8(off + 1),
                        view.getUint8(off + 2), view.getUint8(off + 3));
  if (buffer.byteLength < 12 || tag(0) !== "RIFF" || tag(8) !== "WAVE") {
    throw new Error("not a RIFF/WAVE buffer");
  }
  let pos = 12;
  let sampleRate = 0;
  let channels = 1;
  let data: Int16Array | undefined;
  while (pos + 8 <= buffer.byteLength) {
    const id = tag(pos);
    const size = view.getUint32(pos + 4, true);
    if (id === "fmt ") {
      const format = view.getUint16(pos + 8, true);
      channels = view.getUint16(pos + 10, true);
      sampleRate = view.getUint32(pos + 12, true);
      const bits = view.getUint16(pos + 22, true);
      if (format !== 1 || bits !== 16) throw new Error("expected 16-bit PCM");
    } else if (id === "data") {
      data = new Int16Array(buffer, pos + 8, Math.floor(size / 2));
    }
    pos += 8 + size + (size % 2);
  }
  if (!data || !sampleRate) throw new Error("missing fmt or data chunk");
  const frames = Math.floor(data.length / channels);
  const samples = new Float32Array(frames);
  for (let i = 0; i < frames; i++) {
    let acc = 0;
    for (let c = 0; c < channels; c++) acc += data[i * channels + c];
    samples[i] = acc / channels / 32768;
  }
  return { samples, sampleRate };
}

/** Iterative radix-2 FFT; re/im are modified in place. */
export function fft(re: Float64Array, im: Float64Array): void {
  const n = re.length;
  if ((n & (n - 1)) !== 0) throw new Error("FFT length must be a power of two");
  for (let i = 1, j = 0; i < n; i++) {
    let bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      [re[i], re[j]] = [re[j], re[i]];
      [im[i], im[j]] = [im[j], im[i]];
    }
  }
  for (let len = 2; len <= n; len <<= 1) {
    const ang = (-2 * Math.PI) / len;
    const wRe = Math.cos(ang);
    const wIm = Math.sin(ang);
    for (let i = 0; i < n; i += len) {
      let curRe = 1;
      let curIm = 0;
      for (let k = 0; k < len / 2; k++) {
        const uRe = re[i + k];
        const uIm = im[i + k];
        const vRe = re[i + k + len / 2] * curRe - im[i + k + len / 2] * curIm;
        const vIm = re[i + k + len / 2] * curIm + im[i + k + len / 2] * curRe;
        re[i + k] = uRe + vRe;
        im[i + k] = uIm + vIm;
        re[i + k + len / 2] = uRe - vRe;
        im[i + k + len / 2] = uIm - vIm;
        const nextRe = curRe * wRe - curIm * wIm;
        curIm = curRe * wIm + curIm * wRe;
        curRe = nextRe;
      }
    }
  }
}

/** Log-magnitude spectrogram (frames x bins), Hann window, for drawing. */
export function logSpectrogram(samples: Float32Array, frame = 1024, hop = 512): number[][] {
  const nFrames = Math.max(0, Math.floor((samples.length - frame) / hop) + 1);
  const window = new Float64Array(frame);
  for (let i = 0; i < frame; i++) window[i] = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / frame);
  const out: number[][] = [];
  for (let f = 0; f < nFrames; f++) {
    const re = new Float64Array(frame);
    const im = new Float64Array(frame);
    for (let i = 0; i < frame; i++) re[i] = samples[f * hop + i] * window[i];
    fft(re, im);
    const row = new Array<number>(frame / 2 + 1);
    for (let b = 0; b <= frame / 2; b++) {
      row[b] = 20 * Math.log10(Math.hypot(re[b], im[b]) + 1e-9);
    }
    out.push(row);
  }
  return out;
}
