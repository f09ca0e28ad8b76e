// Control surface wiring: sliders and envelope editor feed a debounced
// synthesize call; responses are auditioned, visualized and comparable A/B.

import { ApiError, SynthClient, SynthesisResult } from "./api.js";
import { decodeWavPcm16, logSpectrogram } from "./audio.js";
import { debounce } from "./debounce.js";
import {
  AD_DEFAULTS,
  AD_LIMITS,
  AdParams,
  clampAd,
  envelopePreview,
} from "./envelope.js";
import {
  Preset,
  PresetStore,
  exportPreset,
  importPreset,
  makePreset,
  needsCheckpointWarning,
  presetToState,
} from "./presets.js";
import {
  FEATURE_NAMES,
  FeatureName,
  UiState,
  buildRequest,
  defaultFeatures,
} from "./request.js";

const SERVICE_URL = (window as { PSYNTH_SERVICE_URL?: string }).PSYNTH_SERVICE_URL ??
  "http://127.0.0.1:8000";
const DEBOUNCE_MS = 150;

interface Slot {
  preset: Preset;
  wav: ArrayBuffer;
}

class App {
  state: UiState = { features: defaultFeatures(), envelope: { ...AD_DEFAULTS } };
  lastWav: ArrayBuffer | null = null;
  checkpointHash: string | null = null;
  slotA: Slot | null = null;
  slotB: Slot | null = null;
  audioCtx: AudioContext | null = null;

  client = new SynthClient(
    SERVICE_URL,
    (url, init) => fetch(url, init),
    (r) => this.onSynthesized(r),
    (e) => this.onError(e),
  );
  store = new PresetStore(window.localStorage);
  scheduleSynthesis = debounce(() => {
    this.client.requestSynthesis(buildRequest(this.state));
  }, DEBOUNCE_MS);

  private sliders = new Map<FeatureName, HTMLInputElement>();
  private readouts = new Map<FeatureName, HTMLElement>();

  mount(root: HTMLElement): void {
    root.innerHTML = `
      <h1>psynth control surface</h1>
      <p id="status" class="status"></p>
      <div class="layout">
        <section class="panel" id="sliders"><h2>Timbre</h2></section>
        <section class="panel">
          <h2>Envelope</h2>
          <canvas id="env-canvas" width="360" height="140"></canvas>
          <label>attack <input id="attack" type="range" min="0" max="100" step="0.5"></label>
          <span id="attack-out"></span>
          <label>decay <input id="decay" type="range" min="10" max="900" step="1"></label>
          <span id="decay-out"></span>
        </section>
        <section class="panel">
          <h2>Audition</h2>
          <button id="replay">replay</button>
          <canvas id="wave-canvas" width="360" height="110"></canvas>
          <canvas id="spec-canvas" width="360" height="140"></canvas>
        </section>
        <section class="panel">
          <h2>A / B</h2>
          <button id="set-a">hold as A</button>
          <button id="set-b">hold as B</button>
          <button id="play-a" disabled>play A</button>
          <button id="play-b" disabled>play B</button>
          <button id="export-ab" disabled>export pair</button>
        </section>
        <section class="panel">
          <h2>Presets</h2>
          <input id="preset-name" placeholder="name">
          <button id="preset-save">save</button>
          <ul id="preset-list"></ul>
          <button id="preset-export" disabled>export selected</button>
          <label class="import">import <input id="preset-import" type="file" accept=".json"></label>
        </section>
      </div>`;

    const sliderBox = root.querySelector("#sliders") as HTMLElement;
    for (const name of FEATURE_NAMES) {
      const row = document.createElement("label");
      row.textContent = name + " ";
      const input = document.createElement("input");
      input.type = "range";
      input.min = "0";
      input.max = "1";
      input.step = "0.01";
      input.value = String(this.state.features[name]);
      const out = document.createElement("span");
      out.textContent = input.value;
      input.addEventListener("input", () => {
        this.state.features[name] = Number(input.value);
        out.textContent = input.value;
        this.scheduleSynthesis();
      });
      row.appendChild(input);
      row.appendChild(out);
      sliderBox.appendChild(row);
      this.sliders.set(name, input);
      this.readouts.set(name, out);
    }

    const attack = root.querySelector("#attack") as HTMLInputElement;
    const decay = root.querySelector("#decay") as HTMLInputElement;
    attack.value = String(this.state.envelope.attackMs);
    decay.value = String(this.state.envelope.decayMs);
    const onEnvelope = () => {
      this.state.envelope = clampAd({
        attackMs: Number(attack.value),
        decayMs: Number(decay.value),
        amplitude: this.state.envelope.amplitude,
      });
      this.drawEnvelope();
      this.scheduleSynthesis();
    };
    attack.addEventListener("input", onEnvelope);
    decay.addEventListener("input", onEnvelope);

    (root.querySelector("#replay") as HTMLButtonElement).addEventListener("click", () => {
      if (this.lastWav) void this.play(this.lastWav);
    });
    (root.querySelector("#set-a") as HTMLButtonElement).addEventListener("click",
      () => this.hold("A"));
    (root.querySelector("#set-b") as HTMLButtonElement).addEventListener("click",
      () => this.hold("B"));
    (root.querySelector("#play-a") as HTMLButtonElement).addEventListener("click", () => {
      if (this.slotA) void this.play(this.slotA.wav);
    });
    (root.querySelector("#play-b") as HTMLButtonElement).addEventListener("click", () => {
      if (this.slotB) void this.play(this.slotB.wav);
    });
    (root.querySelector("#export-ab") as HTMLButtonElement).addEventListener("click",
      () => this.exportPair());

    (root.querySelector("#preset-save") as HTMLButtonElement).addEventListener("click",
      () => this.savePreset());
    (root.querySelector("#preset-export") as HTMLButtonElement).addEventListener("click",
      () => this.exportSelectedPreset());
    (root.querySelector("#preset-import") as HTMLInputElement).addEventListener("change",
      (ev) => void this.importPresetFile(ev));

    this.drawEnvelope();
    this.refreshPresetList();
    void this.client.modelInfo()
      .then((info) => {
        this.checkpointHash = info.checkpoint_hash;
        this.setStatus(`model ${info.config["encoder_layers"]} layers, `
          + `loss ${info.loss_mode ?? "?"}, checkpoint ${info.checkpoint_hash.slice(0, 12)}`);
        this.refreshPresetList();
      })
      .catch(() => this.setStatus("service unreachable; controls stay live", true));
    this.scheduleSynthesis();
  }

  setStatus(text: string, isError = false): void {
    const el = document.querySelector("#status") as HTMLElement;
    el.textContent = text;
    el.classList.toggle("error", isError);
  }

  onSynthesized(result: SynthesisResult): void {
    this.lastWav = result.wav;
    this.checkpointHash = result.checkpointHash ?? this.checkpointHash;
    for (const name of FEATURE_NAMES) {
      this.sliders.get(name)?.classList.remove("invalid");
    }
    this.setStatus(`rendered #${result.seq}`);
    void this.play(result.wav);
    this.drawWave(result.wav);
  }

  onError(err: ApiError): void {
    if (err.status === 422) {
      for (const field of err.fields) {
        this.sliders.get(field as FeatureName)?.classList.add("invalid");
      }
      this.setStatus(`rejected: ${err.detail}`, true);
    } else {
      this.setStatus(`service error (${err.status || "network"}); retrying on next edit`, true);
    }
  }

  async play(wav: ArrayBuffer): Promise<void> {
    this.audioCtx = this.audioCtx ?? new AudioContext();
    const decoded = decodeWavPcm16(wav.slice(0));
    const buffer = this.audioCtx.createBuffer(1, decoded.samples.length, decoded.sampleRate);
    buffer.copyToChannel(decoded.samples, 0);
    const src = this.audioCtx.createBufferSource();
    src.buffer = buffer;
    src.connect(this.audioCtx.destination);
    src.start();
  }

  drawEnvelope(): void {
    const canvas = document.querySelector("#env-canvas") as HTMLCanvasElement;
    const ctx = canvas.getContext("2d")!;
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const curve = envelopePreview(this.state.envelope, canvas.width);
    ctx.beginPath();
    for (let x = 0; x < canvas.width; x++) {
      const y = canvas.height - 4 - curve[x] * (canvas.height - 8);
      if (x === 0) ctx.moveTo(x, y);
      else ctx.lineTo(x, y);
    }
    ctx.strokeStyle = "#2a7";
    ctx.lineWidth = 2;
    ctx.stroke();
    (document.querySelector("#attack-out") as HTMLElement).textContent =
      `${this.state.envelope.attackMs.toFixed(1)} ms`;
    (document.querySelector("#decay-out") as HTMLElement).textContent =
      `${this.state.envelope.decayMs.toFixed(0)} ms`;
  }

  drawWave(wav: ArrayBuffer): void {
    const { samples } = decodeWavPcm16(wav.slice(0));
    const waveCanvas = document.querySelector("#wave-canvas") as HTMLCanvasElement;
    const wctx = waveCanvas.getContext("2d")!;
    wctx.clearRect(0, 0, waveCanvas.width, waveCanvas.height);
    wctx.beginPath();
    const mid = waveCanvas.height / 2;
    const step = Math.max(1, Math.floor(samples.length / waveCanvas.width));
    for (let x = 0; x < waveCanvas.width; x++) {
      const v = samples[Math.min(x * step, samples.length - 1)];
      const y = mid - v * (mid - 2);
      if (x === 0) wctx.moveTo(x, y);
      else wctx.lineTo(x, y);
    }
    wctx.strokeStyle = "#27c";
    wctx.stroke();

    const spec = logSpectrogram(samples);
    const specCanvas = document.querySelector("#spec-canvas") as HTMLCanvasElement;
    const sctx = specCanvas.getContext("2d")!;
    sctx.clearRect(0, 0, specCanvas.width, specCanvas.height);
    if (spec.length === 0) return;
    const bins = spec[0].length;
    const cellW = specCanvas.width / spec.length;
    const cellH = specCanvas.height / bins;
    for (let f = 0; f < spec.length; f++) {
      for (let b = 0; b < bins; b++) {
        const db = spec[f][b];
        const level = Math.max(0, Math.min(1, (db + 100) / 100));
        sctx.fillStyle = `hsl(${240 - 240 * level}, 80%, ${10 + 45 * level}%)`;
        sctx.fillRect(f * cellW, specCanvas.height - (b + 1) * cellH, cellW + 1, cellH + 1);
      }
    }
  }

  hold(slot: "A" | "B"): void {
    if (!this.lastWav) return;
    const preset = makePreset(`slot-${slot}`, this.state.features, this.state.envelope,
                              this.checkpointHash);
    const entry = { preset, wav: this.lastWav.slice(0) };
    if (slot === "A") this.slotA = entry;
    else this.slotB = entry;
    (document.querySelector(`#play-${slot.toLowerCase()}`) as HTMLButtonElement).disabled =
      false;
    (document.querySelector("#export-ab") as HTMLButtonElement).disabled =
      !(this.slotA && this.slotB);
  }

  exportPair(): void {
    if (!this.slotA || !this.slotB) return;
    this.download("psynth-ab.json", JSON.stringify(
      { a: this.slotA.preset, b: this.slotB.preset }, null, 2));
  }

  savePreset(): void {
    const nameInput = document.querySelector("#preset-name") as HTMLInputElement;
    const name = nameInput.value.trim();
    if (!name) {
      this.setStatus("preset needs a name", true);
      return;
    }
    this.store.save(makePreset(name, this.state.features, this.state.envelope,
                               this.checkpointHash));
    this.refreshPresetList();
  }

  loadPreset(preset: Preset): void {
    const state = presetToState(preset);
    this.state = { features: state.features, envelope: clampAd(state.envelope) };
    for (const name of FEATURE_NAMES) {
      const slider = this.sliders.get(name)!;
      slider.value = String(this.state.features[name]);
      this.readouts.get(name)!.textContent = slider.value;
    }
    (document.querySelector("#attack") as HTMLInputElement).value =
      String(this.state.envelope.attackMs);
    (document.querySelector("#decay") as HTMLInputElement).value =
      String(this.state.envelope.decayMs);
    this.drawEnvelope();
    this.scheduleSynthesis();
  }

  refreshPresetList(): void {
    const list = document.querySelector("#preset-list") as HTMLElement;
    list.innerHTML = "";
    for (const preset of this.store.list()) {
      const li = document.createElement("li");
      const load = document.createElement("button");
      load.textContent = preset.name;
      load.addEventListener("click", () => this.loadPreset(preset));
      li.appendChild(load);
      if (needsCheckpointWarning(preset, this.checkpointHash)) {
        const badge = document.createElement("span");
        badge.className = "badge";
        badge.title = "saved against a different checkpoint";
        badge.textContent = "!";
        li.appendChild(badge);
      }
      const del = document.createElement("button");
      del.textContent = "x";
      del.addEventListener("click", () => {
        this.store.remove(preset.name);
        this.refreshPresetList();
      });
      li.appendChild(del);
      list.appendChild(li);
      li.addEventListener("click", () => {
        (document.querySelector("#preset-name") as HTMLInputElement).value = preset.name;
        (document.querySelector("#preset-export") as HTMLButtonElement).disabled = false;
      });
    }
  }

  exportSelectedPreset(): void {
    const name = (document.querySelector("#preset-name") as HTMLInputElement).value.trim();
    const preset = this.store.get(name);
    if (preset) this.download(`${preset.name}.preset.json`, exportPreset(preset));
  }

  async importPresetFile(ev: Event): Promise<void> {
    const input = ev.target as HTMLInputElement;
    const file = input.files?.[0];
    if (!file) return;
    try {
      const preset = importPreset(await file.text());
      this.store.save(preset);
      this.refreshPresetList();
      this.setStatus(`imported preset ${preset.name}`);
    } catch (err) {
      this.setStatus(`import failed: ${err}`, true);
    } finally {
      input.value = "";
    }
  }

  download(filename: string, text: string): void {
    const blob = new Blob([text], { type: "application/json" });
    const a = document.createElement("a");
    a.href = URL.createObjectURL(blob);
    a.download = filename;
    a.click();
    URL.revokeObjectURL(a.href);
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  new App().mount(document.getElementById("app")!);
}

export { App };
