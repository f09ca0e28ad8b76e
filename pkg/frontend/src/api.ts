// Service client with request supersession: responses carry a sequence
// number and anything older than the newest issued request is discarded,
// and at most one synthesize request is in flight at a time (the newest
// pending body is sent when the active one settles).

import { SynthesisRequestBody } from "./request.js";

export interface SynthesisResult {
  seq: number;
  wav: ArrayBuffer;
  checkpointHash: string | null;
}

export interface ApiError {
  status: number;
  detail: string;
  /** field names extracted from a 422 validation body */
  fields: string[];
}

export interface ModelInfo {
  config: Record<string, unknown>;
  checkpoint_hash: string;
  feature_names: string[];
  loss_mode: string | null;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export function extractFieldNames(detail: unknown): string[] {
  if (!Array.isArray(detail)) return [];
  const fields: string[] = [];
  for (const item of detail) {
    const loc = (item as { loc?: unknown[] }).loc;
    if (Array.isArray(loc) && loc.length > 0) fields.push(String(loc[loc.length - 1]));
  }
  return fields;
}

export class SynthClient {
  private seq = 0;
  private delivered = 0;
  private inFlight = false;
  private queued: SynthesisRequestBody | undefined;

  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (url, init) => fetch(url, init),
    private onResult?: (r: SynthesisResult) => void,
    private onError?: (e: ApiError) => void,
  ) {}

  /** Number of requests issued so far (the latest wins). */
  get issued(): number {
    return this.seq;
  }

  requestSynthesis(body: SynthesisRequestBody): void {
    if (this.inFlight) {
      this.queued = body;
      return;
    }
    void this.send(body);
  }

  private async send(body: SynthesisRequestBody): Promise<void> {
    const seq = ++this.seq;
    this.inFlight = true;
    try {
      const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/synthesize`, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      });
      if (!resp.ok) {
        let detail: unknown = null;
        try {
          detail = (await resp.json()).detail;
        } catch {
          // non-JSON error body
        }
        this.onError?.({
          status: resp.status,
          detail: typeof detail === "string" ? detail : JSON.stringify(detail ?? ""),
          fields: extractFieldNames(detail),
        });
        return;
      }
      const wav = await resp.arrayBuffer();
      if (seq > this.delivered) {
        this.delivered = seq;
        this.onResult?.({
          seq,
          wav,
          checkpointHash: resp.headers.get("X-Checkpoint-Hash"),
        });
      }
    } catch (err) {
      this.onError?.({ status: 0, detail: String(err), fields: [] });
    } finally {
      this.inFlight = false;
      if (this.queued) {
        const next = this.queued;
        this.queued = undefined;
        void this.send(next);
      }
    }
  }

  async modelInfo(): Promise<ModelInfo> {
    const resp = await this.fetchImpl(`${this.baseUrl}/api/v1/model`);
    if (!resp.ok) throw new Error(`model info failed: ${resp.status}`);
    return (await resp.json()) as ModelInfo;
  }
}
