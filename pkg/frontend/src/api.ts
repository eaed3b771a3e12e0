/** Thin typed client over the synthesis service HTTP API. */

import type { ModelInfo, SparseResponse, SynthesizeBody } from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(`service ${status}: ${detail}`);
  }
}

type Fetch = typeof fetch;

export class ApiClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: Fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const resp = await this.fetchImpl(this.baseUrl + path, init);
    if (!resp.ok) {
      let detail = resp.statusText;
      try {
        const body = await resp.json();
        if (body && typeof body.detail === "string") detail = body.detail;
      } catch {
        /* non-JSON error body; keep the status text */
      }
      throw new ApiError(resp.status, detail);
    }
    return resp;
  }

  async model(): Promise<ModelInfo> {
    return (await this.request("/model")).json();
  }

  async mapSeed(seed: number): Promise<number[]> {
    const resp = await this.request("/map", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ seed }),
    });
    return (await resp.json()).w;
  }

  async synthesizeSparse(body: SynthesizeBody): Promise<SparseResponse> {
    const resp = await this.request("/synthesize", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ...body, mode: "sparse-json" }),
    });
    return resp.json();
  }

  async synthesizePng(body: SynthesizeBody): Promise<Uint8Array> {
    const resp = await this.request("/synthesize", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ ...body, mode: "png" }),
    });
    return new Uint8Array(await resp.arrayBuffer());
  }
}
