/**
 * Typed client for the inpainting HTTP API (/api/v1).
 *
 * The fetch implementation is injectable so tests can run against a stub;
 * requests are cancellable through AbortController.
 */

import type { Score } from "./tokenText.js";

export interface InpaintRequestBody {
  measures: Score;
  mask: { start_measure: number; count: number };
  num_samples: number;
  seed?: number;
  z_mode?: "sample" | "mean";
}

export interface InpaintSample {
  measures: Score;
  seed: number;
}

export interface InpaintResponseBody {
  samples: InpaintSample[];
  mask: { start_measure: number; count: number };
  z_mode: string;
  model: { bridge_checkpoint_sha256: string; vae_checkpoint_sha256: string };
}

export interface ModelInfo {
  bridge_checkpoint_sha256: string;
  vae_checkpoint_sha256: string;
  vocab_size: number;
  latent_dim: number;
  context_mode: string;
}

export interface ApiErrorBody {
  code: string;
  message: string;
  field: string | null;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly body: ApiErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class InpaintClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, body as ApiErrorBody);
    }
    return body as T;
  }

  health(): Promise<{ status: string; model_loaded: boolean }> {
    return this.request("/api/v1/health");
  }

  modelInfo(): Promise<ModelInfo> {
    return this.request("/api/v1/model");
  }

  inpaint(body: InpaintRequestBody, signal?: AbortSignal): Promise<InpaintResponseBody> {
    return this.request("/api/v1/inpaint", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
  }
}
