/** Typed fetch wrapper for the annotation service HTTP API. */

import type {
  Choice,
  NextPairResponse,
  PairStatus,
  PreferenceAck,
  ResolutionAck,
  SessionInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** The surface the session and review flows depend on (fakeable in tests). */
export interface AnnotationApi {
  session(): Promise<SessionInfo>;
  nextPair(): Promise<NextPairResponse>;
  imageUrl(imageId: string): string;
  submitPreference(
    pairId: string,
    choice: Choice,
    round?: number,
  ): Promise<PreferenceAck>;
  pairStatus(pairId: string): Promise<PairStatus>;
  submitResolution(
    pairId: string,
    finalChoice: Choice,
    rationale?: string,
  ): Promise<ResolutionAck>;
}

export class ApiClient implements AnnotationApi {
  constructor(
    private readonly baseUrl: string,
    private readonly token: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: {
        Authorization: `Bearer ${this.token}`,
        ...(body === undefined ? {} : { "Content-Type": "application/json" }),
      },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      throw new ApiError(response.status, await response.text());
    }
    return (await response.json()) as T;
  }

  session(): Promise<SessionInfo> {
    return this.request("GET", "/session");
  }

  nextPair(): Promise<NextPairResponse> {
    return this.request("GET", "/pairs/next");
  }

  imageUrl(imageId: string): string {
    return `${this.baseUrl}/images/${encodeURIComponent(imageId)}`;
  }

  submitPreference(
    pairId: string,
    choice: Choice,
    round?: number,
  ): Promise<PreferenceAck> {
    const body: Record<string, unknown> = { pair_id: pairId, choice };
    if (round !== undefined) {
      body.round = round;
    }
    return this.request("POST", "/preferences", body);
  }

  pairStatus(pairId: string): Promise<PairStatus> {
    return this.request("GET", `/pairs/${encodeURIComponent(pairId)}/status`);
  }

  submitResolution(
    pairId: string,
    finalChoice: Choice,
    rationale?: string,
  ): Promise<ResolutionAck> {
    const body: Record<string, unknown> = {
      pair_id: pairId,
      final_choice: finalChoice,
    };
    if (rationale !== undefined) {
      body.rationale = rationale;
    }
    return this.request("POST", "/resolutions", body);
  }
}
