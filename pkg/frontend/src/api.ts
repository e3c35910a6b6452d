/** Typed client for the review-service HTTP API. The fetch implementation
 * is injected so component tests can run against a mock. */

import type {
  CatalogEntry,
  EditEvent,
  Hotspot,
  ImageInfo,
  SessionState,
  TabletInfo,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/** Server rejected an event because its seq does not extend the log. */
export class ConflictError extends Error {
  constructor(
    message: string,
    readonly lastSeq: number,
  ) {
    super(message);
    this.name = "ConflictError";
  }
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async getJson<T>(path: string): Promise<T> {
    const response = await this.fetchFn(`${this.base}${path}`);
    if (!response.ok) {
      throw new ApiError(`GET ${path} failed: ${response.status}`, response.status);
    }
    return (await response.json()) as T;
  }

  tablets(): Promise<TabletInfo[]> {
    return this.getJson("/api/tablets");
  }

  tabletImages(tabletId: string): Promise<ImageInfo[]> {
    return this.getJson(`/api/tablets/${encodeURIComponent(tabletId)}/images`);
  }

  catalog(): Promise<CatalogEntry[]> {
    return this.getJson("/api/catalog");
  }

  hotspots(imageId: string): Promise<{ image_id: string; hotspots: Hotspot[] }> {
    return this.getJson(`/api/images/${encodeURIComponent(imageId)}/hotspots`);
  }

  imageUrl(imageId: string): string {
    return `${this.base}/api/images/${encodeURIComponent(imageId)}`;
  }

  async createSession(sessionId?: string): Promise<SessionState> {
    const response = await this.fetchFn(`${this.base}/api/sessions`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(sessionId ? { session_id: sessionId } : {}),
    });
    if (!response.ok) {
      throw new ApiError(`create session failed: ${response.status}`, response.status);
    }
    return (await response.json()) as SessionState;
  }

  getSession(sessionId: string): Promise<SessionState> {
    return this.getJson(`/api/sessions/${encodeURIComponent(sessionId)}`);
  }

  /** Post one edit event; throws ConflictError on a stale sequence number. */
  async postEvent(
    sessionId: string,
    event: EditEvent,
  ): Promise<{ applied: number; last_seq: number }> {
    const response = await this.fetchFn(
      `${this.base}/api/sessions/${encodeURIComponent(sessionId)}/events`,
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(event),
      },
    );
    if (response.status === 409) {
      const body = (await response.json()) as { last_seq?: number };
      throw new ConflictError("stale sequence number", body.last_seq ?? -1);
    }
    if (!response.ok) {
      throw new ApiError(`event rejected: ${response.status}`, response.status);
    }
    return (await response.json()) as { applied: number; last_seq: number };
  }

  exportDataset(sessionId: string): Promise<unknown> {
    return this.getJson(`/api/sessions/${encodeURIComponent(sessionId)}/export`);
  }
}
