/** In-memory review service double: same event semantics as the server
 * (sequence locking, per-kind state updates), driving the ApiClient through
 * a fake fetch. */

import { ApiClient } from "../src/api.js";
import type { EditEvent, Hotspot, SessionState } from "../src/types.js";

export class MockService {
  hotspots = new Map<string, Hotspot>();
  lastSeq = 0;
  log: EditEvent[] = [];
  failNext: "conflict" | "error" | null = null;

  constructor(hotspots: Hotspot[]) {
    for (const h of hotspots) this.hotspots.set(h.hotspot_id, structuredClone(h));
  }

  state(): SessionState {
    return {
      session_id: "s1",
      last_seq: this.lastSeq,
      hotspots: [...this.hotspots.values()].map((h) => structuredClone(h)),
    };
  }

  applyEvent(event: EditEvent): { status: number; body: unknown } {
    if (this.failNext === "conflict") {
      this.failNext = null;
      return { status: 409, body: { error: "stale_seq", last_seq: this.lastSeq } };
    }
    if (this.failNext === "error") {
      this.failNext = null;
      return { status: 400, body: { detail: "injected failure" } };
    }
    if (event.seq !== this.lastSeq + 1) {
      return { status: 409, body: { error: "stale_seq", last_seq: this.lastSeq } };
    }
    const spot = this.hotspots.get(event.target);
    switch (event.kind) {
      case "move":
      case "resize":
        if (!spot) return { status: 400, body: { detail: "unknown target" } };
        spot.bbox = event.payload.bbox as Hotspot["bbox"];
        break;
      case "choose_class":
        if (!spot) return { status: 400, body: { detail: "unknown target" } };
        spot.chosen_class = event.payload.class_id as number;
        break;
      case "confirm":
        if (!spot) return { status: 400, body: { detail: "unknown target" } };
        if (spot.chosen_class === null) spot.chosen_class = spot.suggestions[0]?.[0] ?? null;
        spot.status = "confirmed";
        break;
      case "reject":
        if (!spot) return { status: 400, body: { detail: "unknown target" } };
        spot.status = "rejected";
        break;
      case "delete":
        this.hotspots.delete(event.target);
        break;
      case "create":
        this.hotspots.set(event.target, {
          hotspot_id: event.target,
          image_id: event.payload.image_id as string,
          bbox: event.payload.bbox as Hotspot["bbox"],
          score: 1,
          suggestions: [],
          chosen_class: (event.payload.class_id as number) ?? null,
          status: "unreviewed",
        });
        break;
    }
    this.lastSeq = event.seq;
    this.log.push(event);
    return { status: 200, body: { applied: event.seq, last_seq: this.lastSeq } };
  }

  fetch = async (url: string, init?: RequestInit): Promise<Response> => {
    const respond = (status: number, body: unknown) =>
      new Response(JSON.stringify(body), {
        status,
        headers: { "content-type": "application/json" },
      });
    if (url.endsWith("/api/sessions") && init?.method === "POST") {
      return respond(200, this.state());
    }
    if (url.match(/\/api\/sessions\/[^/]+$/)) {
      return respond(200, this.state());
    }
    if (url.match(/\/api\/sessions\/[^/]+\/events$/) && init?.method === "POST") {
      const event = JSON.parse(String(init.body)) as EditEvent;
      const { status, body } = this.applyEvent(event);
      return respond(status, body);
    }
    return respond(404, { detail: `no mock route for ${url}` });
  };

  client(): ApiClient {
    return new ApiClient("", this.fetch);
  }
}

let counter = 0;

export function makeHotspot(overrides: Partial<Hotspot> = {}): Hotspot {
  counter += 1;
  return {
    hotspot_id: `img-1/${counter}`,
    image_id: "img-1",
    bbox: [10, 10, 40, 30],
    score: 0.9,
    suggestions: [
      [3, 0.9],
      [1, 0.5],
      [7, 0.3],
      [2, 0.2],
      [0, 0.1],
    ],
    chosen_class: null,
    status: "unreviewed",
    ...overrides,
  };
}
