/** Session store with optimistic edits.
 *
 * An edit is applied locally the moment the user gestures, then posted to
 * the service; edits queue and drain strictly in sequence order, one in
 * flight at a time. A server conflict (stale seq) rolls back every pending
 * optimistic edit and resynchronizes from the server, so the UI never keeps
 * showing an edit the server rejected. */

import { ApiClient, ConflictError } from "./api.js";
import type { EditEvent, EditKind, Hotspot, SessionState } from "./types.js";

interface PendingEdit {
  kind: EditKind;
  target: string;
  payload: Record<string, unknown>;
  /** Snapshot for rollback: hotspot state before the edit (null = absent). */
  snapshot: Hotspot | null;
}

export type StoreListener = () => void;

export class SessionStore {
  hotspots = new Map<string, Hotspot>();
  lastSeq = 0;
  selectedId: string | null = null;
  conflict = false;

  private pending: PendingEdit[] = [];
  private draining = false;
  private listeners: StoreListener[] = [];

  constructor(
    private readonly api: ApiClient,
    public sessionId: string,
  ) {}

  static async open(api: ApiClient, sessionId?: string): Promise<SessionStore> {
    const state = sessionId
      ? await api.getSession(sessionId).catch(() => api.createSession(sessionId))
      : await api.createSession();
    const store = new SessionStore(api, state.session_id);
    store.loadState(state);
    return store;
  }

  loadState(state: SessionState): void {
    this.hotspots = new Map(state.hotspots.map((h) => [h.hotspot_id, { ...h }]));
    this.lastSeq = state.last_seq;
    this.notify();
  }

  onChange(listener: StoreListener): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  get pendingCount(): number {
    return this.pending.length;
  }

  select(hotspotId: string | null): void {
    this.selectedId = hotspotId;
    this.notify();
  }

  /** Queue one edit: optimistic local apply now, server post in order. */
  submit(kind: EditKind, target: string, payload: Record<string, unknown> = {}): void {
    const before = this.hotspots.get(target);
    const snapshot = before ? { ...before } : null;
    this.applyLocal(kind, target, payload);
    this.pending.push({ kind, target, payload, snapshot });
    this.notify();
    void this.drain();
  }

  private applyLocal(kind: EditKind, target: string, payload: Record<string, unknown>): void {
    const spot = this.hotspots.get(target);
    switch (kind) {
      case "move":
      case "resize":
        if (spot) spot.bbox = payload.bbox as Hotspot["bbox"];
        break;
      case "delete":
        this.hotspots.delete(target);
        if (this.selectedId === target) this.selectedId = null;
        break;
      case "choose_class":
        if (spot) spot.chosen_class = payload.class_id as number;
        break;
      case "confirm":
        if (spot) {
          if (payload.class_id !== undefined) {
            spot.chosen_class = payload.class_id as number;
          } else if (spot.chosen_class === null && spot.suggestions.length > 0) {
            spot.chosen_class = spot.suggestions[0][0];
          }
          spot.status = "confirmed";
        }
        break;
      case "reject":
        if (spot) spot.status = "rejected";
        break;
      case "create":
        this.hotspots.set(target, {
          hotspot_id: target,
          image_id: payload.image_id as string,
          bbox: payload.bbox as Hotspot["bbox"],
          score: 1.0,
          suggestions: [],
          chosen_class: (payload.class_id as number) ?? null,
          status: "unreviewed",
        });
        break;
    }
  }

  private async drain(): Promise<void> {
    if (this.draining) return;
    this.draining = true;
    try {
      while (this.pending.length > 0) {
        const edit = this.pending[0];
        const event: EditEvent = {
          seq: this.lastSeq + 1,
          kind: edit.kind,
          target: edit.target,
          payload: edit.payload,
          actor: "review-ui",
        };
        try {
          const ack = await this.api.postEvent(this.sessionId, event);
          this.lastSeq = ack.last_seq;
          this.pending.shift();
          this.notify();
        } catch (error) {
          await this.handleRejection(error);
          return;
        }
      }
    } finally {
      this.draining = false;
    }
    this.conflict = false;
  }

  /** Roll back every optimistic edit (newest first) and resync on conflict;
   * other errors also revert so rejected edits never stay visible. */
  private async handleRejection(error: unknown): Promise<void> {
    for (const edit of [...this.pending].reverse()) {
      this.rollback(edit);
    }
    this.pending = [];
    if (error instanceof ConflictError) {
      this.conflict = true;
      const state = await this.api.getSession(this.sessionId);
      this.loadState(state);
    }
    this.notify();
  }

  private rollback(edit: PendingEdit): void {
    if (edit.kind === "create") {
      this.hotspots.delete(edit.target);
      return;
    }
    if (edit.snapshot) {
      this.hotspots.set(edit.target, { ...edit.snapshot });
    } else {
      this.hotspots.delete(edit.target);
    }
  }

  /** Refetch server state (reconnect path). */
  async resync(): Promise<void> {
    const state = await this.api.getSession(this.sessionId);
    this.pending = [];
    this.loadState(state);
  }

  hotspotsForImage(imageId: string): Hotspot[] {
    return [...this.hotspots.values()].filter((h) => h.image_id === imageId);
  }
}
