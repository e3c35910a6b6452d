/** Shared types mirroring the review-service API documents. */

export interface Point {
  x: number;
  y: number;
}

/** XYXY box in image pixel coordinates. */
export type Box = [number, number, number, number];

export interface Suggestion {
  class_id: number;
  name: string;
  score: number;
}

export interface Hotspot {
  hotspot_id: string;
  image_id: string;
  bbox: Box;
  score: number;
  suggestions: [number, number][]; // ranked [class_id, score]
  chosen_class: number | null;
  status: "unreviewed" | "confirmed" | "rejected";
}

export interface SessionState {
  session_id: string;
  last_seq: number;
  hotspots: Hotspot[];
}

export type EditKind =
  | "move"
  | "resize"
  | "create"
  | "delete"
  | "choose_class"
  | "confirm"
  | "reject";

export interface EditEvent {
  seq: number;
  kind: EditKind;
  target: string;
  payload: Record<string, unknown>;
  actor?: string;
}

export interface TabletInfo {
  tablet_id: string;
  image_count: number;
}

export interface ImageInfo {
  image_id: string;
  file_name: string;
  width: number;
  height: number;
  annotation_count: number;
}

export interface CatalogEntry {
  class_id: number;
  name: string;
}

export function boxWidth(b: Box): number {
  return b[2] - b[0];
}

export function boxHeight(b: Box): number {
  return b[3] - b[1];
}

export function boxCenter(b: Box): Point {
  return { x: (b[0] + b[2]) / 2, y: (b[1] + b[3]) / 2 };
}
