/** Drag/resize gesture logic in image coordinates. One finished gesture
 * emits exactly one edit (a move or a resize); a gesture with no effective
 * motion emits nothing. */

import type { Box, Hotspot, Point } from "./types.js";

export type GestureMode =
  | "move"
  | "resize-nw"
  | "resize-ne"
  | "resize-sw"
  | "resize-se";

export interface GestureResult {
  kind: "move" | "resize";
  target: string;
  bbox: Box;
}

const HANDLE_RADIUS = 6;
const MIN_SIZE = 2;

/** Hit-test a hotspot at an image point: corner handles first, then body. */
export function hitTest(
  spot: Hotspot,
  p: Point,
  handleRadius: number = HANDLE_RADIUS,
): GestureMode | null {
  const [x0, y0, x1, y1] = spot.bbox;
  const corners: [GestureMode, number, number][] = [
    ["resize-nw", x0, y0],
    ["resize-ne", x1, y0],
    ["resize-sw", x0, y1],
    ["resize-se", x1, y1],
  ];
  for (const [mode, cx, cy] of corners) {
    if (Math.abs(p.x - cx) <= handleRadius && Math.abs(p.y - cy) <= handleRadius) {
      return mode;
    }
  }
  if (p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1) return "move";
  return null;
}

export class BoxGesture {
  private current: Box;

  constructor(
    readonly target: string,
    readonly mode: GestureMode,
    private readonly start: Point,
    private readonly original: Box,
    private readonly imageW: number,
    private readonly imageH: number,
  ) {
    this.current = [...original] as Box;
  }

  /** Live box under the pointer, clamped to the image. */
  update(p: Point): Box {
    const dx = p.x - this.start.x;
    const dy = p.y - this.start.y;
    let [x0, y0, x1, y1] = this.original;
    if (this.mode === "move") {
      const w = x1 - x0;
      const h = y1 - y0;
      x0 = Math.min(Math.max(0, x0 + dx), this.imageW - w);
      y0 = Math.min(Math.max(0, y0 + dy), this.imageH - h);
      x1 = x0 + w;
      y1 = y0 + h;
    } else {
      if (this.mode === "resize-nw" || this.mode === "resize-sw") {
        x0 = Math.max(0, Math.min(x0 + dx, x1 - MIN_SIZE));
      } else {
        x1 = Math.min(this.imageW, Math.max(x1 + dx, x0 + MIN_SIZE));
      }
      if (this.mode === "resize-nw" || this.mode === "resize-ne") {
        y0 = Math.max(0, Math.min(y0 + dy, y1 - MIN_SIZE));
      } else {
        y1 = Math.min(this.imageH, Math.max(y1 + dy, y0 + MIN_SIZE));
      }
    }
    this.current = [x0, y0, x1, y1];
    return this.current;
  }

  /** Exactly one edit per gesture; null when nothing moved. */
  finish(): GestureResult | null {
    const moved = this.current.some((v, i) => Math.abs(v - this.original[i]) > 1e-9);
    if (!moved) return null;
    return {
      kind: this.mode === "move" ? "move" : "resize",
      target: this.target,
      bbox: this.current,
    };
  }
}
