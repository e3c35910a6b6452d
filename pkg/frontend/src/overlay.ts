/** Canvas overlay rendering: hotspot boxes in image pixel space drawn under
 * the current view transform, colored by display line, with reading-order
 * badges and a visible error state when the tablet image failed to load.
 *
 * Drawing goes through a minimal context interface so component tests can
 * record the scene without a real canvas. */

import { lineColor, type LineAssignment } from "./lines.js";
import type { ViewTransform } from "./transform.js";
import type { Hotspot } from "./types.js";

export interface DrawContext {
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  globalAlpha: number;
  clearRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  fillText(text: string, x: number, y: number): void;
}

export interface OverlayScene {
  hotspots: Hotspot[];
  lines: LineAssignment;
  transform: ViewTransform;
  selectedId: string | null;
  imageError: string | null;
  viewWidth: number;
  viewHeight: number;
}

const STATUS_ALPHA: Record<string, number> = {
  unreviewed: 0.9,
  confirmed: 1.0,
  rejected: 0.35,
};

export function renderOverlay(ctx: DrawContext, scene: OverlayScene): void {
  ctx.clearRect(0, 0, scene.viewWidth, scene.viewHeight);

  if (scene.imageError) {
    ctx.globalAlpha = 1;
    ctx.fillStyle = "#b00020";
    ctx.font = "16px sans-serif";
    ctx.fillText(`image unavailable: ${scene.imageError}`, 12, 24);
    return;
  }

  for (const spot of scene.hotspots) {
    const [x0, y0, x1, y1] = spot.bbox;
    const a = scene.transform.toScreen({ x: x0, y: y0 });
    const b = scene.transform.toScreen({ x: x1, y: y1 });
    const line = scene.lines.lineOf.get(spot.hotspot_id) ?? 0;
    const color = lineColor(line);
    ctx.globalAlpha = STATUS_ALPHA[spot.status] ?? 0.9;
    ctx.strokeStyle = color;
    ctx.lineWidth = spot.hotspot_id === scene.selectedId ? 3 : 1.5;
    ctx.strokeRect(a.x, a.y, b.x - a.x, b.y - a.y);

    const order = scene.lines.orderOf.get(spot.hotspot_id);
    if (order !== undefined) {
      ctx.fillStyle = color;
      ctx.font = "11px sans-serif";
      ctx.fillText(String(order + 1), a.x + 2, a.y - 3);
    }
  }
  ctx.globalAlpha = 1;
}
