/** Client-side grouping of hotspots into display lines (for stable per-line
 * coloring and order badges). Simple y-band clustering: boxes whose vertical
 * centers sit within a gap threshold share a line; lines are top-to-bottom,
 * members left-to-right. */

import { boxCenter, boxHeight, type Hotspot } from "./types.js";

export interface LineAssignment {
  lineOf: Map<string, number>;
  orderOf: Map<string, number>; // global reading-order index, 0-based
  lineCount: number;
}

function median(values: number[]): number {
  if (values.length === 0) return 0;
  const sorted = [...values].sort((a, b) => a - b);
  const mid = Math.floor(sorted.length / 2);
  return sorted.length % 2 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
}

export function groupIntoLines(hotspots: Hotspot[]): LineAssignment {
  const lineOf = new Map<string, number>();
  const orderOf = new Map<string, number>();
  if (hotspots.length === 0) return { lineOf, orderOf, lineCount: 0 };

  const gap = Math.max(4, 0.9 * median(hotspots.map((h) => boxHeight(h.bbox))));
  const byY = [...hotspots].sort(
    (a, b) => boxCenter(a.bbox).y - boxCenter(b.bbox).y,
  );

  const lines: Hotspot[][] = [];
  let current: Hotspot[] = [];
  let bandY = Number.NEGATIVE_INFINITY;
  for (const spot of byY) {
    const y = boxCenter(spot.bbox).y;
    if (current.length > 0 && y - bandY > gap) {
      lines.push(current);
      current = [];
    }
    current.push(spot);
    bandY = y;
  }
  lines.push(current);

  let order = 0;
  lines.forEach((members, lineIndex) => {
    members.sort((a, b) => boxCenter(a.bbox).x - boxCenter(b.bbox).x);
    for (const spot of members) {
      lineOf.set(spot.hotspot_id, lineIndex);
      orderOf.set(spot.hotspot_id, order++);
    }
  });
  return { lineOf, orderOf, lineCount: lines.length };
}

export const LINE_PALETTE = [
  "#e6194b",
  "#3cb44b",
  "#4363d8",
  "#f58231",
  "#911eb4",
  "#46f0f0",
  "#f032e6",
  "#bcf60c",
  "#008080",
  "#9a6324",
];

/** Stable color for a line index, consistent across re-renders. */
export function lineColor(index: number): string {
  return LINE_PALETTE[((index % LINE_PALETTE.length) + LINE_PALETTE.length) % LINE_PALETTE.length];
}
