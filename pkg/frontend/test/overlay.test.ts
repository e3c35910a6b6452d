import { describe, expect, it } from "vitest";

import { groupIntoLines, lineColor } from "../src/lines.js";
import { renderOverlay, type DrawContext } from "../src/overlay.js";
import { ViewTransform } from "../src/transform.js";
import type { Hotspot } from "../src/types.js";
import { makeHotspot } from "./mock_api.js";

/** Records draw calls for snapshot-style assertions. */
class RecordingContext implements DrawContext {
  strokeStyle = "";
  fillStyle = "";
  lineWidth = 1;
  font = "";
  globalAlpha = 1;
  ops: unknown[][] = [];

  clearRect(...args: number[]) {
    this.ops.push(["clearRect", ...args]);
  }
  strokeRect(...args: number[]) {
    this.ops.push(["strokeRect", this.strokeStyle, this.lineWidth, ...args]);
  }
  fillRect(...args: number[]) {
    this.ops.push(["fillRect", this.fillStyle, ...args]);
  }
  fillText(text: string, x: number, y: number) {
    this.ops.push(["fillText", this.fillStyle, text, x, y]);
  }
}

function threeLineHotspots(): Hotspot[] {
  const spots: Hotspot[] = [];
  for (let line = 0; line < 3; line++) {
    for (let i = 0; i < 3; i++) {
      spots.push(
        makeHotspot({
          hotspot_id: `img-1/${line}-${i}`,
          bbox: [10 + i * 40, 10 + line * 60, 40 + i * 40, 30 + line * 60],
        }),
      );
    }
  }
  return spots;
}

function scene(hotspots: Hotspot[], transform = new ViewTransform()) {
  return {
    hotspots,
    lines: groupIntoLines(hotspots),
    transform,
    selectedId: null,
    imageError: null,
    viewWidth: 800,
    viewHeight: 600,
  };
}

describe("renderOverlay", () => {
  it("zero hotspots leaves a bare image (clear only)", () => {
    const ctx = new RecordingContext();
    renderOverlay(ctx, scene([]));
    expect(ctx.ops).toEqual([["clearRect", 0, 0, 800, 600]]);
  });

  it("zoom 2x scales box screen coordinates exactly 2x", () => {
    const spot = makeHotspot({ bbox: [10, 20, 40, 50] });
    const base = new RecordingContext();
    renderOverlay(base, scene([spot], new ViewTransform(1, 0, 0)));
    const zoomed = new RecordingContext();
    renderOverlay(zoomed, scene([spot], new ViewTransform(2, 0, 0)));
    const rect = (ctx: RecordingContext) =>
      ctx.ops.find((op) => op[0] === "strokeRect")!.slice(3) as number[];
    const [x, y, w, h] = rect(base);
    expect(rect(zoomed)).toEqual([2 * x, 2 * y, 2 * w, 2 * h]);
  });

  it("three lines get three distinct colors, stable across re-renders", () => {
    const spots = threeLineHotspots();
    const render = () => {
      const ctx = new RecordingContext();
      renderOverlay(ctx, scene(spots));
      return ctx.ops;
    };
    const first = render();
    const second = render();
    expect(second).toEqual(first); // snapshot stability
    const colors = new Set(
      first.filter((op) => op[0] === "strokeRect").map((op) => op[1]),
    );
    expect(colors.size).toBe(3);
  });

  it("image error renders a visible error state", () => {
    const ctx = new RecordingContext();
    renderOverlay(ctx, { ...scene([]), imageError: "tablet.png" });
    const texts = ctx.ops.filter((op) => op[0] === "fillText");
    expect(texts.length).toBe(1);
    expect(String(texts[0][2])).toContain("tablet.png");
  });

  it("selected hotspot is drawn with a heavier stroke", () => {
    const spots = [makeHotspot({ hotspot_id: "a" }), makeHotspot({ hotspot_id: "b", bbox: [60, 10, 90, 30] })];
    const ctx = new RecordingContext();
    renderOverlay(ctx, { ...scene(spots), selectedId: "a" });
    const widths = ctx.ops.filter((op) => op[0] === "strokeRect").map((op) => op[2]);
    expect(widths).toContain(3);
    expect(widths).toContain(1.5);
  });
});

describe("groupIntoLines", () => {
  it("bands by vertical center and orders left to right", () => {
    const spots = threeLineHotspots();
    const { lineOf, orderOf, lineCount } = groupIntoLines(spots);
    expect(lineCount).toBe(3);
    expect(lineOf.get("img-1/0-0")).toBe(0);
    expect(lineOf.get("img-1/2-2")).toBe(2);
    expect(orderOf.get("img-1/0-0")).toBe(0);
    expect(orderOf.get("img-1/0-2")).toBe(2);
    expect(orderOf.get("img-1/2-2")).toBe(8);
  });

  it("line colors are stable per index", () => {
    expect(lineColor(0)).toBe(lineColor(0));
    expect(lineColor(1)).not.toBe(lineColor(0));
    expect(lineColor(10)).toBe(lineColor(0)); // palette wraps
  });
});
