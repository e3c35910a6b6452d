import { describe, expect, it } from "vitest";

import { ViewTransform } from "../src/transform.js";

function mulberry(seed: number) {
  let a = seed;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

describe("ViewTransform", () => {
  it("round-trips screen<->image within 1e-9 px", () => {
    const rand = mulberry(7);
    for (let trial = 0; trial < 500; trial++) {
      const t = new ViewTransform(0.05 + rand() * 8, (rand() - 0.5) * 2000, (rand() - 0.5) * 2000);
      const p = { x: rand() * 4000, y: rand() * 4000 };
      const there = t.toScreen(t.toImage(p));
      const back = t.toImage(t.toScreen(p));
      expect(Math.abs(there.x - p.x)).toBeLessThan(1e-9);
      expect(Math.abs(there.y - p.y)).toBeLessThan(1e-9);
      expect(Math.abs(back.x - p.x)).toBeLessThan(1e-9);
      expect(Math.abs(back.y - p.y)).toBeLessThan(1e-9);
    }
  });

  it("zoomAt keeps the anchor point fixed", () => {
    const t = new ViewTransform(1.5, 40, -20);
    const anchor = { x: 300, y: 180 };
    const zoomed = t.zoomAt(anchor, 2.0);
    const before = t.toImage(anchor);
    const after = zoomed.toImage(anchor);
    expect(Math.abs(before.x - after.x)).toBeLessThan(1e-9);
    expect(Math.abs(before.y - after.y)).toBeLessThan(1e-9);
    expect(zoomed.scale).toBeCloseTo(3.0, 12);
  });

  it("zoom 2x doubles screen distances", () => {
    const t = new ViewTransform(1, 0, 0);
    const zoomed = t.zoomAt({ x: 0, y: 0 }, 2);
    const a = zoomed.toScreen({ x: 10, y: 20 });
    const b = zoomed.toScreen({ x: 30, y: 50 });
    expect(b.x - a.x).toBeCloseTo(40, 12);
    expect(b.y - a.y).toBeCloseTo(60, 12);
  });

  it("pan shifts, fit centers", () => {
    const t = new ViewTransform(2, 5, 5).pan(10, -3);
    expect(t.tx).toBe(15);
    expect(t.ty).toBe(2);
    const fit = ViewTransform.fit(100, 50, 400, 400);
    expect(fit.scale).toBe(4);
    expect(fit.tx).toBe(0);
    expect(fit.ty).toBe(100);
  });

  it("rejects non-positive scale", () => {
    expect(() => new ViewTransform(0)).toThrow();
  });
});
