/** Zoom/pan view transform between image pixels and screen pixels.
 *
 * An exact invertible affine map: screen = image * scale + (tx, ty).
 */

import type { Point } from "./types.js";

export class ViewTransform {
  constructor(
    readonly scale: number = 1,
    readonly tx: number = 0,
    readonly ty: number = 0,
  ) {
    if (!(scale > 0)) throw new Error(`scale must be positive, got ${scale}`);
  }

  toScreen(p: Point): Point {
    return { x: p.x * this.scale + this.tx, y: p.y * this.scale + this.ty };
  }

  toImage(p: Point): Point {
    return { x: (p.x - this.tx) / this.scale, y: (p.y - this.ty) / this.scale };
  }

  /** Zoom by `factor` keeping the given screen point fixed. */
  zoomAt(screenPoint: Point, factor: number): ViewTransform {
    const scale = this.scale * factor;
    const tx = screenPoint.x - (screenPoint.x - this.tx) * factor;
    const ty = screenPoint.y - (screenPoint.y - this.ty) * factor;
    return new ViewTransform(scale, tx, ty);
  }

  pan(dx: number, dy: number): ViewTransform {
    return new ViewTransform(this.scale, this.tx + dx, this.ty + dy);
  }

  /** Scale-to-fit an image inside a viewport, centered. */
  static fit(imageW: number, imageH: number, viewW: number, viewH: number): ViewTransform {
    const scale = Math.min(viewW / imageW, viewH / imageH);
    return new ViewTransform(
      scale,
      (viewW - imageW * scale) / 2,
      (viewH - imageH * scale) / 2,
    );
  }
}
