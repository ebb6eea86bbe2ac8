/**
 * Crop/canvas geometry and overlay drawing.
 *
 * The service ships overlay rings in crop pixel coordinates with the origin
 * at the CENTER of the top-left crop pixel (outline vertices land on the
 * half-integer pixel-corner lattice). The crop image is drawn at an integer
 * scale, so pixel (c, r) covers canvas [(c)·s, (c+1)·s) × [(r)·s, (r+1)·s)
 * and its center sits at ((c+0.5)·s, (r+0.5)·s).
 */

import type { CropGeo, OverlayPart } from "./types.js";

/** Map fractional crop pixel indices to world coordinates. */
export function cropToWorld(g: CropGeo, col: number, row: number): [number, number] {
  return [g.x0 + col * g.dx + row * g.rx, g.y0 + col * g.ry + row * g.dy];
}

/** Crop pixel (center-origin) to canvas coordinates at the given scale. */
export function cropToCanvas(col: number, row: number, scale: number): [number, number] {
  return [(col + 0.5) * scale, (row + 0.5) * scale];
}

/** Canvas coordinates back to fractional crop pixel indices. */
export function canvasToCrop(x: number, y: number, scale: number): [number, number] {
  return [x / scale - 0.5, y / scale - 0.5];
}

/** Canvas click straight to world coordinates (for missed-array marks). */
export function canvasToWorld(
  g: CropGeo,
  x: number,
  y: number,
  scale: number,
): [number, number] {
  const [col, row] = canvasToCrop(x, y, scale);
  return cropToWorld(g, col, row);
}

/** The subset of CanvasRenderingContext2D the overlay needs (stubable in tests). */
export interface PathCtx {
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  closePath(): void;
  stroke(): void;
}

function traceRing(ctx: PathCtx, ring: [number, number][], scale: number): void {
  if (ring.length === 0) {
    return;
  }
  const first = ring[0]!;
  const [x0, y0] = cropToCanvas(first[0], first[1], scale);
  ctx.moveTo(x0, y0);
  for (let i = 1; i < ring.length; i++) {
    const [c, r] = ring[i]!;
    const [x, y] = cropToCanvas(c, r, scale);
    ctx.lineTo(x, y);
  }
  ctx.closePath();
}

/**
 * Stroke every ring (exteriors and holes) of the prediction outline.
 * Styling (color, width, dash) is the caller's business.
 */
export function drawOverlay(ctx: PathCtx, parts: OverlayPart[], scale = 1): void {
  ctx.beginPath();
  for (const part of parts) {
    traceRing(ctx, part.exterior, scale);
    for (const hole of part.holes) {
      traceRing(ctx, hole, scale);
    }
  }
  ctx.stroke();
}
