import { describe, expect, it } from "vitest";

import {
  canvasToCrop,
  canvasToWorld,
  cropToCanvas,
  cropToWorld,
  drawOverlay,
  type PathCtx,
} from "../src/overlay.js";
import type { CropGeo } from "../src/types.js";

// a north-up 0.3 m/px transform like the backend's rasters use
const GEO: CropGeo = { x0: 500.0, y0: 4200.0, dx: 0.3, dy: -0.3, rx: 0, ry: 0 };

describe("cropToWorld", () => {
  it("maps the origin pixel center to the transform origin", () => {
    expect(cropToWorld(GEO, 0, 0)).toEqual([500.0, 4200.0]);
  });

  it("steps dx east per column and dy per row", () => {
    const [x, y] = cropToWorld(GEO, 10, 4);
    expect(x).toBeCloseTo(503.0, 12);
    expect(y).toBeCloseTo(4198.8, 12);
  });

  it("applies shear terms", () => {
    const sheared: CropGeo = { ...GEO, rx: 0.1, ry: -0.05 };
    const [x, y] = cropToWorld(sheared, 2, 3);
    expect(x).toBeCloseTo(500.0 + 2 * 0.3 + 3 * 0.1, 12);
    expect(y).toBeCloseTo(4200.0 + 2 * -0.05 + 3 * -0.3, 12);
  });
});

describe("canvas mapping", () => {
  it("places a pixel center at (c+0.5)*scale", () => {
    expect(cropToCanvas(0, 0, 4)).toEqual([2, 2]);
    expect(cropToCanvas(3, 1, 4)).toEqual([14, 6]);
  });

  it("round-trips canvas -> crop -> canvas", () => {
    const [c, r] = canvasToCrop(14, 6, 4);
    expect(cropToCanvas(c, r, 4)).toEqual([14, 6]);
  });

  it("maps a click through to world coordinates", () => {
    // click on the center of crop pixel (10, 4) at 4x
    const [x, y] = canvasToWorld(GEO, 42, 18, 4);
    expect(x).toBeCloseTo(503.0, 12);
    expect(y).toBeCloseTo(4198.8, 12);
  });
});

/** Recording stub for the 2D context path calls. */
function recordingCtx(): { ctx: PathCtx; calls: string[] } {
  const calls: string[] = [];
  const ctx: PathCtx = {
    beginPath: () => calls.push("begin"),
    moveTo: (x, y) => calls.push(`move ${x},${y}`),
    lineTo: (x, y) => calls.push(`line ${x},${y}`),
    closePath: () => calls.push("close"),
    stroke: () => calls.push("stroke"),
  };
  return { ctx, calls };
}

describe("drawOverlay", () => {
  // outline vertices sit on the pixel-corner lattice (half-integer coords)
  const square: [number, number][] = [
    [-0.5, -0.5],
    [2.5, -0.5],
    [2.5, 1.5],
    [-0.5, 1.5],
  ];

  it("traces one closed ring per exterior", () => {
    const { ctx, calls } = recordingCtx();
    drawOverlay(ctx, [{ exterior: square, holes: [] }], 1);
    expect(calls).toEqual([
      "begin",
      "move 0,0",
      "line 3,0",
      "line 3,2",
      "line 0,2",
      "close",
      "stroke",
    ]);
  });

  it("scales vertices with the zoom factor", () => {
    const { ctx, calls } = recordingCtx();
    drawOverlay(ctx, [{ exterior: square, holes: [] }], 4);
    expect(calls[1]).toBe("move 0,0");
    expect(calls[2]).toBe("line 12,0");
  });

  it("traces holes as additional rings in the same path", () => {
    const hole: [number, number][] = [
      [0.5, 0.5],
      [1.5, 0.5],
      [1.5, 1.5],
    ];
    const { ctx, calls } = recordingCtx();
    drawOverlay(ctx, [{ exterior: square, holes: [hole] }], 1);
    const closes = calls.filter((c) => c === "close").length;
    expect(closes).toBe(2);
    expect(calls.filter((c) => c === "stroke")).toHaveLength(1);
  });

  it("ignores empty rings", () => {
    const { ctx, calls } = recordingCtx();
    drawOverlay(ctx, [{ exterior: [], holes: [] }], 1);
    expect(calls).toEqual(["begin", "stroke"]);
  });
});
