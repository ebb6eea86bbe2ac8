import { describe, expect, it } from "vitest";

import { ReviewApi } from "../src/api.js";
import { SessionController } from "../src/controller.js";
import { UNDEFINED_METRIC } from "../src/format.js";
import { fakeService, type FakeService } from "./helpers.js";

async function resume(fake: FakeService): Promise<SessionController> {
  const api = new ReviewApi("http://test", fake.fetchLike);
  return SessionController.resume(api, "s-0000");
}

describe("verdict flow", () => {
  it("posts, reconciles with the server session and advances", async () => {
    const fake = fakeService([1, 2, 3]);
    const ctl = await resume(fake);
    await ctl.verdict("correct");
    expect(fake.verdictPosts.get(1)).toBe(1);
    expect(ctl.state.tally.correct).toBe(1);
    expect(ctl.state.index).toBe(1);
    expect(ctl.state.fetchState.get(1)).toBe("acked");
  });

  it("never posts twice for one candidate (decided candidates are skipped)", async () => {
    const fake = fakeService([1, 2]);
    const ctl = await resume(fake);
    await ctl.verdict("correct");
    ctl.prev(); // back onto the decided candidate
    await ctl.verdict("false"); // ignored — amend is the explicit path
    expect(fake.verdictPosts.get(1)).toBe(1);
    expect(ctl.state.verdicts.get(1)).toBe("correct");
  });

  it("rolls the optimistic update back on server rejection and surfaces it", async () => {
    const fake = fakeService([1, 2]);
    const ctl = await resume(fake);
    fake.closeDirect(); // another writer closed the session under us
    await ctl.verdict("correct");
    expect(ctl.state.tally.correct).toBe(0);
    expect(ctl.state.verdicts.has(1)).toBe(false);
    const panel = ctl.panel();
    expect(panel.notice).toMatch(/closed_session/);
    expect(fake.verdictPosts.size).toBe(0);
  });

  it("amend changes a decided candidate through the explicit path", async () => {
    const fake = fakeService([1, 2]);
    const ctl = await resume(fake);
    await ctl.verdict("correct");
    await ctl.amend(0, "false");
    expect(ctl.state.verdicts.get(1)).toBe("false");
    expect(ctl.state.tally).toMatchObject({ correct: 0, false: 1 });
  });
});

describe("network failures", () => {
  it("keeps the verdict locally and queues a retry keyed by candidate id", async () => {
    const fake = fakeService([1, 2]);
    const ctl = await resume(fake);
    fake.offline = true;
    await ctl.verdict("correct");
    expect(ctl.state.verdicts.get(1)).toBe("correct"); // retained locally
    expect(ctl.state.tally.correct).toBe(1);
    expect(ctl.state.fetchState.get(1)).toBe("queued");
    expect(ctl.retries.keys()).toEqual(["1"]);
    expect(fake.verdictPosts.size).toBe(0); // nothing reached the server
  });

  it("delivers queued verdicts on flush once the network returns", async () => {
    const fake = fakeService([1, 2]);
    const ctl = await resume(fake);
    fake.offline = true;
    await ctl.verdict("correct");
    fake.offline = false;
    await ctl.flushRetries();
    expect(fake.verdictPosts.get(1)).toBe(1);
    expect(ctl.retries.size).toBe(0);
    expect(ctl.state.fetchState.get(1)).toBe("acked");
    expect(fake.session().tally.correct).toBe(1);
  });

  it("a lost response does not double-post: retry sees double_verdict and reconciles", async () => {
    const fake = fakeService([1, 2]);
    const ctl = await resume(fake);
    fake.dropResponses = 1; // server processes the verdict, response is lost
    await ctl.verdict("correct");
    expect(fake.verdictPosts.get(1)).toBe(1);
    expect(ctl.retries.has("1")).toBe(true);
    await ctl.flushRetries();
    expect(fake.verdictPosts.get(1)).toBe(1); // amend-free second write refused
    expect(ctl.retries.size).toBe(0);
    expect(ctl.state.verdicts.get(1)).toBe("correct");
    expect(ctl.state.fetchState.get(1)).toBe("acked");
    expect(ctl.panel().notice).toBeNull(); // matching label = delivered, not an error
  });

  it("offline verdicts across several candidates flush in order", async () => {
    const fake = fakeService([1, 2, 3]);
    const ctl = await resume(fake);
    fake.offline = true;
    await ctl.verdict("correct");
    ctl.next();
    await ctl.verdict("false");
    expect(ctl.retries.keys()).toEqual(["1", "2"]);
    expect(ctl.panel().queued).toBe(2);
    fake.offline = false;
    await ctl.flushRetries();
    const server = fake.session();
    expect(server.tally).toMatchObject({ correct: 1, false: 1 });
  });
});

describe("missed marks", () => {
  it("records a missed mark and reconciles the tally", async () => {
    const fake = fakeService([1]);
    const ctl = await resume(fake);
    await ctl.markMissed({ point: [503.2, 4198.6] });
    expect(fake.missedPosts).toBe(1);
    expect(ctl.state.missedCount).toBe(1);
    expect(ctl.panel().missed).toBe(1);
  });

  it("surfaces possible_duplicate warnings while still counting the mark", async () => {
    const fake = fakeService([1], { warnOnMissed: true });
    const ctl = await resume(fake);
    await ctl.markMissed({ point: [0, 0] });
    expect(ctl.warning?.code).toBe("possible_duplicate");
    expect(ctl.panel().notice).toMatch(/possible_duplicate/);
    expect(ctl.state.missedCount).toBe(1);
  });

  it("queues missed marks while offline and flushes exactly one post each", async () => {
    const fake = fakeService([1]);
    const ctl = await resume(fake);
    fake.offline = true;
    await ctl.markMissed({ point: [1, 2] });
    expect(fake.missedPosts).toBe(0);
    expect(ctl.retries.size).toBe(1);
    fake.offline = false;
    await ctl.flushRetries();
    expect(fake.missedPosts).toBe(1);
    expect(ctl.retries.size).toBe(0);
  });
});

describe("panel", () => {
  it("shows em dashes before any verdict (undefined metrics, never 0)", async () => {
    const fake = fakeService([1, 2]);
    const ctl = await resume(fake);
    const panel = ctl.panel();
    expect(panel.precision).toBe(UNDEFINED_METRIC);
    expect(panel.recall).toBe(UNDEFINED_METRIC);
    expect(panel.f1).toBe(UNDEFINED_METRIC);
    expect(panel.done).toBe(false);
  });

  it("displays the server's live metrics after each verdict", async () => {
    const fake = fakeService([1, 2, 3, 4]);
    const ctl = await resume(fake);
    await ctl.verdict("correct");
    await ctl.verdict("correct");
    await ctl.verdict("false");
    const panel = ctl.panel();
    expect(panel.precision).toBe("0.667"); // 2 correct / 3 decided predictions
    expect(panel.recall).toBe("1.000"); // no missed marks yet
    expect(panel.position).toBe("4 / 4");
  });

  it("reports done once every candidate is decided", async () => {
    const fake = fakeService([1, 2]);
    const ctl = await resume(fake);
    await ctl.verdict("correct");
    await ctl.verdict("false");
    expect(ctl.panel().done).toBe(true);
    const final = await ctl.finalMetrics();
    expect(final.metrics.precision).toBeCloseTo(0.5, 12);
  });
});

describe("candidate cache and overlay toggle", () => {
  it("toggling the overlay never refetches the candidate", async () => {
    let candidateFetches = 0;
    const fake = fakeService([1]);
    const inner = fake.fetchLike;
    const counting: typeof inner = (url, init) => {
      if (url.includes("/candidates/")) {
        candidateFetches += 1;
        return Promise.resolve({
          ok: true,
          status: 200,
          json: async () => ({
            index: 0,
            installation_id: 1,
            tile_id: "t0",
            pixel_count: 4,
            area_m2: 0.36,
            centroid_world: [500, 4200],
            verdict: null,
            crop_url: "/crops/s-0000/0.png",
            crop: {
              width: 8,
              height: 8,
              col0: 0,
              row0: 0,
              centroid_px: [4, 4],
              geo: { x0: 500, y0: 4200, dx: 0.3, dy: -0.3, rx: 0, ry: 0 },
            },
            overlay: { parts: [] },
          }),
        } as Response);
      }
      return inner(url, init);
    };
    const api = new ReviewApi("http://test", counting);
    const ctl = await SessionController.resume(api, "s-0000");
    await ctl.candidate();
    ctl.toggleOverlay();
    expect(ctl.overlayVisible).toBe(false);
    await ctl.candidate();
    ctl.toggleOverlay();
    await ctl.candidate();
    expect(candidateFetches).toBe(1);
  });
});

describe("reload resume", () => {
  it("a fresh controller on the same session resumes at the first undecided", async () => {
    const fake = fakeService([1, 2, 3, 4]);
    const first = await resume(fake);
    await first.verdict("correct");
    await first.verdict("false");
    // simulated reload: brand-new controller, same server session
    const second = await resume(fake);
    expect(second.state.index).toBe(2);
    expect(second.state.tally).toMatchObject({ correct: 1, false: 1, undecided: 2 });
    expect(second.panel().precision).toBe("0.500");
  });
});
