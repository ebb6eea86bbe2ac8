import { describe, expect, it } from "vitest";

import {
  allDecided,
  applyOptimistic,
  currentCandidate,
  fromSession,
  markQueued,
  nextUndecided,
  reconcile,
  setIndex,
} from "../src/state.js";
import { makeSession } from "./helpers.js";

describe("fromSession", () => {
  it("starts a fresh session at index 0 with an empty verdict map", () => {
    const s = fromSession(makeSession());
    expect(s.index).toBe(0);
    expect(s.verdicts.size).toBe(0);
    expect(s.tally.undecided).toBe(4);
    expect(currentCandidate(s)).toBe(1);
  });

  it("resumes at the server's next_undecided with tally intact", () => {
    const s = fromSession(
      makeSession({
        verdicts: { "1": { label: "correct" }, "2": { label: "false" } },
      }),
    );
    expect(s.index).toBe(2);
    expect(s.tally).toEqual({ correct: 1, false: 1, missed: 0, undecided: 2 });
    expect(s.fetchState.get(1)).toBe("acked");
  });

  it("lands past the end when every candidate is decided", () => {
    const s = fromSession(
      makeSession({
        candidates: [7],
        verdicts: { "7": { label: "correct" } },
      }),
    );
    expect(s.index).toBe(1);
    expect(currentCandidate(s)).toBeNull();
    expect(allDecided(s)).toBe(true);
  });
});

describe("applyOptimistic", () => {
  it("moves one candidate from undecided to the labeled bucket", () => {
    const s0 = fromSession(makeSession());
    const s1 = applyOptimistic(s0, 1, "correct");
    expect(s1.tally).toEqual({ correct: 1, false: 0, missed: 0, undecided: 3 });
    expect(s1.verdicts.get(1)).toBe("correct");
    expect(s1.fetchState.get(1)).toBe("pending");
    // source state untouched (rollback = keep the old object)
    expect(s0.tally.correct).toBe(0);
    expect(s0.verdicts.has(1)).toBe(false);
  });
});

describe("reconcile", () => {
  it("adopts the server tally and metrics wholesale", () => {
    const s0 = applyOptimistic(fromSession(makeSession()), 1, "correct");
    // server saw the verdict AND a second writer's missed mark
    const server = makeSession({
      verdicts: { "1": { label: "correct" } },
      missed: [{ id: "m0", point: [0, 0], mode: "browse" }],
    });
    const s1 = reconcile(s0, server);
    expect(s1.tally).toEqual(server.tally);
    expect(s1.missedCount).toBe(1);
    expect(s1.liveMetrics).toEqual(server.live_metrics);
    expect(s1.fetchState.get(1)).toBe("acked");
  });

  it("advances to the next undecided at or after the current position", () => {
    const s0 = setIndex(fromSession(makeSession()), 1);
    const server = makeSession({ verdicts: { "2": { label: "false" } } });
    const s1 = reconcile(s0, server);
    expect(s1.index).toBe(2); // candidate 2 (position 1) decided; next is position 2
  });

  it("keeps queued marks across refreshes", () => {
    const s0 = markQueued(applyOptimistic(fromSession(makeSession()), 1, "correct"), 1);
    const s1 = reconcile(s0, makeSession()); // server doesn't have it yet
    expect(s1.fetchState.get(1)).toBe("queued");
  });
});

describe("navigation", () => {
  it("clamps setIndex to [0, length]", () => {
    const s = fromSession(makeSession());
    expect(setIndex(s, -3).index).toBe(0);
    expect(setIndex(s, 99).index).toBe(4);
  });

  it("nextUndecided skips decided candidates", () => {
    const s = fromSession(
      makeSession({ verdicts: { "1": { label: "correct" }, "3": { label: "false" } } }),
    );
    expect(nextUndecided(s, 0)).toBe(1); // candidate 2
    expect(nextUndecided(s, 2)).toBe(3); // candidate 4
  });
});
