/**
 * Client session state: a pure-data mirror of the server session plus the
 * inspector's queue position and per-candidate delivery state.
 *
 * The server is the source of truth — every acknowledged response carries
 * the full session JSON and `reconcile` adopts its verdicts, tally and
 * live metrics wholesale. Optimistic updates are provisional and are either
 * confirmed by reconciliation or rolled back by the controller.
 */

import type { Metrics, SessionJson, Tally, VerdictLabel } from "./types.js";

/**
 * Delivery state of one candidate's verdict:
 * idle      — no verdict yet
 * pending   — POST in flight (optimistic tally applied)
 * queued    — network failure; held in the retry queue
 * acked     — server confirmed
 */
export type FetchState = "idle" | "pending" | "queued" | "acked";

export interface UiSessionState {
  sessionId: string;
  status: "open" | "closed";
  candidates: number[];
  /** Queue position; candidates.length means the queue is exhausted. */
  index: number;
  verdicts: ReadonlyMap<number, VerdictLabel>;
  fetchState: ReadonlyMap<number, FetchState>;
  tally: Tally;
  liveMetrics: Metrics;
  missedCount: number;
}

function verdictMap(sess: SessionJson): Map<number, VerdictLabel> {
  const out = new Map<number, VerdictLabel>();
  for (const [cid, rec] of Object.entries(sess.verdicts)) {
    out.set(Number(cid), rec.label);
  }
  return out;
}

/** First undecided queue position at or after `from`, else candidates.length. */
export function nextUndecided(state: UiSessionState, from = 0): number {
  for (let i = Math.max(from, 0); i < state.candidates.length; i++) {
    if (!state.verdicts.has(state.candidates[i]!)) {
      return i;
    }
  }
  return state.candidates.length;
}

/** Build state from a server session; resumes at the first undecided candidate. */
export function fromSession(sess: SessionJson): UiSessionState {
  const verdicts = verdictMap(sess);
  const fetchState = new Map<number, FetchState>();
  for (const cid of verdicts.keys()) {
    fetchState.set(cid, "acked");
  }
  return {
    sessionId: sess.id,
    status: sess.status,
    candidates: [...sess.candidates],
    index: sess.next_undecided ?? sess.candidates.length,
    verdicts,
    fetchState,
    tally: { ...sess.tally },
    liveMetrics: { ...sess.live_metrics },
    missedCount: sess.missed.length,
  };
}

/**
 * Adopt the server's view after an acknowledged post (or a refresh), keeping
 * the local queue position but skipping past newly decided candidates.
 */
export function reconcile(state: UiSessionState, sess: SessionJson): UiSessionState {
  const merged = fromSession(sess);
  // queued (retry-pending) marks survive a refresh; acked state wins
  const fetchState = new Map(merged.fetchState);
  for (const [cid, fs] of state.fetchState) {
    if (fs === "queued" && !fetchState.has(cid)) {
      fetchState.set(cid, "queued");
    }
  }
  const next = nextUndecided({ ...merged, fetchState }, state.index);
  return { ...merged, fetchState, index: next };
}

/** Provisional local verdict while the POST is in flight. */
export function applyOptimistic(
  state: UiSessionState,
  candidateId: number,
  label: VerdictLabel,
): UiSessionState {
  const verdicts = new Map(state.verdicts);
  verdicts.set(candidateId, label);
  const fetchState = new Map(state.fetchState);
  fetchState.set(candidateId, "pending");
  const tally: Tally = {
    ...state.tally,
    [label]: state.tally[label] + 1,
    undecided: state.tally.undecided - 1,
  };
  return { ...state, verdicts, fetchState, tally };
}

/** Downgrade an in-flight verdict to queued (network failure, will retry). */
export function markQueued(state: UiSessionState, candidateId: number): UiSessionState {
  const fetchState = new Map(state.fetchState);
  fetchState.set(candidateId, "queued");
  return { ...state, fetchState };
}

export function setIndex(state: UiSessionState, index: number): UiSessionState {
  const clamped = Math.min(Math.max(index, 0), state.candidates.length);
  return { ...state, index: clamped };
}

/** Candidate id at the current queue position, or null past the end. */
export function currentCandidate(state: UiSessionState): number | null {
  return state.candidates[state.index] ?? null;
}

/** True once every candidate has a verdict (final metrics become available). */
export function allDecided(state: UiSessionState): boolean {
  return state.tally.undecided === 0;
}
