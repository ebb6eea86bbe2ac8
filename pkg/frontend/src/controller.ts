/**
 * Session controller: glues the API client, the state mirror and the retry
 * queue into the inspector's review loop.
 *
 * Verdict flow: optimistic local update → one POST → reconcile with the
 * server response. Application rejections (conflict, closed, double verdict)
 * roll the optimistic update back and are surfaced on the panel; network
 * failures keep the verdict locally and queue an idempotent retry keyed by
 * the candidate id. The panel never computes precision/recall itself — it
 * formats whatever metrics the server last reported.
 */

import { ApiError, ReviewApi } from "./api.js";
import { fmtMetrics, type MetricsView } from "./format.js";
import { RetryQueue } from "./retry.js";
import {
  allDecided,
  applyOptimistic,
  currentCandidate,
  fromSession,
  markQueued,
  nextUndecided,
  reconcile,
  setIndex,
  type UiSessionState,
} from "./state.js";
import type {
  CandidateJson,
  MetricsResponse,
  ServiceWarning,
  SessionCreateBody,
  SessionJson,
  Tally,
  VerdictLabel,
} from "./types.js";

export interface PanelView extends MetricsView {
  tally: Tally;
  missed: number;
  position: string; // e.g. "3 / 10"
  done: boolean;
  status: "open" | "closed";
  queued: number; // verdicts waiting for a retry
  notice: string | null; // conflict / warning line, most recent first
}

export class SessionController {
  state: UiSessionState;
  readonly retries = new RetryQueue();
  overlayVisible = true;
  private notice: string | null = null;
  private lastWarning: ServiceWarning | null = null;
  private readonly candidateCache = new Map<number, CandidateJson>();
  private missedSeq = 0;
  private readonly changed: () => void;

  private constructor(
    private readonly api: ReviewApi,
    session: SessionJson,
    onChange?: () => void,
  ) {
    this.state = fromSession(session);
    this.changed = onChange ?? (() => {});
  }

  /** Start a fresh session on the service. */
  static async create(
    api: ReviewApi,
    body: SessionCreateBody,
    onChange?: () => void,
  ): Promise<SessionController> {
    return new SessionController(api, await api.createSession(body), onChange);
  }

  /** Attach to an existing session; resumes at the first undecided candidate. */
  static async resume(
    api: ReviewApi,
    sessionId: string,
    onChange?: () => void,
  ): Promise<SessionController> {
    return new SessionController(api, await api.getSession(sessionId), onChange);
  }

  get sessionId(): string {
    return this.state.sessionId;
  }

  // -- queue navigation --------------------------------------------------------

  next(): void {
    this.state = setIndex(this.state, this.state.index + 1);
    this.changed();
  }

  prev(): void {
    this.state = setIndex(this.state, this.state.index - 1);
    this.changed();
  }

  /** Jump to the first undecided candidate at or after the current position. */
  skipToUndecided(): void {
    this.state = setIndex(this.state, nextUndecided(this.state, this.state.index));
    this.changed();
  }

  toggleOverlay(): void {
    this.overlayVisible = !this.overlayVisible;
    this.changed();
  }

  /** Candidate payload for a queue position, cached so overlay toggles and
   * back-navigation never refetch. */
  async candidate(index = this.state.index): Promise<CandidateJson> {
    const hit = this.candidateCache.get(index);
    if (hit) {
      return hit;
    }
    const cand = await this.api.getCandidate(this.sessionId, index);
    this.candidateCache.set(index, cand);
    return cand;
  }

  // -- verdicts ------------------------------------------------------------------

  /**
   * Verdict for the candidate at the current queue position. At most one
   * service call per verdict: pending/queued/acked candidates are skipped
   * (amend() is the explicit way to change a decided one).
   */
  async verdict(label: VerdictLabel, note = ""): Promise<void> {
    const cid = currentCandidate(this.state);
    if (cid === null || this.state.status === "closed") {
      return;
    }
    const fs = this.state.fetchState.get(cid);
    if (fs === "pending" || fs === "queued" || this.state.verdicts.has(cid)) {
      return;
    }
    const before = this.state;
    this.state = applyOptimistic(before, cid, label);
    this.changed();
    try {
      const sess = await this.api.postVerdict(this.sessionId, cid, label, { note });
      this.notice = null;
      this.state = reconcile(this.state, sess);
    } catch (err) {
      if (err instanceof ApiError) {
        // server refused: roll the optimistic update back and surface it
        this.state = { ...before, index: this.state.index };
        this.notice = `${err.code}: ${err.message}`;
      } else {
        // network: keep the verdict, retry later keyed by candidate id
        this.state = markQueued(this.state, cid);
        this.retries.enqueue(String(cid), () => this.retryVerdict(cid, label, note));
      }
    }
    this.changed();
  }

  /** Change an already-decided candidate's verdict (logged server-side). */
  async amend(index: number, label: VerdictLabel, note = ""): Promise<void> {
    const cid = this.state.candidates[index];
    if (cid === undefined) {
      return;
    }
    try {
      const sess = await this.api.postVerdict(this.sessionId, cid, label, {
        note,
        amend: true,
      });
      this.notice = null;
      this.state = reconcile(this.state, sess);
    } catch (err) {
      if (!(err instanceof ApiError)) {
        throw err;
      }
      this.notice = `${err.code}: ${err.message}`;
    }
    this.changed();
  }

  private async retryVerdict(
    cid: number,
    label: VerdictLabel,
    note: string,
  ): Promise<"delivered" | "rejected"> {
    try {
      const sess = await this.api.postVerdict(this.sessionId, cid, label, { note });
      this.state = reconcile(this.state, sess);
      return "delivered";
    } catch (err) {
      if (!(err instanceof ApiError)) {
        throw err; // still offline
      }
      // The original POST may have landed even though its response was lost.
      // double_verdict with a matching label means the server already has it.
      const sess = await this.api.getSession(this.sessionId);
      const recorded = sess.verdicts[String(cid)];
      this.state = reconcile(this.state, sess);
      if (err.code === "double_verdict" && recorded?.label === label) {
        return "delivered";
      }
      this.notice = `${err.code}: ${err.message}`;
      return "rejected";
    }
  }

  /** Re-send everything the network swallowed; call when connectivity returns. */
  async flushRetries(): Promise<void> {
    await this.retries.flush();
    this.changed();
  }

  // -- missed marks ---------------------------------------------------------------

  /**
   * Record an array the detector missed, as a world point (from a canvas
   * click) or a rough outline. Possible-duplicate warnings from the server
   * are surfaced but the mark still counts.
   */
  async markMissed(
    geometry: { point?: [number, number]; outline?: [number, number][] },
    opts: { mode?: string; note?: string } = {},
  ): Promise<void> {
    const key = `missed-${this.missedSeq++}`;
    const attempt = async (): Promise<"delivered" | "rejected"> => {
      try {
        const sess = await this.api.postMissed(this.sessionId, geometry, opts);
        this.lastWarning = sess.warning ?? null;
        this.notice = sess.warning ? `${sess.warning.code}: ${sess.warning.message}` : null;
        this.state = reconcile(this.state, sess);
        return "delivered";
      } catch (err) {
        if (!(err instanceof ApiError)) {
          throw err;
        }
        this.notice = `${err.code}: ${err.message}`;
        return "rejected";
      }
    };
    try {
      await attempt();
    } catch {
      this.retries.enqueue(key, attempt);
    }
    this.changed();
  }

  get warning(): ServiceWarning | null {
    return this.lastWarning;
  }

  // -- wrap-up ---------------------------------------------------------------------

  async close(): Promise<void> {
    const sess = await this.api.closeSession(this.sessionId);
    this.state = reconcile(this.state, sess);
    this.changed();
  }

  /** Server-computed final metrics (rejects with "undecided" until complete). */
  finalMetrics(): Promise<MetricsResponse> {
    return this.api.getMetrics(this.sessionId);
  }

  /** Everything the metrics panel shows; values come from the server only. */
  panel(): PanelView {
    const total = this.state.candidates.length;
    const decided = total - this.state.tally.undecided;
    return {
      ...fmtMetrics(this.state.liveMetrics),
      tally: { ...this.state.tally },
      missed: this.state.missedCount,
      position: `${Math.min(this.state.index + 1, total)} / ${total}`,
      done: allDecided(this.state) && decided > 0,
      status: this.state.status,
      queued: this.retries.size,
      notice: this.notice,
    };
  }
}
