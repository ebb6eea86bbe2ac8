/** Shared builders for session JSON and an in-memory fake review service. */

import type {
  Metrics,
  SessionJson,
  Tally,
  VerdictLabel,
  VerdictRecord,
} from "../src/types.js";
import type { FetchLike } from "../src/api.js";

export function makeSession(overrides: Partial<SessionJson> = {}): SessionJson {
  const candidates = overrides.candidates ?? [1, 2, 3, 4];
  const verdicts = overrides.verdicts ?? {};
  const missed = overrides.missed ?? [];
  const tally = overrides.tally ?? tallyOf(candidates, verdicts, missed.length);
  return {
    id: "s-0000",
    region: "pilot",
    status: "open",
    candidate_count: candidates.length,
    empty: candidates.length === 0,
    amend_log: [],
    live_metrics: liveMetrics(tally),
    next_undecided: firstUndecided(candidates, verdicts),
    created_at: "2026-01-01T00:00:00",
    updated_at: "2026-01-01T00:00:00",
    ...overrides,
    candidates,
    verdicts,
    missed,
    tally,
  };
}

function firstUndecided(
  candidates: number[],
  verdicts: Record<string, VerdictRecord>,
): number | null {
  const i = candidates.findIndex((c) => !(String(c) in verdicts));
  return i === -1 ? null : i;
}

function tallyOf(
  candidates: number[],
  verdicts: Record<string, VerdictRecord>,
  missed: number,
): Tally {
  const labels = Object.values(verdicts).map((v) => v.label);
  const correct = labels.filter((l) => l === "correct").length;
  const falseCount = labels.filter((l) => l === "false").length;
  return {
    correct,
    false: falseCount,
    missed,
    undecided: candidates.length - labels.length,
  };
}

/** Same arithmetic the service's inspection_score uses for live metrics. */
export function liveMetrics(t: Tally): Metrics {
  const preds = t.correct + t.false;
  const truths = t.correct + t.missed;
  return {
    precision: preds > 0 ? t.correct / preds : null,
    recall: truths > 0 ? t.correct / truths : null,
    f1:
      preds > 0 && truths > 0 && t.correct > 0
        ? (2 * (t.correct / preds) * (t.correct / truths)) /
          (t.correct / preds + t.correct / truths)
        : preds > 0 && truths > 0
          ? 0
          : null,
    criterion: "overlap",
  };
}

export interface FakeService {
  fetchLike: FetchLike;
  /** Writes seen per candidate id (only those the server actually processed). */
  verdictPosts: Map<number, number>;
  missedPosts: number;
  /** When true every fetch rejects before reaching the server. */
  offline: boolean;
  /** Process the next N requests server-side but fail the response. */
  dropResponses: number;
  session(): SessionJson;
  /** Mutate server state out-of-band (a second writer). */
  addMissedDirect(): void;
  closeDirect(): void;
}

/**
 * In-memory stand-in for the review service, faithful to its JSON contract:
 * verdict/double-verdict/amend rules, tally, live metrics, next_undecided,
 * strict /metrics, duplicate-mark warning hook.
 */
export function fakeService(
  candidates: number[],
  opts: { warnOnMissed?: boolean } = {},
): FakeService {
  const verdicts = new Map<number, { label: VerdictLabel; note: string }>();
  const missed: { id: string; point: [number, number] | null; mode: string }[] = [];
  let status: "open" | "closed" = "open";
  const verdictPosts = new Map<number, number>();

  const tally = (): Tally => ({
    correct: [...verdicts.values()].filter((v) => v.label === "correct").length,
    false: [...verdicts.values()].filter((v) => v.label === "false").length,
    missed: missed.length,
    undecided: candidates.length - verdicts.size,
  });

  const session = (): SessionJson =>
    makeSession({
      candidates,
      status,
      verdicts: Object.fromEntries(
        [...verdicts].map(([cid, v]) => [String(cid), { label: v.label, note: v.note }]),
      ),
      missed: missed.map((m) => ({ id: m.id, point: m.point, mode: m.mode })),
      tally: tally(),
    });

  const json = (body: unknown, ok = true, statusCode = 200): Response =>
    ({
      ok,
      status: statusCode,
      json: async () => body,
    }) as Response;

  const errorResponse = (code: string, message: string, statusCode: number): Response =>
    json({ error: { code, message } }, false, statusCode);

  const state: FakeService = {
    verdictPosts,
    missedPosts: 0,
    offline: false,
    dropResponses: 0,
    session,
    addMissedDirect: () => {
      missed.push({ id: `m${missed.length}`, point: [0, 0], mode: "browse" });
    },
    closeDirect: () => {
      status = "closed";
    },
    fetchLike: async (url: string, init?: RequestInit): Promise<Response> => {
      if (state.offline) {
        throw new TypeError("fetch failed");
      }
      const method = init?.method ?? "GET";
      const path = url.replace(/^https?:\/\/[^/]+/, "");
      const reply = (resp: Response): Response => {
        if (state.dropResponses > 0) {
          state.dropResponses -= 1;
          throw new TypeError("fetch failed (response lost)");
        }
        return resp;
      };

      if (method === "GET" && path === "/sessions/s-0000") {
        return reply(json(session()));
      }
      if (method === "GET" && path === "/sessions/s-0000/metrics") {
        if (verdicts.size < candidates.length) {
          return reply(errorResponse("undecided", "candidates lack a verdict", 409));
        }
        return reply(
          json({
            session: "s-0000",
            region: "pilot",
            metrics: liveMetrics(tally()),
            counts: tally(),
          }),
        );
      }
      if (method === "POST" && path === "/sessions/s-0000/verdicts") {
        if (status === "closed") {
          return reply(errorResponse("closed_session", "session is closed", 409));
        }
        const body = JSON.parse(String(init?.body)) as {
          candidate_id: number;
          label: VerdictLabel;
          note: string;
          amend: boolean;
        };
        if (!candidates.includes(body.candidate_id)) {
          return reply(errorResponse("unknown_candidate", "not in session", 404));
        }
        const decided = verdicts.has(body.candidate_id);
        if (decided && !body.amend) {
          return reply(errorResponse("double_verdict", "already decided", 409));
        }
        if (!decided && body.amend) {
          return reply(errorResponse("nothing_to_amend", "no verdict yet", 409));
        }
        verdicts.set(body.candidate_id, { label: body.label, note: body.note });
        verdictPosts.set(body.candidate_id, (verdictPosts.get(body.candidate_id) ?? 0) + 1);
        return reply(json(session()));
      }
      if (method === "POST" && path === "/sessions/s-0000/missed") {
        if (status === "closed") {
          return reply(errorResponse("closed_session", "session is closed", 409));
        }
        const body = JSON.parse(String(init?.body)) as {
          point?: [number, number];
          mode: string;
        };
        missed.push({ id: `m${missed.length}`, point: body.point ?? null, mode: body.mode });
        state.missedPosts += 1;
        const payload = session() as SessionJson & { warning?: unknown };
        if (opts.warnOnMissed) {
          payload.warning = {
            code: "possible_duplicate",
            message: "missed mark falls inside existing candidate outline(s)",
            overlapping_candidates: candidates.slice(0, 1),
          };
        }
        return reply(json(payload));
      }
      if (method === "POST" && path === "/sessions/s-0000/close") {
        status = "closed";
        return reply(json(session()));
      }
      return reply(errorResponse("unknown_session", `no route ${method} ${path}`, 404));
    },
  };
  return state;
}
