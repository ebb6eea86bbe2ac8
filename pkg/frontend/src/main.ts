/**
 * Browser entry point: wires the controller to the DOM.
 *
 * Query parameters: ?service=http://127.0.0.1:8008 selects the backend,
 * ?session=s-0000 resumes an existing session, ?bundle=/path/bundle.json
 * creates one from a server-side review bundle.
 */

import { ReviewApi } from "./api.js";
import { SessionController } from "./controller.js";
import { fmtArea } from "./format.js";
import { actionForKey } from "./keys.js";
import { canvasToWorld, drawOverlay } from "./overlay.js";
import type { CandidateJson } from "./types.js";

const SCALE = 4; // crop pixels are small; draw at 4x

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

async function boot(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("service") ?? "http://127.0.0.1:8008";
  const api = new ReviewApi(base);

  const sessionId = params.get("session");
  const bundle = params.get("bundle");
  const render = () => {
    void refresh();
  };
  const ctl = sessionId
    ? await SessionController.resume(api, sessionId, render)
    : await SessionController.create(api, { bundle: bundle ?? undefined }, render);

  const canvas = el<HTMLCanvasElement>("crop");
  const ctx = canvas.getContext("2d");
  if (!ctx) {
    throw new Error("canvas 2d context unavailable");
  }
  const img = new Image();
  let current: CandidateJson | null = null;
  let missedMode = false;
  let lastIndex = -1;

  function drawScene(): void {
    if (!current || !ctx) {
      return;
    }
    canvas.width = current.crop.width * SCALE;
    canvas.height = current.crop.height * SCALE;
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(img, 0, 0, canvas.width, canvas.height);
    if (ctl.overlayVisible) {
      ctx.strokeStyle = "#ff3355";
      ctx.lineWidth = 2;
      drawOverlay(ctx, current.overlay.parts, SCALE);
    }
  }

  async function refresh(): Promise<void> {
    const p = ctl.panel();
    el("precision").textContent = p.precision;
    el("recall").textContent = p.recall;
    el("f1").textContent = p.f1;
    el("tally").textContent =
      `${p.tally.correct} correct / ${p.tally.false} false / ` +
      `${p.missed} missed / ${p.tally.undecided} undecided`;
    el("position").textContent = p.position;
    el("status").textContent =
      p.status + (p.queued > 0 ? ` (${p.queued} verdict(s) queued for retry)` : "");
    const notice = el("notice");
    notice.textContent = p.notice ?? "";
    notice.style.display = p.notice ? "block" : "none";

    if (ctl.state.index >= ctl.state.candidates.length) {
      el("meta").textContent = "queue complete";
      current = null;
      ctx?.clearRect(0, 0, canvas.width, canvas.height);
      return;
    }
    if (ctl.state.index !== lastIndex) {
      lastIndex = ctl.state.index;
      current = await ctl.candidate();
      img.onload = drawScene;
      img.src = api.cropUrl(current.crop_url);
      el("meta").textContent =
        `installation ${current.installation_id} on ${current.tile_id}, ` +
        `${current.pixel_count} px, ${fmtArea(current.area_m2)}`;
    } else {
      drawScene();
    }
  }

  document.addEventListener("keydown", (ev) => {
    const action = actionForKey(ev.key);
    if (!action) {
      return;
    }
    ev.preventDefault();
    switch (action.kind) {
      case "verdict":
        void ctl.verdict(action.label);
        break;
      case "next":
        ctl.next();
        break;
      case "prev":
        ctl.prev();
        break;
      case "skip-to-undecided":
        ctl.skipToUndecided();
        break;
      case "toggle-overlay":
        ctl.toggleOverlay();
        break;
      case "missed-mode":
        missedMode = !missedMode;
        el("mode").textContent = missedMode ? "click the imagery to mark a missed array" : "";
        break;
    }
  });

  canvas.addEventListener("click", (ev) => {
    if (!missedMode || !current) {
      return;
    }
    const rect = canvas.getBoundingClientRect();
    const point = canvasToWorld(
      current.crop.geo,
      ev.clientX - rect.left,
      ev.clientY - rect.top,
      SCALE,
    );
    missedMode = false;
    el("mode").textContent = "";
    void ctl.markMissed({ point }, { mode: "queue" });
  });

  window.addEventListener("online", () => void ctl.flushRetries());
  setInterval(() => {
    if (ctl.retries.size > 0) {
      void ctl.flushRetries();
    }
  }, 5000);

  await refresh();
}

void boot().catch((err) => {
  document.body.textContent = `failed to start: ${err}`;
});
