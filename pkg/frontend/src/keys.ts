/** Keyboard-first verdicts: one key per action, no chords. */

import type { VerdictLabel } from "./types.js";

export type UiAction =
  | { kind: "verdict"; label: VerdictLabel }
  | { kind: "next" }
  | { kind: "prev" }
  | { kind: "skip-to-undecided" }
  | { kind: "toggle-overlay" }
  | { kind: "missed-mode" };

/** Map a KeyboardEvent.key to a UI action; null for keys we don't own. */
export function actionForKey(key: string): UiAction | null {
  switch (key) {
    case "c":
    case "C":
      return { kind: "verdict", label: "correct" };
    case "f":
    case "F":
      return { kind: "verdict", label: "false" };
    case "m":
    case "M":
      return { kind: "missed-mode" };
    case "o":
    case "O":
      return { kind: "toggle-overlay" };
    case "ArrowRight":
      return { kind: "next" };
    case "ArrowLeft":
      return { kind: "prev" };
    case " ":
      return { kind: "skip-to-undecided" };
    default:
      return null;
  }
}
