import type { Verdict } from "./types";

export type KeyAction =
  | { type: "verdict"; verdict: Verdict }
  | { type: "move"; delta: number }
  | { type: "recompute" }
  | { type: "refresh" }
  | { type: "focus-search" }
  | { type: "dismiss" };

export interface KeyContext {
  /** True while the keystroke lands in a text input or other editable element. */
  editable: boolean;
  /** True when a modifier (ctrl/meta/alt) is held. */
  modified: boolean;
}

/**
 * Map a keystroke to a board action. Pure: the caller decides what counts
 * as an editable target and applies the action.
 */
export function interpretKey(key: string, ctx: KeyContext): KeyAction | null {
  if (ctx.modified) return null;
  if (ctx.editable) {
    return key === "Escape" ? { type: "dismiss" } : null;
  }
  switch (key) {
    case "v":
      return { type: "verdict", verdict: "visual" };
    case "n":
      return { type: "verdict", verdict: "nonvisual" };
    case "u":
      return { type: "verdict", verdict: "unlabeled" };
    case "j":
    case "ArrowDown":
      return { type: "move", delta: 1 };
    case "k":
    case "ArrowUp":
      return { type: "move", delta: -1 };
    case "r":
      return { type: "recompute" };
    case "g":
      return { type: "refresh" };
    case "/":
      return { type: "focus-search" };
    case "Escape":
      return { type: "dismiss" };
    default:
      return null;
  }
}
