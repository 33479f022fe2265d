/** Keyboard entry: arrow keys pick a side, E or = declares equal quality. */

import type { DisplayChoice } from "./types.js";

const KEY_CHOICES: Record<string, DisplayChoice> = {
  ArrowLeft: "left",
  ArrowRight: "right",
  e: "equal",
  E: "equal",
  "=": "equal",
};

/** The display-side choice bound to a KeyboardEvent.key, if any. */
export function choiceForKey(key: string): DisplayChoice | null {
  return KEY_CHOICES[key] ?? null;
}
