/** Display-side randomization and the canonical-choice mapping.
 *
 * The stored label must not depend on which side an image happened to
 * be shown on, so every presentation carries a recorded SideAssignment
 * and every screen-side choice is translated through it.
 */

import type {
  Choice,
  ComparisonView,
  DisplayChoice,
  DisplaySide,
  SideAssignment,
} from "./types.js";

/** Uniform [0, 1) source; injectable so presentations are testable. */
export type Rng = () => number;

export function assignSides(rng: Rng): SideAssignment {
  return rng() < 0.5 ? "A-left" : "B-left";
}

export function makeView(
  pairId: string,
  imageA: string,
  imageB: string,
  assignment: SideAssignment,
  round = 1,
): ComparisonView {
  return {
    pairId,
    imageA,
    imageB,
    assignment,
    round,
    zoom: 1,
    choice: null,
    imagesLoaded: false,
  };
}

/** The image id displayed on the given side under this view's assignment. */
export function imageOn(view: ComparisonView, side: DisplaySide): string {
  const aLeft = view.assignment === "A-left";
  if (side === "left") {
    return aLeft ? view.imageA : view.imageB;
  }
  return aLeft ? view.imageB : view.imageA;
}

/** Map what was picked on screen into the canonical label space. */
export function canonicalChoice(
  display: DisplayChoice,
  assignment: SideAssignment,
): Choice {
  if (display === "equal") {
    return "equal";
  }
  const aLeft = assignment === "A-left";
  if (display === "left") {
    return aLeft ? "A" : "B";
  }
  return aLeft ? "B" : "A";
}

/** Inverse of canonicalChoice: where a canonical label sits on screen. */
export function displayChoice(
  choice: Choice,
  assignment: SideAssignment,
): DisplayChoice {
  if (choice === "equal") {
    return "equal";
  }
  const aLeft = assignment === "A-left";
  if (choice === "A") {
    return aLeft ? "left" : "right";
  }
  return aLeft ? "right" : "left";
}
