/** Wire types mirroring the annotation service payloads, plus view state. */

/** Canonical preference space: the stored label, independent of display. */
export type Choice = "A" | "B" | "equal";

export type DisplaySide = "left" | "right";

/** What the annotator physically picked on screen. */
export type DisplayChoice = DisplaySide | "equal";

/** Which canonical pair member is shown on the left pane. */
export type SideAssignment = "A-left" | "B-left";

export type Role = "annotator" | "expert";

export interface SessionInfo {
  annotator_id: string;
  group: number | null;
  role: Role;
}

export interface VoteTally {
  A: number;
  B: number;
  equal: number;
}

/** GET /pairs/next — pair_id is null once the queue is drained. */
export interface NextPairResponse {
  pair_id: string | null;
  image_a?: string;
  image_b?: string;
  remaining: number;
  round?: number;
  /** Present for expert sessions only. */
  votes?: VoteTally;
}

export interface PreferenceAck {
  status: "stored";
  pair_id: string;
  annotator_id: string;
  choice: Choice;
  round: number;
}

export interface PairStatus {
  pair_id: string;
  state: "incomplete" | "unanimous" | "disagreed" | "resolved";
  votes: VoteTally;
  final_choice: Choice | null;
}

export interface ResolutionAck {
  status: "resolved";
  pair_id: string;
  final_choice: Choice;
}

/**
 * One presentation of a pair. The side assignment is randomized per
 * presentation and recorded here so the submitted choice can always be
 * mapped back into canonical (A, B) space.
 */
export interface ComparisonView {
  pairId: string;
  imageA: string;
  imageB: string;
  assignment: SideAssignment;
  round: number;
  zoom: number;
  choice: DisplayChoice | null;
  imagesLoaded: boolean;
}
