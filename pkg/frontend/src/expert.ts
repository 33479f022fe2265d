/** Expert flow: walk the disagreement queue, show the vote tally, and
 * submit final decisions.
 */

import type { AnnotationApi } from "./client.js";
import type { Choice, SessionInfo, VoteTally } from "./types.js";

export function canReview(session: SessionInfo): boolean {
  return session.role === "expert";
}

/** "3 vs 2", with an equal-vote suffix only when present. */
export function formatTally(votes: VoteTally): string {
  const base = `${votes.A} vs ${votes.B}`;
  return votes.equal > 0 ? `${base} (${votes.equal} equal)` : base;
}

export interface ReviewItem {
  pairId: string;
  imageA: string;
  imageB: string;
  votes: VoteTally;
}

export type ReviewState = "idle" | "loading" | "ready" | "complete";

export class ExpertReview {
  state: ReviewState = "idle";
  current: ReviewItem | null = null;
  remaining = 0;
  resolved = 0;

  constructor(private readonly api: AnnotationApi) {}

  start(): Promise<void> {
    return this.advance();
  }

  /** The expert queue (served by the same next-pair endpoint) holds
   * exactly the unresolved disagreements. */
  async advance(): Promise<void> {
    this.state = "loading";
    this.current = null;
    const next = await this.api.nextPair();
    this.remaining = next.remaining;
    if (next.pair_id === null || !next.image_a || !next.image_b) {
      this.state = "complete";
      return;
    }
    this.current = {
      pairId: next.pair_id,
      imageA: next.image_a,
      imageB: next.image_b,
      votes: next.votes ?? { A: 0, B: 0, equal: 0 },
    };
    this.state = "ready";
  }

  async resolve(finalChoice: Choice, rationale?: string): Promise<void> {
    if (this.state !== "ready" || this.current === null) {
      return;
    }
    await this.api.submitResolution(this.current.pairId, finalChoice, rationale);
    this.resolved += 1;
    await this.advance();
  }
}
