/** Annotator flow: fetch a pair, randomize sides, gate on image load,
 * map the picked side into canonical space, submit, advance.
 */

import { ApiError, type AnnotationApi } from "./client.js";
import { assignSides, canonicalChoice, imageOn, makeView, type Rng } from "./mapping.js";
import type { ComparisonView, DisplayChoice } from "./types.js";

export type SessionState = "idle" | "loading" | "ready" | "complete";

/** Resolves once the resource at `url` is fully loaded (Image() in the
 * browser; a controllable stub in tests). */
export type Preloader = (url: string) => Promise<void>;

export class AnnotationSession {
  state: SessionState = "idle";
  view: ComparisonView | null = null;
  remaining = 0;
  submitted = 0;
  notices: string[] = [];

  constructor(
    private readonly api: AnnotationApi,
    private readonly rng: Rng,
    private readonly preload: Preloader,
  ) {}

  start(): Promise<void> {
    return this.advance();
  }

  /** Pull the next queued pair and present it with freshly randomized
   * sides. Choices stay disabled until both images finish loading. */
  async advance(): Promise<void> {
    this.state = "loading";
    this.view = null;
    const next = await this.api.nextPair();
    this.remaining = next.remaining;
    if (next.pair_id === null || !next.image_a || !next.image_b) {
      this.state = "complete";
      return;
    }
    const view = makeView(
      next.pair_id,
      next.image_a,
      next.image_b,
      assignSides(this.rng),
      next.round ?? 1,
    );
    this.view = view;
    await Promise.all([
      this.preload(this.api.imageUrl(imageOn(view, "left"))),
      this.preload(this.api.imageUrl(imageOn(view, "right"))),
    ]);
    if (this.view === view) {
      view.imagesLoaded = true;
      this.state = "ready";
    }
  }

  choicesEnabled(): boolean {
    return this.state === "ready" && this.view !== null && this.view.imagesLoaded;
  }

  /** Submit the screen-side pick for the current view. A conflict means
   * someone already answered this pair under our identity (e.g. another
   * tab); it is noted and the session moves on rather than blocking. */
  async choose(display: DisplayChoice): Promise<void> {
    if (!this.choicesEnabled() || this.view === null) {
      return;
    }
    const view = this.view;
    view.choice = display;
    const canonical = canonicalChoice(display, view.assignment);
    try {
      await this.api.submitPreference(view.pairId, canonical, view.round);
      this.submitted += 1;
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.notices.push(`pair ${view.pairId} already answered; skipped`);
      } else {
        throw error;
      }
    }
    await this.advance();
  }
}
