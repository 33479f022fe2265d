/** Shared test doubles: seeded RNG, fake API, controllable preloader. */

import { ApiError, type AnnotationApi } from "../src/client.js";
import type { Preloader } from "../src/session.js";
import type {
  Choice,
  NextPairResponse,
  PairStatus,
  PreferenceAck,
  ResolutionAck,
  SessionInfo,
  VoteTally,
} from "../src/types.js";

/** Deterministic uniform [0,1) stream (mulberry32). */
export function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export interface FakePair {
  pair_id: string;
  image_a: string;
  image_b: string;
  votes?: VoteTally;
}

/** In-memory stand-in for the annotation service: a queue that shrinks
 * as pairs are answered, optional one-shot 409s per pair id. */
export class FakeApi implements AnnotationApi {
  submissions: Array<{ pairId: string; choice: Choice; round: number }> = [];
  resolutions: Array<{ pairId: string; finalChoice: Choice; rationale?: string }> =
    [];

  constructor(
    private pairs: FakePair[],
    private readonly conflicts: Set<string> = new Set(),
    private readonly role: "annotator" | "expert" = "annotator",
  ) {}

  async session(): Promise<SessionInfo> {
    return { annotator_id: "fake", group: 1, role: this.role };
  }

  async nextPair(): Promise<NextPairResponse> {
    const head = this.pairs[0];
    if (head === undefined) {
      return { pair_id: null, remaining: 0 };
    }
    return { ...head, remaining: this.pairs.length, round: 1 };
  }

  imageUrl(imageId: string): string {
    return `/images/${imageId}`;
  }

  async submitPreference(
    pairId: string,
    choice: Choice,
    round = 1,
  ): Promise<PreferenceAck> {
    this.pairs = this.pairs.filter((p) => p.pair_id !== pairId);
    if (this.conflicts.has(pairId)) {
      this.conflicts.delete(pairId);
      throw new ApiError(409, "already stored");
    }
    this.submissions.push({ pairId, choice, round });
    return {
      status: "stored",
      pair_id: pairId,
      annotator_id: "fake",
      choice,
      round,
    };
  }

  async pairStatus(pairId: string): Promise<PairStatus> {
    return {
      pair_id: pairId,
      state: "incomplete",
      votes: { A: 0, B: 0, equal: 0 },
      final_choice: null,
    };
  }

  async submitResolution(
    pairId: string,
    finalChoice: Choice,
    rationale?: string,
  ): Promise<ResolutionAck> {
    this.pairs = this.pairs.filter((p) => p.pair_id !== pairId);
    this.resolutions.push({ pairId, finalChoice, rationale });
    return { status: "resolved", pair_id: pairId, final_choice: finalChoice };
  }
}

export const instantPreload: Preloader = async () => {};

/** Preloader whose promises resolve only when release() is called. */
export function gatedPreloader(): {
  preload: Preloader;
  release: () => void;
  urls: string[];
} {
  const pending: Array<() => void> = [];
  const urls: string[] = [];
  return {
    preload: (url: string) => {
      urls.push(url);
      return new Promise<void>((resolve) => pending.push(resolve));
    },
    release: () => {
      for (const resolve of pending.splice(0)) {
        resolve();
      }
    },
    urls,
  };
}

export function tick(): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, 0));
}
