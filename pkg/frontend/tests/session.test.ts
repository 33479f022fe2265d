import { describe, expect, it } from "vitest";

import { AnnotationSession } from "../src/session.js";
import { choiceForKey } from "../src/keyboard.js";
import {
  FakeApi,
  type FakePair,
  gatedPreloader,
  instantPreload,
  mulberry32,
  tick,
} from "./helpers.js";

function pair(k: number): FakePair {
  return { pair_id: `p${k}`, image_a: `p${k}_a`, image_b: `p${k}_b` };
}

describe("annotation session", () => {
  it("keeps choices disabled until both images finish loading", async () => {
    const api = new FakeApi([pair(1)]);
    const gate = gatedPreloader();
    const session = new AnnotationSession(api, mulberry32(1), gate.preload);

    const started = session.start();
    await tick();
    expect(session.state).toBe("loading");
    expect(session.choicesEnabled()).toBe(false);
    expect(gate.urls).toHaveLength(2);

    await session.choose("left"); // ignored while disabled
    expect(api.submissions).toHaveLength(0);

    gate.release();
    await started;
    expect(session.state).toBe("ready");
    expect(session.choicesEnabled()).toBe(true);
    expect(session.view?.imagesLoaded).toBe(true);
  });

  it("submits the canonical label for the picked side", async () => {
    // rng pinned high: first assignment is B-left
    const api = new FakeApi([pair(1), pair(2)]);
    const session = new AnnotationSession(api, () => 0.9, instantPreload);
    await session.start();
    expect(session.view?.assignment).toBe("B-left");

    await session.choose("left");
    expect(api.submissions).toEqual([{ pairId: "p1", choice: "B", round: 1 }]);

    // rng pinned low on a fresh session: A-left, same key, other label
    const api2 = new FakeApi([pair(1)]);
    const session2 = new AnnotationSession(api2, () => 0.1, instantPreload);
    await session2.start();
    expect(session2.view?.assignment).toBe("A-left");
    await session2.choose("left");
    expect(api2.submissions).toEqual([{ pairId: "p1", choice: "A", round: 1 }]);
  });

  it("maps arrow keys to sides and E to equal", async () => {
    const api = new FakeApi([pair(1)]);
    const session = new AnnotationSession(api, () => 0.1, instantPreload);
    await session.start();
    expect(choiceForKey("ArrowRight")).toBe("right");
    expect(choiceForKey("x")).toBeNull();
    await session.choose(choiceForKey("e")!);
    expect(api.submissions[0]?.choice).toBe("equal");
  });

  it("notes a conflict and moves on without blocking", async () => {
    const api = new FakeApi([pair(1), pair(2)], new Set(["p1"]));
    const session = new AnnotationSession(api, mulberry32(3), instantPreload);
    await session.start();

    await session.choose("right");
    expect(session.notices).toHaveLength(1);
    expect(session.notices[0]).toContain("p1");
    expect(session.submitted).toBe(0);
    expect(session.state).toBe("ready");
    expect(session.view?.pairId).toBe("p2");

    await session.choose("right");
    expect(session.submitted).toBe(1);
    expect(api.submissions).toHaveLength(1);
  });

  it("reaches the completion state when the queue drains", async () => {
    const api = new FakeApi([pair(1)]);
    const session = new AnnotationSession(api, mulberry32(4), instantPreload);
    await session.start();
    await session.choose("equal");
    expect(session.state).toBe("complete");
    expect(session.view).toBeNull();
    expect(session.remaining).toBe(0);
    await session.choose("left"); // no-op after completion
    expect(api.submissions).toHaveLength(1);
  });

  it("starts directly in the completion state on an empty queue", async () => {
    const session = new AnnotationSession(
      new FakeApi([]),
      mulberry32(5),
      instantPreload,
    );
    await session.start();
    expect(session.state).toBe("complete");
  });

  it("randomizes sides per presentation, not per session", async () => {
    const api = new FakeApi(Array.from({ length: 40 }, (_, k) => pair(k)));
    const session = new AnnotationSession(api, mulberry32(6), instantPreload);
    await session.start();
    const seen = new Set<string>();
    while (session.state === "ready") {
      seen.add(session.view!.assignment);
      await session.choose("left");
    }
    expect(seen).toEqual(new Set(["A-left", "B-left"]));
  });
});
