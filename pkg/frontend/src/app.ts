/** Browser bootstrap: wires the session/review flows to the DOM.
 *
 * Connection parameters come from the URL: ?api=http://host:port&token=...
 * (both fall back to a prompt). The two panes share one zoom state so
 * subtle differences can be inspected at matching magnification.
 */

import { ApiClient } from "./client.js";
import { ExpertReview, canReview, formatTally } from "./expert.js";
import { choiceForKey } from "./keyboard.js";
import { imageOn } from "./mapping.js";
import { AnnotationSession } from "./session.js";
import type { DisplayChoice, DisplaySide } from "./types.js";

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function browserPreloader(url: string): Promise<void> {
  return new Promise((resolve, reject) => {
    const img = new Image();
    img.onload = () => resolve();
    img.onerror = () => reject(new Error(`failed to load ${url}`));
    img.src = url;
  });
}

function connectionParams(): { api: string; token: string } {
  const params = new URLSearchParams(window.location.search);
  const api =
    params.get("api") ??
    window.prompt("Annotation service URL", "http://127.0.0.1:8731") ??
    "";
  const token = params.get("token") ?? window.prompt("Access token") ?? "";
  return { api: api.replace(/\/$/, ""), token };
}

async function main(): Promise<void> {
  const { api: baseUrl, token } = connectionParams();
  const api = new ApiClient(baseUrl, token);
  const info = await api.session();

  const status = element<HTMLDivElement>("status");
  const notices = element<HTMLDivElement>("notices");
  const leftPane = element<HTMLImageElement>("pane-left");
  const rightPane = element<HTMLImageElement>("pane-right");
  const equalButton = element<HTMLButtonElement>("choose-equal");
  const tally = element<HTMLDivElement>("tally");
  element<HTMLSpanElement>("who").textContent =
    `${info.annotator_id} (${info.role})`;

  let zoom = 1;
  const applyZoom = () => {
    for (const pane of [leftPane, rightPane]) {
      pane.style.transform = `scale(${zoom})`;
    }
  };
  for (const pane of [leftPane, rightPane]) {
    pane.addEventListener("wheel", (event) => {
      event.preventDefault();
      zoom = Math.min(8, Math.max(1, zoom * (event.deltaY < 0 ? 1.25 : 0.8)));
      if (session.view !== null) {
        session.view.zoom = zoom;
      }
      applyZoom();
    });
  }

  const session = new AnnotationSession(api, Math.random, browserPreloader);
  const review = new ExpertReview(api);
  const expertMode = canReview(info);

  const render = () => {
    notices.textContent = session.notices.slice(-3).join(" · ");
    if (expertMode) {
      if (review.state === "complete") {
        status.textContent = `review queue empty — ${review.resolved} resolved`;
        leftPane.removeAttribute("src");
        rightPane.removeAttribute("src");
        tally.textContent = "";
        return;
      }
      if (review.state === "ready" && review.current !== null) {
        status.textContent = `disagreement ${review.current.pairId} — ${review.remaining} remaining`;
        tally.textContent = `votes: ${formatTally(review.current.votes)}`;
        leftPane.src = api.imageUrl(review.current.imageA);
        rightPane.src = api.imageUrl(review.current.imageB);
      } else {
        status.textContent = "loading…";
      }
      return;
    }
    if (session.state === "complete") {
      status.textContent = `all done — ${session.submitted} submitted`;
      leftPane.removeAttribute("src");
      rightPane.removeAttribute("src");
      return;
    }
    if (session.state === "ready" && session.view !== null) {
      status.textContent = `pair ${session.view.pairId} — ${session.remaining} remaining`;
      leftPane.src = api.imageUrl(imageOn(session.view, "left"));
      rightPane.src = api.imageUrl(imageOn(session.view, "right"));
      zoom = 1;
      applyZoom();
    } else {
      status.textContent = "loading…";
    }
    equalButton.disabled = !session.choicesEnabled();
  };

  const choose = (display: DisplayChoice) => {
    if (expertMode) {
      return;
    }
    void session.choose(display).then(render);
  };
  const chooseSide = (side: DisplaySide) => choose(side);

  leftPane.addEventListener("click", () => chooseSide("left"));
  rightPane.addEventListener("click", () => chooseSide("right"));
  equalButton.addEventListener("click", () => choose("equal"));

  if (expertMode) {
    for (const choice of ["A", "B", "equal"] as const) {
      element<HTMLButtonElement>(`resolve-${choice}`).addEventListener(
        "click",
        () => void review.resolve(choice).then(render),
      );
      element<HTMLButtonElement>(`resolve-${choice}`).hidden = false;
    }
    equalButton.hidden = true;
  }

  window.addEventListener("keydown", (event) => {
    const display = choiceForKey(event.key);
    if (display !== null) {
      event.preventDefault();
      choose(display);
    }
  });

  if (expertMode) {
    await review.start();
  } else {
    await session.start();
  }
  render();
}

main().catch((error) => {
  const status = document.getElementById("status");
  if (status !== null) {
    status.textContent = `error: ${error instanceof Error ? error.message : error}`;
  }
});
