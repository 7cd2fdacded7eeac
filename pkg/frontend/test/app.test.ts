// @vitest-environment happy-dom
import { describe, expect, it, vi } from "vitest";

import { ArenaClient, Task } from "../src/api.js";
import { KvStore, VoteQueue } from "../src/queue.js";
import { AnnotationApp } from "../src/app.js";

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

class MemoryStore implements KvStore {
  private data = new Map<string, string>();
  getItem(key: string) {
    return this.data.get(key) ?? null;
  }
  setItem(key: string, value: string) {
    this.data.set(key, value);
  }
}

function task(n: number): Task {
  return {
    task_id: `task-${n}`,
    sample: `clip-${n}`,
    media_url: `/media/clip-${n}`,
    description_1: `guarded warmth, take ${n}`,
    description_2: `a flat recap, take ${n}`,
  };
}

/** In-memory stand-in for the annotation service. */
class Harness {
  tasks: (Task | null)[] = [];
  votes: Array<Record<string, unknown>> = [];
  offline = false;
  voteHook: ((vote: Record<string, unknown>) => Response | null) | null = null;
  progressBody = { tasks: 3, votes: 0, fraction: 0, per_pair: {}, per_annotator: {} };

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    if (this.offline) throw new TypeError("fetch failed");
    if (input.startsWith("/api/tasks/next")) {
      return jsonResponse(200, { task: this.tasks.shift() ?? null });
    }
    if (input === "/api/votes") {
      const vote = JSON.parse(String(init?.body)) as Record<string, unknown>;
      const hooked = this.voteHook?.(vote);
      if (hooked) return hooked;
      this.votes.push(vote);
      return jsonResponse(200, { status: "stored" });
    }
    if (input === "/api/progress") return jsonResponse(200, this.progressBody);
    return jsonResponse(404, { detail: "no such route" });
  };
}

function makeApp(harness: Harness) {
  document.body.innerHTML = '<div id="app"></div>';
  const root = document.getElementById("app")!;
  const client = new ArenaClient("", harness.fetch);
  const queue = new VoteQueue(new MemoryStore());
  let tick = 1000;
  const app = new AnnotationApp(root, client, queue, { now: () => (tick += 250) });
  return { app, root, queue };
}

function playClip(root: HTMLElement): void {
  root.querySelector("#clip")!.dispatchEvent(new Event("play"));
}

function choiceButtons(root: HTMLElement): HTMLButtonElement[] {
  return Array.from(root.querySelectorAll("button.choice"));
}

describe("AnnotationApp", () => {
  it("walks from the ident form to a blinded task view", async () => {
    const harness = new Harness();
    harness.tasks = [task(1)];
    const { app, root } = makeApp(harness);
    app.start();

    const input = root.querySelector<HTMLInputElement>("#annotator-id")!;
    input.value = "ann-a";
    root.querySelector("form")!.dispatchEvent(new Event("submit", { cancelable: true }));

    await vi.waitFor(() => expect(root.querySelector("#task-view")).not.toBeNull());
    const view = root.querySelector<HTMLElement>("#task-view")!;
    expect(view.dataset.taskId).toBe("task-1");
    expect(root.querySelector("#description-1")?.textContent).toContain("guarded warmth, take 1");
    expect(root.querySelector("#description-2")?.textContent).toContain("a flat recap, take 1");
    expect(root.querySelector<HTMLVideoElement>("#clip")?.src).toContain("/media/clip-1");
    // the view shows exactly what the API sent: no model names anywhere
    expect(root.innerHTML).not.toMatch(/model|direction|forward|reversed/i);
  });

  it("keeps the choices locked until playback starts", async () => {
    const harness = new Harness();
    harness.tasks = [task(1)];
    const { app, root } = makeApp(harness);
    await app.begin("ann-a");

    expect(choiceButtons(root).map((b) => b.disabled)).toEqual([true, true, true]);
    await app.choose("description_1"); // gated, must be a no-op
    expect(harness.votes).toHaveLength(0);

    playClip(root);
    expect(choiceButtons(root).map((b) => b.disabled)).toEqual([false, false, false]);
    expect(root.querySelector(".gate-hint")).toBeNull();
  });

  it("submits the vote with elapsed time and advances to a clean view", async () => {
    const harness = new Harness();
    harness.tasks = [task(1), task(2)];
    const { app, root } = makeApp(harness);
    await app.begin("ann-a");
    playClip(root);

    root.querySelector<HTMLButtonElement>("#choice-1")!.click();
    await vi.waitFor(() =>
      expect(root.querySelector<HTMLElement>("#task-view")?.dataset.taskId).toBe("task-2"),
    );

    expect(harness.votes).toHaveLength(1);
    const vote = harness.votes[0]!;
    expect(vote.task_id).toBe("task-1");
    expect(vote.annotator_id).toBe("ann-a");
    expect(vote.choice).toBe("description_1");
    expect(vote.elapsed_ms).toBeGreaterThan(0);
    // nothing from the first task left on screen, and the gate is back
    expect(root.innerHTML).not.toContain("take 1");
    expect(choiceButtons(root).every((b) => b.disabled)).toBe(true);
  });

  it("maps the 1/2/t keys onto the choices", async () => {
    const harness = new Harness();
    harness.tasks = [task(1), task(2)];
    const { app, root } = makeApp(harness);
    await app.begin("ann-a");

    document.dispatchEvent(new KeyboardEvent("keydown", { key: "2" }));
    await Promise.resolve();
    expect(harness.votes).toHaveLength(0); // still gated

    playClip(root);
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "2" }));
    await vi.waitFor(() => expect(harness.votes).toHaveLength(1));
    expect(harness.votes[0]!.choice).toBe("description_2");

    await vi.waitFor(() =>
      expect(root.querySelector<HTMLElement>("#task-view")?.dataset.taskId).toBe("task-2"),
    );
    playClip(root);
    document.dispatchEvent(new KeyboardEvent("keydown", { key: "T" }));
    await vi.waitFor(() => expect(harness.votes).toHaveLength(2));
    expect(harness.votes[1]!.choice).toBe("tie");
  });

  it("ends on a summary with personal stats", async () => {
    const harness = new Harness();
    harness.tasks = [task(1)];
    harness.progressBody = {
      tasks: 6,
      votes: 5,
      fraction: 5 / 6,
      per_pair: {},
      per_annotator: { "ann-a": 5 },
    };
    const { app, root } = makeApp(harness);
    await app.begin("ann-a");
    playClip(root);
    await app.choose("tie");

    const done = root.querySelector("#done-view");
    expect(done).not.toBeNull();
    expect(done!.textContent).toContain("You submitted 5 votes");
    expect(done!.textContent).toContain("5 of 6");
  });

  it("shows the stored vote on a conflict and moves on", async () => {
    const harness = new Harness();
    harness.tasks = [task(1), task(2)];
    harness.voteHook = (vote) =>
      vote.task_id === "task-1"
        ? jsonResponse(409, {
            detail: { message: "task already voted", stored_choice: "tie" },
          })
        : null;
    const { app, root } = makeApp(harness);
    await app.begin("ann-a");
    playClip(root);
    await app.choose("description_1");

    expect(root.querySelector<HTMLElement>("#task-view")?.dataset.taskId).toBe("task-2");
    const banner = root.querySelector(".banner.warn");
    expect(banner?.textContent).toContain("already voted");
    expect(banner?.textContent).toContain("Tie");
  });

  it("explains an expired task hold and moves on", async () => {
    const harness = new Harness();
    harness.tasks = [task(1), task(2)];
    harness.voteHook = (vote) =>
      vote.task_id === "task-1"
        ? jsonResponse(410, { detail: "task hold expired" })
        : null;
    const { app, root } = makeApp(harness);
    await app.begin("ann-a");
    playClip(root);
    await app.choose("description_2");

    expect(root.querySelector(".banner.warn")?.textContent).toContain("re-queued");
    expect(root.querySelector<HTMLElement>("#task-view")?.dataset.taskId).toBe("task-2");
  });

  it("keeps the task on screen when the service errors", async () => {
    const harness = new Harness();
    harness.tasks = [task(1), task(2)];
    let failures = 1;
    harness.voteHook = () =>
      failures-- > 0 ? jsonResponse(500, { detail: "internal error" }) : null;
    const { app, root } = makeApp(harness);
    await app.begin("ann-a");
    playClip(root);

    await app.choose("description_1");
    // vote not stored, same task still up, try again works
    expect(root.querySelector<HTMLElement>("#task-view")?.dataset.taskId).toBe("task-1");
    expect(root.querySelector(".banner.error")?.textContent).toContain("not stored");

    await app.choose("description_1");
    expect(harness.votes).toHaveLength(1);
    expect(root.querySelector<HTMLElement>("#task-view")?.dataset.taskId).toBe("task-2");
  });

  it("parks the vote offline and recovers through the retry view", async () => {
    const harness = new Harness();
    harness.tasks = [task(1), task(2)];
    const { app, root, queue } = makeApp(harness);
    await app.begin("ann-a");
    playClip(root);

    harness.offline = true;
    await app.choose("description_1");
    expect(queue.size()).toBe(1);
    expect(harness.votes).toHaveLength(0);
    expect(root.querySelector("#retry-view")).not.toBeNull();

    harness.offline = false;
    root.querySelector<HTMLButtonElement>("#retry-button")!.click();
    await vi.waitFor(() =>
      expect(root.querySelector<HTMLElement>("#task-view")?.dataset.taskId).toBe("task-2"),
    );
    // the parked vote went through exactly once, before the next fetch
    expect(harness.votes).toHaveLength(1);
    expect(harness.votes[0]!.task_id).toBe("task-1");
    expect(queue.size()).toBe(0);
  });

  it("sends an unknown annotator back to the ident form", async () => {
    const harness = new Harness();
    harness.fetch = async () => jsonResponse(404, { detail: "no annotator 'ghost'" });
    const { app, root } = makeApp(harness);
    await app.begin("ghost");

    expect(root.querySelector("#annotator-id")).not.toBeNull();
    expect(root.querySelector(".banner.error")?.textContent).toContain("ghost");
  });
});
