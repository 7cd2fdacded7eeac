// Annotation flow: enter an id, then loop video -> two descriptions ->
// one of three choices until the queue is empty. All state that matters
// lives on the server; this class only tracks the task currently on screen.

import { ApiError, ArenaClient, Choice, Task, storedChoiceFrom } from "./api.js";
import { VoteQueue } from "./queue.js";

export interface AppOptions {
  now?: () => number;
}

const CHOICE_KEYS: Record<string, Choice> = {
  "1": "description_1",
  "2": "description_2",
  t: "tie",
};

export class AnnotationApp {
  annotatorId: string | null = null;
  current: Task | null = null;
  private renderedAt = 0;
  private playbackStarted = false;
  private submitting = false;
  private notice: { message: string; kind: "warn" | "error" } | null = null;
  private readonly now: () => number;
  private readonly doc: Document;

  constructor(
    private root: HTMLElement,
    private client: ArenaClient,
    private queue: VoteQueue,
    options: AppOptions = {},
  ) {
    this.now = options.now ?? (() => Date.now());
    this.doc = root.ownerDocument;
    this.doc.addEventListener("keydown", (event) => this.onKey(event));
  }

  start(): void {
    this.renderIdentForm();
  }

  async begin(annotatorId: string): Promise<void> {
    const trimmed = annotatorId.trim();
    if (!trimmed) return;
    this.annotatorId = trimmed;
    this.notice = null;
    await this.advance();
  }

  /** Flush anything queued offline, then show the next task or the summary. */
  async advance(): Promise<void> {
    if (!this.annotatorId) return;
    this.current = null;
    try {
      if (this.queue.size() > 0) {
        await this.queue.flush((vote) => this.client.submitVote(vote));
      }
      const task = await this.client.nextTask(this.annotatorId);
      if (task === null) {
        await this.renderDone();
      } else {
        this.renderTask(task);
      }
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        this.renderBanner(`Unknown annotator id "${this.annotatorId}".`, "error");
        this.annotatorId = null;
        this.renderIdentForm();
        return;
      }
      this.renderRetry();
    }
  }

  async choose(choice: Choice): Promise<void> {
    if (!this.current || !this.playbackStarted || this.submitting || !this.annotatorId) {
      return;
    }
    this.submitting = true;
    const vote = {
      task_id: this.current.task_id,
      annotator_id: this.annotatorId,
      choice,
      elapsed_ms: Math.max(0, Math.round(this.now() - this.renderedAt)),
    };
    try {
      await this.client.submitVote(vote);
      this.notice = null;
    } catch (error) {
      if (error instanceof ApiError) {
        if (error.status === 409) {
          const stored = storedChoiceFrom(error);
          this.renderBanner(
            stored
              ? `This task was already voted on (stored: ${labelFor(stored)}).`
              : "This task was already voted on.",
            "warn",
          );
        } else if (error.status === 410) {
          this.renderBanner(
            "Your hold on this task expired; it has been re-queued for someone.",
            "warn",
          );
        } else if (error.status >= 500) {
          // server hiccup: the lease is still ours, keep the task on screen
          this.renderBanner("The service errored; your vote was not stored. Try again.", "error");
          this.submitting = false;
          return;
        } else {
          this.renderBanner(`Vote rejected (${error.status}).`, "error");
        }
      } else {
        // offline: park the vote locally, it flushes before the next fetch
        this.queue.enqueue(vote);
        this.renderBanner("You appear to be offline. Vote saved; it will sync automatically.", "warn");
      }
    } finally {
      this.submitting = false;
    }
    await this.advance();
  }

  // -- views ---------------------------------------------------------------

  private clear(): void {
    // nothing from the previous task may survive on screen, but a banner
    // explaining what just happened to the vote carries over one view
    this.root.textContent = "";
    this.paintNotice();
  }

  private el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
  ): HTMLElementTagNameMap[K] {
    const node = this.doc.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
  }

  private renderIdentForm(): void {
    this.clear();
    const panel = this.el("div", "panel ident");
    panel.appendChild(this.el("h1", undefined, "Description preference annotation"));
    panel.appendChild(
      this.el(
        "p",
        "hint",
        "Watch the clip, read both descriptions, then pick the one that better reflects the person's emotional state (or call it a tie).",
      ),
    );
    const form = this.el("form");
    const input = this.el("input");
    input.id = "annotator-id";
    input.placeholder = "annotator id";
    input.autocomplete = "off";
    const go = this.el("button", "primary", "Start");
    go.type = "submit";
    form.append(input, go);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.begin(input.value);
    });
    panel.appendChild(form);
    this.root.appendChild(panel);
    input.focus();
  }

  private renderTask(task: Task): void {
    this.current = task;
    this.playbackStarted = false;
    this.renderedAt = this.now();
    this.clear();

    const view = this.el("div", "panel task");
    view.id = "task-view";
    view.dataset.taskId = task.task_id;

    const video = this.el("video", "clip");
    video.id = "clip";
    video.src = task.media_url;
    video.controls = true;
    video.addEventListener("play", () => this.enableChoices(), { once: true });
    view.appendChild(video);

    const columns = this.el("div", "descriptions");
    for (const [slot, text] of [
      ["1", task.description_1],
      ["2", task.description_2],
    ] as const) {
      const card = this.el("section", "description");
      card.id = `description-${slot}`;
      card.appendChild(this.el("h2", undefined, `Description ${slot}`));
      card.appendChild(this.el("p", "body", text));
      columns.appendChild(card);
    }
    view.appendChild(columns);

    const buttons = this.el("div", "choices");
    for (const [id, choice, label] of [
      ["choice-1", "description_1", "Description 1 (1)"],
      ["choice-2", "description_2", "Description 2 (2)"],
      ["choice-tie", "tie", "Tie (t)"],
    ] as const) {
      const button = this.el("button", "choice", label);
      button.id = id;
      button.disabled = true; // enabled once playback starts
      button.addEventListener("click", () => void this.choose(choice));
      buttons.appendChild(button);
    }
    view.appendChild(buttons);
    view.appendChild(
      this.el("p", "gate-hint", "Play the clip to unlock the choices."),
    );

    this.root.appendChild(view);
    void this.renderProgressLine(task.task_id);
  }

  private enableChoices(): void {
    this.playbackStarted = true;
    for (const button of Array.from(this.root.querySelectorAll("button.choice"))) {
      (button as HTMLButtonElement).disabled = false;
    }
    const hint = this.root.querySelector(".gate-hint");
    hint?.remove();
  }

  private async renderProgressLine(taskId: string): Promise<void> {
    try {
      const progress = await this.client.progress();
      if (this.current?.task_id !== taskId) return; // view moved on meanwhile
      const line = this.el(
        "p",
        "progress",
        `${progress.votes} of ${progress.tasks} votes collected`,
      );
      line.id = "progress-line";
      this.root.querySelector("#progress-line")?.remove();
      this.root.appendChild(line);
    } catch {
      // progress is decoration; the task flow works without it
    }
  }

  private async renderDone(): Promise<void> {
    this.clear();
    const panel = this.el("div", "panel done");
    panel.id = "done-view";
    panel.appendChild(this.el("h1", undefined, "All done"));
    try {
      const progress = await this.client.progress();
      const mine = this.annotatorId ? (progress.per_annotator[this.annotatorId] ?? 0) : 0;
      panel.appendChild(
        this.el("p", "stats", `You submitted ${mine} votes in this campaign.`),
      );
      panel.appendChild(
        this.el(
          "p",
          "stats",
          `Campaign progress: ${progress.votes} of ${progress.tasks} ` +
            `(${Math.round(progress.fraction * 100)}%).`,
        ),
      );
    } catch {
      panel.appendChild(this.el("p", "stats", "Thanks for annotating."));
    }
    this.root.appendChild(panel);
  }

  private renderRetry(): void {
    this.clear();
    const panel = this.el("div", "panel retry");
    panel.id = "retry-view";
    panel.appendChild(this.el("h1", undefined, "Connection trouble"));
    panel.appendChild(
      this.el("p", undefined, "Could not reach the annotation service. Nothing was lost."),
    );
    const again = this.el("button", "primary", "Retry");
    again.id = "retry-button";
    again.addEventListener("click", () => void this.advance());
    panel.appendChild(again);
    this.root.appendChild(panel);
  }

  private renderBanner(message: string, kind: "warn" | "error"): void {
    this.notice = { message, kind };
    this.paintNotice();
  }

  private paintNotice(): void {
    this.root.querySelector(".banner")?.remove();
    if (!this.notice) return;
    const banner = this.el("div", `banner ${this.notice.kind}`, this.notice.message);
    this.root.prepend(banner);
  }

  private onKey(event: KeyboardEvent): void {
    const choice = CHOICE_KEYS[event.key.toLowerCase()];
    if (!choice || !this.current) return;
    const target = event.target as HTMLElement | null;
    if (target && target.tagName === "INPUT") return;
    void this.choose(choice);
  }
}

function labelFor(choice: string): string {
  if (choice === "description_1") return "Description 1";
  if (choice === "description_2") return "Description 2";
  return "Tie";
}
