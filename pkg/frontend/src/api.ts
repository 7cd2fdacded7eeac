// Thin typed client over the annotation service HTTP API. The payloads here
// are everything the UI is allowed to know: no model identities, no
// presentation direction.

export type Choice = "description_1" | "description_2" | "tie";

export interface Task {
  task_id: string;
  sample: string;
  media_url: string;
  description_1: string;
  description_2: string;
}

export interface VoteSubmission {
  task_id: string;
  annotator_id: string;
  choice: Choice;
  elapsed_ms: number | null;
}

export interface Progress {
  tasks: number;
  votes: number;
  fraction: number;
  per_pair: Record<string, { votes: number; of: number }>;
  per_annotator: Record<string, number>;
}

export interface Rankings {
  banner: string;
  winner: string | null;
}

export class ApiError extends Error {
  constructor(
    message: string,
    readonly status: number,
    readonly detail: unknown = undefined,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ArenaClient {
  private fetchFn: FetchLike;

  constructor(
    private baseUrl: string = "",
    fetchFn?: FetchLike,
  ) {
    // bind lazily: a bare `fetch` reference loses its window binding
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request(path: string, init?: RequestInit): Promise<unknown> {
    const res = await this.fetchFn(this.baseUrl + path, init);
    let body: unknown = null;
    try {
      body = await res.json();
    } catch {
      // non-JSON error bodies keep the status, lose the detail
    }
    if (!res.ok) {
      const detail = (body as { detail?: unknown } | null)?.detail;
      throw new ApiError(`${path} failed with ${res.status}`, res.status, detail);
    }
    return body;
  }

  async nextTask(annotatorId: string): Promise<Task | null> {
    const body = (await this.request(
      `/api/tasks/next?annotator=${encodeURIComponent(annotatorId)}`,
    )) as { task: Task | null };
    return body.task;
  }

  async submitVote(vote: VoteSubmission): Promise<void> {
    await this.request("/api/votes", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(vote),
    });
  }

  async progress(): Promise<Progress> {
    return (await this.request("/api/progress")) as Progress;
  }

  async rankings(): Promise<Rankings> {
    return (await this.request("/api/rankings")) as Rankings;
  }
}

/** The prior vote a 409 conflict reports, if the detail carries one. */
export function storedChoiceFrom(error: ApiError): string | null {
  const detail = error.detail as { stored_choice?: string } | undefined;
  return detail?.stored_choice ?? null;
}
