// Typed client for the convrec session API.

export interface RecommendationPayload {
  item_id: number;
  name: string;
  score: number;
}

export interface AttentionPayload {
  relation: string;
  weight: number;
}

export interface StatePayload {
  turn: number;
  candidate_ratio: number;
  candidates_left: number;
  clarified: number[];
  belief_entities: { id: number; name: string }[];
  relation_attention: AttentionPayload[];
  done: boolean;
  outcome: string | null;
  turns_used: number | null;
}

export interface TurnPayload {
  session_id?: string;
  message: string;
  recommendations: RecommendationPayload[] | null;
  linked_entities?: number[];
  state: StatePayload;
}

export interface TranscriptPayload {
  session_id: string;
  user: number;
  messages: { role: string; message: string }[];
  turns: unknown[];
  state: StatePayload;
}

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(detail);
  }
}

async function parse<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = `HTTP ${res.status}`;
    try {
      const body = await res.json();
      if (body.detail) detail = String(body.detail);
    } catch {
      // body was not JSON; keep the status line
    }
    throw new ApiError(res.status, detail);
  }
  return (await res.json()) as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string,
              readonly fetchFn: typeof fetch = fetch) {}

  private post<T>(path: string, body: unknown): Promise<T> {
    return this.fetchFn(`${this.baseUrl}${path}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    }).then((res) => parse<T>(res));
  }

  createSession(userId: string | number): Promise<TurnPayload> {
    return this.post("/sessions", { user_id: userId });
  }

  reply(sessionId: string, text: string): Promise<TurnPayload> {
    return this.post(`/sessions/${sessionId}/reply`, { text });
  }

  judge(sessionId: string, accept: boolean,
        rejectedItems?: number[]): Promise<TurnPayload> {
    return this.post(`/sessions/${sessionId}/judge`, {
      accept,
      rejected_items: rejectedItems ?? null,
    });
  }

  transcript(sessionId: string): Promise<TranscriptPayload> {
    return this.fetchFn(`${this.baseUrl}/sessions/${sessionId}`)
      .then((res) => parse<TranscriptPayload>(res));
  }
}
