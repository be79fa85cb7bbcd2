// Client-side view state. The store records server payloads verbatim: it
// never reorders recommendations and never resurrects rejected items.

import type { AttentionPayload, RecommendationPayload, TurnPayload } from "./api.js";

export interface ChatMessage {
  role: "system" | "user";
  text: string;
  timestamp: number;
}

export interface ChatViewState {
  sessionId: string | null;
  messages: ChatMessage[];
  pendingRecommendations: RecommendationPayload[] | null;
  attention: AttentionPayload[];
  candidateRatio: number;
  candidatesLeft: number;
  clarified: number[];
  beliefEntities: string[];
  rejectedItems: number[];
  done: boolean;
  outcome: string | null;
  turnsUsed: number | null;
  error: string | null;
}

export function initialState(): ChatViewState {
  return {
    sessionId: null,
    messages: [],
    pendingRecommendations: null,
    attention: [],
    candidateRatio: 0,
    candidatesLeft: 0,
    clarified: [],
    beliefEntities: [],
    rejectedItems: [],
    done: false,
    outcome: null,
    turnsUsed: null,
    error: null,
  };
}

export function attentionTotal(bars: AttentionPayload[]): number {
  return bars.reduce((acc, b) => acc + b.weight, 0);
}

/** Append the user's outgoing utterance (sent verbatim after trimming). */
export function applyUserMessage(state: ChatViewState, text: string,
                                 now: number): ChatViewState {
  return {
    ...state,
    messages: [...state.messages, { role: "user", text: text.trim(), timestamp: now }],
    error: null,
  };
}

/** Fold one server turn into the view. */
export function applyServerTurn(state: ChatViewState, payload: TurnPayload,
                                now: number): ChatViewState {
  const recs = payload.recommendations ?? null;
  const clash = recs?.filter((r) => state.rejectedItems.includes(r.item_id)) ?? [];
  if (clash.length > 0) {
    throw new Error(
      `server re-displayed rejected item(s): ${clash.map((r) => r.item_id).join(", ")}`);
  }
  return {
    ...state,
    sessionId: payload.session_id ?? state.sessionId,
    messages: [...state.messages,
               { role: "system", text: payload.message, timestamp: now }],
    pendingRecommendations: recs,
    attention: payload.state.relation_attention,
    candidateRatio: payload.state.candidate_ratio,
    candidatesLeft: payload.state.candidates_left,
    clarified: payload.state.clarified,
    beliefEntities: payload.state.belief_entities.map((e) => e.name),
    done: payload.state.done,
    outcome: payload.state.outcome,
    turnsUsed: payload.state.turns_used,
    error: null,
  };
}

/** Record a rejection of the currently shown list (or a subset of it). */
export function applyRejection(state: ChatViewState,
                               itemIds?: number[]): ChatViewState {
  const shown = state.pendingRecommendations ?? [];
  const rejected = itemIds ?? shown.map((r) => r.item_id);
  return {
    ...state,
    rejectedItems: [...state.rejectedItems, ...rejected],
    pendingRecommendations: null,
  };
}

export function applyError(state: ChatViewState, message: string): ChatViewState {
  return { ...state, error: message };
}
