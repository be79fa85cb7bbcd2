// Headless chat controller: the glue between the API client and the view
// state. The browser entry point (main.ts) and the round-trip test both
// drive this class, so live behavior is exactly what the tests exercise.

import { ApiClient, TurnPayload } from "./api.js";
import {
  ChatViewState, applyError, applyRejection, applyServerTurn,
  applyUserMessage, initialState,
} from "./store.js";

export class ChatApp {
  state: ChatViewState = initialState();

  constructor(readonly api: ApiClient,
              readonly onChange: (s: ChatViewState) => void = () => {},
              readonly clock: () => number = Date.now) {}

  private commit(next: ChatViewState): ChatViewState {
    this.state = next;
    this.onChange(next);
    return next;
  }

  private async serverTurn(call: () => Promise<TurnPayload>): Promise<ChatViewState> {
    try {
      const payload = await call();
      return this.commit(applyServerTurn(this.state, payload, this.clock()));
    } catch (err) {
      return this.commit(applyError(this.state, (err as Error).message));
    }
  }

  /** Create a session; the first system message is the opening question. */
  startChat(userId: string | number): Promise<ChatViewState> {
    this.commit(initialState());
    return this.serverTurn(() => this.api.createSession(userId));
  }

  /** Send a free-text answer to the open clarifying question. */
  sendAnswer(text: string): Promise<ChatViewState> {
    const trimmed = text.trim();
    if (!this.state.sessionId || !trimmed) {
      return Promise.resolve(this.state);
    }
    this.commit(applyUserMessage(this.state, trimmed, this.clock()));
    const sid = this.state.sessionId;
    return this.serverTurn(() => this.api.reply(sid, trimmed));
  }

  /** Accept the shown list (the user found something they like). */
  accept(): Promise<ChatViewState> {
    if (!this.state.sessionId || !this.state.pendingRecommendations) {
      return Promise.resolve(this.state);
    }
    this.commit(applyUserMessage(this.state, "accept", this.clock()));
    const sid = this.state.sessionId;
    return this.serverTurn(() => this.api.judge(sid, true));
  }

  /** Reject the shown list, or selected item ids from it. */
  reject(itemIds?: number[]): Promise<ChatViewState> {
    if (!this.state.sessionId || !this.state.pendingRecommendations) {
      return Promise.resolve(this.state);
    }
    this.commit(applyUserMessage(this.state, "reject", this.clock()));
    this.commit(applyRejection(this.state, itemIds));
    const sid = this.state.sessionId;
    return this.serverTurn(() => this.api.judge(sid, false, itemIds));
  }
}
