// HTML-string renderers, kept pure so they are testable without a DOM.

import type { ChatViewState } from "./store.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderMessages(state: ChatViewState): string {
  const rows = state.messages.map((m) =>
    `<div class="msg ${m.role}"><span class="who">${m.role}</span>` +
    `<span class="text">${escapeHtml(m.text)}</span></div>`);
  return `<div class="messages">${rows.join("")}</div>`;
}

export function renderRecommendations(state: ChatViewState): string {
  const recs = state.pendingRecommendations;
  if (!recs || recs.length === 0) return "";
  const cards = recs.map((r) =>
    `<div class="rec-card" data-item="${r.item_id}">` +
    `<span class="rec-name">${escapeHtml(r.name)}</span>` +
    `<span class="rec-score">${r.score.toFixed(3)}</span>` +
    `<button class="accept" data-item="${r.item_id}">That one!</button>` +
    `</div>`);
  return `<div class="recommendations">${cards.join("")}` +
    `<button class="reject-all">None of these</button></div>`;
}

export function renderAttentionBars(state: ChatViewState): string {
  const bars = state.attention.map((b) => {
    const pct = (b.weight * 100).toFixed(1);
    return `<div class="attn-row"><span class="attn-label">` +
      `${escapeHtml(b.relation)}</span>` +
      `<div class="attn-bar" style="width:${pct}%"></div>` +
      `<span class="attn-value">${b.weight.toFixed(3)}</span></div>`;
  });
  return `<div class="attention">${bars.join("")}</div>`;
}

export function renderCandidateGauge(state: ChatViewState): string {
  const pct = (state.candidateRatio * 100).toFixed(1);
  return `<div class="gauge">candidate pool: ${state.candidatesLeft} items, ` +
    `${pct}% within threshold</div>`;
}

export function renderStatus(state: ChatViewState): string {
  if (state.error) {
    return `<div class="status error">${escapeHtml(state.error)}` +
      `<button class="retry">retry</button></div>`;
  }
  if (state.done) {
    const summary = state.outcome === "success"
      ? `Found it in ${state.turnsUsed} turn(s).`
      : "No luck this time.";
    return `<div class="status done ${state.outcome}">${summary}</div>`;
  }
  return "";
}

export function renderApp(state: ChatViewState): string {
  return [
    renderStatus(state),
    renderMessages(state),
    renderRecommendations(state),
    renderAttentionBars(state),
    renderCandidateGauge(state),
  ].join("\n");
}
