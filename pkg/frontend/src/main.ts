// Browser entry point: wires the chat controller to the DOM.

import { ApiClient } from "./api.js";
import { ChatApp } from "./app.js";
import { renderApp } from "./render.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8077";

const root = document.getElementById("app")!;
const form = document.getElementById("start-form") as HTMLFormElement;
const userInput = document.getElementById("user-id") as HTMLInputElement;
const answerForm = document.getElementById("answer-form") as HTMLFormElement;
const answerInput = document.getElementById("answer-text") as HTMLInputElement;

const app = new ChatApp(new ApiClient(baseUrl), (state) => {
  root.innerHTML = renderApp(state);
  const waitingForAnswer = !state.done && !state.pendingRecommendations
    && state.sessionId !== null;
  answerForm.style.display = waitingForAnswer ? "flex" : "none";
  root.scrollTop = root.scrollHeight;
});

form.addEventListener("submit", (ev) => {
  ev.preventDefault();
  void app.startChat(userInput.value.trim());
});

answerForm.addEventListener("submit", (ev) => {
  ev.preventDefault();
  const text = answerInput.value;
  answerInput.value = "";
  void app.sendAnswer(text);
});

root.addEventListener("click", (ev) => {
  const el = ev.target as HTMLElement;
  if (el.matches("button.accept")) {
    void app.accept();
  } else if (el.matches("button.reject-all")) {
    void app.reject();
  } else if (el.matches("button.retry") && app.state.sessionId === null) {
    void app.startChat(userInput.value.trim());
  }
});
