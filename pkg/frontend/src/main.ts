/** DOM wiring: renders the session flow into #app and forwards user input
 * to the state machine. All server interaction goes through SessionFlow. */

import { ServiceClient } from "./api.js";
import { keyIntent, renderEmail } from "./render.js";
import type { FlowState } from "./state.js";
import { SessionFlow } from "./state.js";
import type { Answer } from "./types.js";

const client = new ServiceClient("");
const flow = new SessionFlow(client);

interface Draft {
  classification: "phishing" | "ham" | null;
  confidence: 1 | 2 | 3 | 4 | 5 | null;
  action: string | null;
}

let draft: Draft = { classification: null, confidence: null, action: null };
let actions: string[] = [];

const app = document.getElementById("app") as HTMLElement;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function render(state: FlowState): void {
  app.textContent = "";
  switch (state.kind) {
    case "idle":
      renderStart();
      break;
    case "loading":
      app.appendChild(el("p", "status", "loading…"));
      break;
    case "trial":
      renderTrial(state);
      break;
    case "feedback":
      renderFeedback(state);
      break;
    case "questionnaire":
      renderQuestionnaire(state);
      break;
    case "summary":
      renderSummary(state);
      break;
    case "fatal":
      app.appendChild(el("p", "error", state.error));
      break;
  }
}

function renderStart(): void {
  const panel = el("div", "panel");
  panel.appendChild(el("h1", undefined, "Email classification training"));
  const condSelect = el("select") as HTMLSelectElement;
  condSelect.id = "condition";
  const seedInput = el("input") as HTMLInputElement;
  seedInput.type = "number";
  seedInput.value = String(Math.floor(Math.random() * 1e9));
  seedInput.id = "seed";
  const button = el("button", "primary", "Start session");
  button.addEventListener("click", () => {
    void flow.start(condSelect.value, "ibl", Number(seedInput.value));
  });
  client
    .health()
    .then((h) => {
      actions = h.actions;
      for (const c of h.conditions) {
        const opt = el("option", undefined, c) as HTMLOptionElement;
        opt.value = c;
        condSelect.appendChild(opt);
      }
    })
    .catch((err) => {
      panel.appendChild(el("p", "error", `service unreachable: ${String(err)}`));
    });
  const form = el("div", "controls");
  form.append("Condition: ", condSelect, " Seed: ", seedInput, button);
  panel.appendChild(form);
  app.appendChild(panel);
}

function renderTrial(state: Extract<FlowState, { kind: "trial" }>): void {
  const { trial, points } = state;
  const panel = el("div", "panel");
  const head = el("div", "trial-head");
  head.appendChild(el("span", "badge " + trial.block.toLowerCase(), trial.block));
  head.appendChild(el("span", undefined, `trial ${trial.trial} / ${trial.total_trials}`));
  head.appendChild(el("span", "points", `${points} pts`));
  panel.appendChild(head);

  panel.appendChild(el("p", "email-meta", `From: ${trial.email.sender}`));
  panel.appendChild(el("p", "email-meta", `Subject: ${trial.email.subject}`));
  const body = el("div", "email-body");
  renderEmail(body, trial.email);
  panel.appendChild(body);

  const controls = el("div", "controls");
  const phishBtn = el("button", draft.classification === "phishing" ? "toggled" : "", "Phishing (p)");
  const hamBtn = el("button", draft.classification === "ham" ? "toggled" : "", "Legitimate (h)");
  phishBtn.addEventListener("click", () => {
    draft.classification = "phishing";
    render(flow.current);
  });
  hamBtn.addEventListener("click", () => {
    draft.classification = "ham";
    render(flow.current);
  });
  controls.append(phishBtn, hamBtn);

  const confWrap = el("div", "confidence");
  confWrap.appendChild(el("span", undefined, "Confidence: "));
  for (let c = 1 as 1 | 2 | 3 | 4 | 5; c <= 5; c++) {
    const b = el("button", draft.confidence === c ? "toggled" : "", String(c));
    b.addEventListener("click", () => {
      draft.confidence = c;
      render(flow.current);
    });
    confWrap.appendChild(b);
    if (c === 5) break;
  }
  controls.appendChild(confWrap);

  const actionSelect = el("select") as HTMLSelectElement;
  const placeholder = el("option", undefined, "— intended action —") as HTMLOptionElement;
  placeholder.value = "";
  actionSelect.appendChild(placeholder);
  for (const a of actions) {
    const opt = el("option", undefined, a) as HTMLOptionElement;
    opt.value = a;
    if (draft.action === a) opt.selected = true;
    actionSelect.appendChild(opt);
  }
  actionSelect.addEventListener("change", () => {
    draft.action = actionSelect.value || null;
  });
  controls.appendChild(actionSelect);

  const submit = el("button", "primary", state.submitting ? "submitting…" : "Submit (Enter)");
  submit.id = "submit";
  submit.disabled =
    state.submitting ||
    draft.classification === null ||
    draft.confidence === null ||
    draft.action === null;
  submit.addEventListener("click", () => void submitDraft());
  controls.appendChild(submit);

  if (state.error !== null) {
    controls.appendChild(el("p", "error", state.error));
    const retry = el("button", undefined, "Retry");
    retry.addEventListener("click", () => void flow.retry());
    controls.appendChild(retry);
  }
  panel.appendChild(controls);
  app.appendChild(panel);
}

async function submitDraft(): Promise<void> {
  if (draft.classification === null || draft.confidence === null || draft.action === null) return;
  const answer: Answer = {
    classification: draft.classification,
    confidence: draft.confidence,
    action: draft.action,
  };
  draft = { classification: null, confidence: null, action: null };
  await flow.submit(answer);
}

function renderFeedback(state: Extract<FlowState, { kind: "feedback" }>): void {
  const panel = el("div", "panel");
  const fb = state.result.feedback;
  if (fb !== null) {
    panel.appendChild(
      el(
        "p",
        fb.correct ? "feedback good" : "feedback bad",
        fb.correct ? `Correct! +${fb.points} point` : `Incorrect. ${fb.points} point`,
      ),
    );
  }
  panel.appendChild(el("p", "points", `Total: ${state.points} pts`));
  const next = el("button", "primary", "Continue (Enter)");
  next.id = "continue";
  next.addEventListener("click", () => void flow.continueAfterFeedback());
  panel.appendChild(next);
  app.appendChild(panel);
  next.focus();
}

const QUESTIONS = [
  "What percentage of the emails do you think were written by an AI?",
  "What percentage of phishing emails do you think were written by an AI?",
  "What percentage of legitimate emails do you think were written by an AI?",
  "How confident are you in these judgements (0–100)?",
];

function renderQuestionnaire(state: Extract<FlowState, { kind: "questionnaire" }>): void {
  const panel = el("div", "panel");
  panel.appendChild(el("h2", undefined, "Final questionnaire"));
  const sliders: HTMLInputElement[] = [];
  QUESTIONS.forEach((q, i) => {
    const row = el("div", "slider-row");
    const label = el("label", undefined, q);
    const slider = el("input") as HTMLInputElement;
    slider.type = "range";
    slider.min = "0";
    slider.max = "100";
    slider.value = "50";
    slider.id = `q${i}`;
    const value = el("span", "slider-value", "50");
    slider.addEventListener("input", () => {
      value.textContent = slider.value;
    });
    sliders.push(slider);
    row.append(label, slider, value);
    panel.appendChild(row);
  });
  const submit = el("button", "primary", state.submitting ? "submitting…" : "Submit answers");
  submit.disabled = state.submitting;
  submit.addEventListener("click", () => {
    void flow.submitQuestionnaire(sliders.map((s) => Number(s.value)));
  });
  panel.appendChild(submit);
  if (state.error !== null) panel.appendChild(el("p", "error", state.error));
  app.appendChild(panel);
}

function renderSummary(state: Extract<FlowState, { kind: "summary" }>): void {
  const s = state.summary;
  const panel = el("div", "panel");
  panel.appendChild(el("h2", undefined, "Session complete"));
  const rows: [string, string][] = [
    ["Condition", s.condition],
    ["Accuracy before training", `${(s.improvement.pre_accuracy * 100).toFixed(0)}%`],
    ["Accuracy after training", `${(s.improvement.post_accuracy * 100).toFixed(0)}%`],
    ["Improvement", `${s.improvement.delta_pp.toFixed(1)}pp`],
    ["Flagged as phishing", `${(s.phishing_rate * 100).toFixed(0)}%`],
    ["Training points", String(s.cumulative_points)],
    ["AI-identification score", s.questionnaire_score === null ? "—" : s.questionnaire_score.toFixed(1)],
  ];
  const table = el("table", "summary");
  for (const [k, v] of rows) {
    const tr = el("tr");
    tr.appendChild(el("td", undefined, k));
    tr.appendChild(el("td", undefined, v));
    table.appendChild(tr);
  }
  panel.appendChild(table);
  app.appendChild(panel);
}

document.addEventListener("keydown", (ev) => {
  const state = flow.current;
  if (state.kind === "feedback" && ev.key === "Enter") {
    void flow.continueAfterFeedback();
    return;
  }
  if (state.kind !== "trial") return;
  const target = ev.target as HTMLElement | null;
  if (target && (target.tagName === "INPUT" || target.tagName === "SELECT")) return;
  const intent = keyIntent(ev.key);
  if (intent === null) return;
  if (intent.kind === "classify") {
    draft.classification = intent.value;
    render(state);
  } else if (intent.kind === "confidence") {
    draft.confidence = intent.value;
    render(state);
  } else {
    void submitDraft();
  }
});

flow.subscribe(render);
render(flow.current);
