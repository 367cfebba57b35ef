// Browser wiring: hash routing, fetch glue, and the feedback composer (the
// console's only write path). State lives on the gateway; every view is a
// re-render from a fresh payload.

import { GatewayClient, GatewayError } from "./api.js";
import {
  renderCaseDetail,
  renderCaseTimeline,
  renderDriftDashboard,
  renderError,
  renderFeedbackConflict,
  renderFeedbackResult,
  renderKnowledgeResults,
  renderNotFound,
  renderSkillDiff,
} from "./render.js";
import type { DriftReport } from "./types.js";

const client = new GatewayClient((window as unknown as { OPSLOOP_GATEWAY?: string }).OPSLOOP_GATEWAY ?? "");

function mount(): HTMLElement {
  return document.getElementById("view") as HTMLElement;
}

async function showTimeline(): Promise<void> {
  const page = await client.listCases({ limit: 100 });
  mount().innerHTML = `
    <div class="filters">
      <input id="filter-business" placeholder="business" />
      <input id="filter-module" placeholder="module" />
      <select id="filter-kind">
        <option value="">any kind</option>
        <option>alert</option><option>inspection</option><option>release</option>
      </select>
      <input id="filter-day" placeholder="day (YYYY-MM-DD)" />
    </div>
    <div id="timeline">${renderCaseTimeline(page.cases)}</div>`;
  const applyFilters = () => {
    const get = (id: string) => (document.getElementById(id) as HTMLInputElement).value.trim();
    const business = get("filter-business");
    const module = get("filter-module");
    const kind = (document.getElementById("filter-kind") as HTMLSelectElement).value;
    const day = get("filter-day");
    document.querySelectorAll<HTMLElement>(".case-row").forEach((row) => {
      const visible =
        (!business || row.dataset.business === business) &&
        (!module || row.dataset.module === module) &&
        (!kind || row.dataset.kind === kind) &&
        (!day || row.dataset.day === day);
      row.style.display = visible ? "" : "none";
    });
  };
  for (const id of ["filter-business", "filter-module", "filter-kind", "filter-day"]) {
    document.getElementById(id)?.addEventListener("input", applyFilters);
  }
}

async function showCase(caseId: string): Promise<void> {
  try {
    const record = await client.getCase(caseId);
    mount().innerHTML = renderCaseDetail(record);
    wireComposer(caseId);
  } catch (err) {
    if (err instanceof GatewayError && err.status === 404) {
      mount().innerHTML = renderNotFound(caseId);
    } else if (err instanceof GatewayError) {
      mount().innerHTML = renderError(err.apiError);
    } else {
      throw err;
    }
  }
}

export function wireComposer(caseId: string): void {
  const text = document.getElementById("feedback-text") as HTMLTextAreaElement | null;
  const author = document.getElementById("feedback-author") as HTMLInputElement | null;
  const submit = document.getElementById("feedback-submit") as HTMLButtonElement | null;
  const result = document.getElementById("feedback-result");
  if (!text || !submit || !result || !author) return;

  text.addEventListener("input", () => {
    submit.disabled = text.value.trim().length === 0;
  });
  submit.addEventListener("click", async () => {
    if (text.value.trim().length === 0) return; // client-side guard mirrors the 4xx
    submit.disabled = true;
    try {
      const response = await client.submitFeedback(caseId, author.value || "operator", text.value);
      result.innerHTML = renderFeedbackResult(response);
    } catch (err) {
      if (err instanceof GatewayError && err.apiError.code === "conflict") {
        result.innerHTML = renderFeedbackConflict(err.apiError);
      } else if (err instanceof GatewayError) {
        result.innerHTML = renderError(err.apiError);
      } else {
        throw err;
      }
    }
  });
}

async function showDiff(link: string): Promise<void> {
  const diff = await client.getSkillDiff(link);
  mount().innerHTML = renderSkillDiff(diff);
}

async function showKnowledge(): Promise<void> {
  mount().innerHTML = `
    <div class="kb-form">
      <select id="kb-mode"><option>vector</option><option>kv</option><option>kkv</option></select>
      <input id="kb-query" placeholder="query text / business,scenario / subject,object,metric" />
      <button id="kb-search">Search</button>
    </div>
    <div id="kb-output"></div>`;
  document.getElementById("kb-search")?.addEventListener("click", async () => {
    const mode = (document.getElementById("kb-mode") as HTMLSelectElement).value;
    const raw = (document.getElementById("kb-query") as HTMLInputElement).value;
    const out = document.getElementById("kb-output") as HTMLElement;
    let params: Record<string, string>;
    if (mode === "vector") {
      params = { mode, q: raw, top_k: "10" };
    } else if (mode === "kv") {
      const [business = "", scenario = ""] = raw.split(",").map((s) => s.trim());
      params = { mode, business, scenario };
    } else {
      const [subject = "", object = "", metric = ""] = raw.split(",").map((s) => s.trim());
      params = { mode, subject, object, metric };
    }
    try {
      out.innerHTML = renderKnowledgeResults(await client.searchKnowledge(params));
    } catch (err) {
      if (err instanceof GatewayError) out.innerHTML = renderError(err.apiError);
      else throw err;
    }
  });
}

async function showDrift(): Promise<void> {
  // the drift dashboard renders eval report files served as static fixtures
  // or previously stored eval reports
  try {
    const response = await fetch("fixtures/drift_reports.json");
    const body = (await response.json()) as { feedback_on: DriftReport; feedback_off: DriftReport };
    mount().innerHTML = renderDriftDashboard([body.feedback_on, body.feedback_off]);
  } catch {
    mount().innerHTML = `<p class="empty">No drift report available; run <code>opsloop eval drift</code> first.</p>`;
  }
}

export async function route(): Promise<void> {
  const hash = window.location.hash || "#/cases";
  if (hash.startsWith("#/cases/")) {
    await showCase(decodeURIComponent(hash.slice("#/cases/".length)));
  } else if (hash.startsWith("#/diff/")) {
    await showDiff(hash.slice("#/diff".length));
  } else if (hash.startsWith("#/knowledge")) {
    await showKnowledge();
  } else if (hash.startsWith("#/drift")) {
    await showDrift();
  } else {
    await showTimeline();
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined" && document.getElementById("view")) {
  window.addEventListener("hashchange", () => void route());
  void route();
}
