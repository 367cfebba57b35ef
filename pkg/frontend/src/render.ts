// Pure view builders: gateway payload in, HTML string out. Keeping these
// free of fetch and DOM state makes the console contract-testable against
// recorded gateway fixtures.

import type {
  ApiError,
  CaseRecord,
  CaseSummary,
  DiffChange,
  DriftReport,
  FeedbackResponse,
  KnowledgeEntryDoc,
  KnowledgeSearchResult,
  SkillDiff,
} from "./types.js";

export function escapeHtml(value: unknown): string {
  return String(value)
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;")
    .replaceAll("'", "&#39;");
}

function verdictBadge(verdict: string): string {
  return `<span class="badge verdict-${escapeHtml(verdict)}">${escapeHtml(verdict)}</span>`;
}

export function renderError(error: ApiError): string {
  return `<div class="error-box" data-code="${escapeHtml(error.code)}">
    <strong>${escapeHtml(error.code)}</strong>: ${escapeHtml(error.message)}
  </div>`;
}

export function renderNotFound(caseId: string): string {
  return `<div class="error-box" data-code="not_found">No case <code>${escapeHtml(caseId)}</code> on this gateway.</div>`;
}

// -- case timeline -----------------------------------------------------------

export function renderCaseTimeline(cases: CaseSummary[]): string {
  if (cases.length === 0) {
    return `<p class="empty">No cases match the current filter.</p>`;
  }
  const rows = cases
    .map(
      (c) => `<tr class="case-row" data-case-id="${escapeHtml(c.case_id)}" data-business="${escapeHtml(
        c.business,
      )}" data-module="${escapeHtml(c.module)}" data-kind="${escapeHtml(c.kind)}" data-day="${escapeHtml(
        c.created_at.slice(0, 10),
      )}">
      <td><a href="#/cases/${encodeURIComponent(c.case_id)}">${escapeHtml(c.case_id)}</a></td>
      <td>${escapeHtml(c.kind)}</td>
      <td>${escapeHtml(c.business)}/${escapeHtml(c.module)}</td>
      <td>${verdictBadge(c.verdict)}</td>
      <td>${c.root_cause_module ? escapeHtml(c.root_cause_module) : "&mdash;"}</td>
      <td>${escapeHtml(c.created_at)}</td>
      <td>${c.has_feedback ? "✓" : ""}</td>
    </tr>`,
    )
    .join("\n");
  return `<table class="timeline">
    <thead><tr><th>Case</th><th>Kind</th><th>Scope</th><th>Verdict</th><th>Root cause</th><th>At</th><th>Feedback</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>`;
}

// -- case detail -------------------------------------------------------------

export function renderCaseDetail(record: CaseRecord): string {
  const parts: string[] = [];
  if (record.markers.length > 0) {
    const degraded = record.markers.some((m) =>
      ["generation-failed", "retrieval-failure", "reasoner-unavailable", "no-skill-static"].includes(m),
    );
    parts.push(
      `<div class="${degraded ? "banner degraded" : "banner markers"}">${
        degraded ? "DEGRADED MODE" : "markers"
      }: ${record.markers.map(escapeHtml).join(", ")}</div>`,
    );
  }
  const e = record.event;
  parts.push(`<section class="event">
    <h2>Case ${escapeHtml(record.case_id)}</h2>
    <dl>
      <dt>Event</dt><dd>${escapeHtml(e.event_id)} (${escapeHtml(e.kind)})</dd>
      <dt>Scope</dt><dd>${escapeHtml(e.business)}/${escapeHtml(e.module)}</dd>
      <dt>Metric family</dt><dd>${e.metric_family ? escapeHtml(e.metric_family) : "&mdash;"}</dd>
      <dt>Timestamp</dt><dd>${escapeHtml(e.timestamp)}</dd>
    </dl>
  </section>`);

  const d = record.diagnosis;
  const rootCause = d.root_cause
    ? `<dd class="root-cause">module <strong>${escapeHtml(d.root_cause.module)}</strong>${
        d.root_cause.change_ref ? `, change <code>${escapeHtml(d.root_cause.change_ref)}</code>` : ""
      }${d.root_cause.description ? ` &mdash; ${escapeHtml(d.root_cause.description)}` : ""}</dd>`
    : `<dd class="root-cause">none identified</dd>`;
  const evidence =
    d.evidence.length > 0
      ? d.evidence
          .map(
            (ev) => `<li class="evidence-entry">
        <a class="evidence-source" href="#data-${escapeHtml(ev.source_id)}">${escapeHtml(ev.source_id)}</a>
        <details><summary>excerpt</summary><pre>${escapeHtml(ev.excerpt)}</pre></details>
        <span class="relevance">${escapeHtml(ev.relevance_note)}</span>
      </li>`,
          )
          .join("\n")
      : `<li class="empty">no evidence cited</li>`;
  const actions =
    d.actions.length > 0
      ? d.actions.map((a) => `<li class="action">${escapeHtml(a)}</li>`).join("\n")
      : `<li class="empty">none</li>`;
  parts.push(`<section class="diagnosis">
    <h3>Diagnosis</h3>
    <dl>
      <dt>Verdict</dt><dd>${verdictBadge(d.verdict)}</dd>
      <dt>Root cause</dt>${rootCause}
      <dt>Confidence</dt><dd class="confidence">${escapeHtml(d.confidence.toFixed(2))}</dd>
    </dl>
    <h4>Evidence</h4><ul class="evidence">${evidence}</ul>
    <h4>Recommended actions</h4><ol class="actions">${actions}</ol>
  </section>`);

  const skills =
    record.skill_ids.length > 0
      ? record.skill_ids
          .map(([sid, version]) => `<li class="skill-used">${escapeHtml(sid)} <code>v${version}</code></li>`)
          .join("\n")
      : `<li class="empty">no skill matched</li>`;
  parts.push(`<section class="skills"><h3>Skills used</h3><ul>${skills}</ul></section>`);

  const dataSections = record.retrieved_data.items
    .map((item) => {
      const rows = item.rows
        .slice(0, 20)
        .map((row) => `<tr>${Object.values(row).map((v) => `<td>${escapeHtml(v)}</td>`).join("")}</tr>`)
        .join("\n");
      const header =
        item.rows.length > 0
          ? `<tr>${Object.keys(item.rows[0]).map((k) => `<th>${escapeHtml(k)}</th>`).join("")}</tr>`
          : "";
      return `<details class="data-source" id="data-${escapeHtml(item.source_id)}">
      <summary>${escapeHtml(item.source_id)} (${escapeHtml(item.status)}, ${item.rows.length} rows)</summary>
      <table>${header}${rows}</table>
    </details>`;
    })
    .join("\n");
  parts.push(`<section class="data"><h3>Retrieved data</h3>${dataSections}</section>`);

  if (record.retrieved_knowledge.length > 0) {
    const entries = record.retrieved_knowledge
      .map((k) => `<li class="knowledge-entry">[${escapeHtml(k.kind)}] <code>${escapeHtml(k.entry_id)}</code> ${escapeHtml(k.text)}</li>`)
      .join("\n");
    parts.push(`<section class="knowledge"><h3>Knowledge consulted</h3><ul>${entries}</ul></section>`);
  }

  if (record.feedback) {
    parts.push(`<section class="feedback-existing">
      <h3>Feedback</h3>
      <p><strong>${escapeHtml(record.feedback.author)}</strong>: ${escapeHtml(record.feedback.text)}</p>
      <p>classification: ${escapeHtml(record.feedback.resolved_classification ?? "pending")}</p>
    </section>`);
  } else {
    parts.push(renderFeedbackComposer(record.case_id));
  }
  return parts.join("\n");
}

export function renderFeedbackComposer(caseId: string): string {
  return `<section class="composer" data-case-id="${escapeHtml(caseId)}">
    <h3>Submit feedback</h3>
    <textarea id="feedback-text" placeholder="Describe the issue and the expected behavior"></textarea>
    <input id="feedback-author" placeholder="your handle" value="operator" />
    <button id="feedback-submit" disabled>Send</button>
    <div id="feedback-result"></div>
  </section>`;
}

// -- feedback result ----------------------------------------------------------

export function renderFeedbackResult(response: FeedbackResponse): string {
  const decision = response.decision;
  const outcomes = response.report.outcomes
    .map((o) => {
      let label = `${escapeHtml(o.action)}: <span class="status-${escapeHtml(o.status)}">${escapeHtml(o.status)}</span>`;
      if (o.action.startsWith("skill_update") && o.status === "ok" && o.skill_id && o.skill_version) {
        const component = o.action === "skill_update_schema" ? "LoadDataSchema" : "Prompt";
        label += ` &mdash; Skill ${escapeHtml(o.skill_id)} v${o.skill_version - 1}&rarr;v${o.skill_version}, ${component} revised`;
      } else if (o.detail) {
        label += ` &mdash; ${escapeHtml(o.detail)}`;
      }
      return `<li class="outcome outcome-${escapeHtml(o.status)}">${label}</li>`;
    })
    .join("\n");
  const diffLink = response.skill_diff_link
    ? `<p><a class="diff-link" href="#/diff${escapeHtml(response.skill_diff_link)}">view skill diff</a></p>`
    : "";
  return `<div class="feedback-result">
    <p>classified as <strong class="classification">${escapeHtml(decision.classification)}</strong>${
      decision.degraded ? ' <span class="badge degraded">degraded</span>' : ""
    }</p>
    <ul class="outcomes">${outcomes}</ul>
    ${diffLink}
  </div>`;
}

export function renderFeedbackConflict(error: ApiError): string {
  return `<div class="feedback-result conflict">
    <strong>conflict</strong>: ${escapeHtml(error.message)}
    <p>Feedback is recorded exactly once per case; reload to see the stored classification.</p>
  </div>`;
}

// -- skill diff ----------------------------------------------------------------

function renderDiffComponent(name: string, changes: DiffChange[]): string {
  if (changes.length === 0) {
    return `<section class="diff-component unchanged" data-component="${escapeHtml(name)}">
      <h4>${escapeHtml(name)}</h4><p class="empty">unchanged</p></section>`;
  }
  const rows = changes
    .map(
      (c) => `<tr><td><code>${escapeHtml(c.path)}</code></td>
      <td class="before">${c.before === undefined || c.before === null ? "&mdash;" : escapeHtml(JSON.stringify(c.before))}</td>
      <td class="after">${c.after === undefined || c.after === null ? "&mdash;" : escapeHtml(JSON.stringify(c.after))}</td></tr>`,
    )
    .join("\n");
  return `<section class="diff-component changed" data-component="${escapeHtml(name)}">
    <h4>${escapeHtml(name)} (${changes.length} changes)</h4>
    <table><thead><tr><th>path</th><th>before</th><th>after</th></tr></thead><tbody>${rows}</tbody></table>
  </section>`;
}

export function renderSkillDiff(diff: SkillDiff): string {
  return `<div class="skill-diff">
    <h3>${escapeHtml(diff.skill_id)}: v${diff.from_version} &rarr; v${diff.to_version}</h3>
    ${renderDiffComponent("meta", diff.components.meta)}
    ${renderDiffComponent("load_data_schema", diff.components.load_data_schema)}
    ${renderDiffComponent("prompt", diff.components.prompt)}
  </div>`;
}

// -- knowledge browser -----------------------------------------------------------

export function renderKnowledgeResults(result: KnowledgeSearchResult): string {
  if (result.results.length === 0) {
    return `<p class="empty">No ${escapeHtml(result.mode)} entries found.</p>`;
  }
  const items = result.results
    .map((r) => {
      const entry = ("entry" in r ? r.entry : r) as KnowledgeEntryDoc;
      const cosine = "cosine" in r ? ` <span class="cosine">cos ${escapeHtml((r as { cosine: number }).cosine.toFixed(3))}</span>` : "";
      return `<li class="kb-entry" data-entry-id="${escapeHtml(entry.entry_id)}">
      [${escapeHtml(entry.kind)}] <code>${escapeHtml(entry.entry_id)}</code> ${escapeHtml(entry.text)}${cosine}
    </li>`;
    })
    .join("\n");
  return `<ul class="kb-results" data-mode="${escapeHtml(result.mode)}">${items}</ul>`;
}

// -- drift dashboard ---------------------------------------------------------------

export function renderDriftDashboard(reports: DriftReport[]): string {
  const series = reports
    .map((report) => {
      const label = report.feedback_enabled ? "feedback enabled" : "feedback disabled";
      const bars = report.days
        .map(
          (d) => `<div class="bar-row" data-day="${d.day}" data-accuracy="${d.accuracy.toFixed(4)}">
        <span class="day">d${d.day}</span>
        <div class="bar ${report.feedback_enabled ? "on" : "off"}" style="width:${Math.round(d.accuracy * 200)}px"></div>
        <span class="pct">${(d.accuracy * 100).toFixed(0)}%</span>
      </div>`,
        )
        .join("\n");
      return `<section class="drift-arm" data-arm="${report.feedback_enabled ? "on" : "off"}">
      <h4>${escapeHtml(report.scenario_id)} &mdash; ${label}</h4>${bars}</section>`;
    })
    .join("\n");
  return `<div class="drift-dashboard">${series}</div>`;
}
