// Gateway payload shapes. Every field rendered by the console maps 1:1 to a
// gateway response field; the console keeps no state of its own.

export interface ApiError {
  code: "not_found" | "conflict" | "validation" | "degraded" | "internal";
  message: string;
  detail?: unknown;
}

export interface RootCause {
  module: string;
  change_ref: string | null;
  description: string;
}

export interface EvidenceEntry {
  source_id: string;
  excerpt: string;
  relevance_note: string;
}

export interface Diagnosis {
  verdict: string;
  root_cause: RootCause | null;
  evidence: EvidenceEntry[];
  actions: string[];
  confidence: number;
}

export interface OperationalEvent {
  event_id: string;
  kind: string;
  business: string;
  module: string;
  metric_family: string | null;
  timestamp: string;
  payload: Record<string, unknown>;
}

export interface RetrievedItem {
  source_id: string;
  params_used: Record<string, unknown>;
  rows: Record<string, unknown>[];
  status: "ok" | "empty" | "error";
}

export interface KnowledgeSnapshot {
  entry_id: string;
  kind: string;
  text: string;
}

export interface FeedbackDoc {
  feedback_id: string;
  case_id: string;
  author: string;
  text: string;
  submitted_at: string;
  resolved_classification: string | null;
}

export interface CaseRecord {
  case_id: string;
  event: OperationalEvent;
  skill_ids: [string, number][];
  retrieved_data: { items: RetrievedItem[]; fetch_window: [string, string] };
  retrieved_knowledge: KnowledgeSnapshot[];
  diagnosis: Diagnosis;
  feedback: FeedbackDoc | null;
  created_at: string;
  markers: string[];
  correction_of: string | null;
}

export interface CaseSummary {
  case_id: string;
  event_id: string;
  kind: string;
  business: string;
  module: string;
  verdict: string;
  root_cause_module: string | null;
  confidence: number;
  created_at: string;
  markers: string[];
  has_feedback: boolean;
  skill_ids: [string, number][];
}

export interface CasePage {
  cases: CaseSummary[];
  next_cursor: string | null;
}

export interface RoutingDecision {
  classification: string;
  actions: string[];
  target_skill_id: string | null;
  degraded: boolean;
}

export interface ActionOutcome {
  action: string;
  status: "ok" | "failed" | "skipped";
  detail: string;
  skill_id: string | null;
  skill_version: number | null;
}

export interface ExecutionReport {
  feedback_id: string;
  outcomes: ActionOutcome[];
}

export interface FeedbackResponse {
  feedback: FeedbackDoc;
  decision: RoutingDecision;
  report: ExecutionReport;
  skill_diff_link: string | null;
}

export interface DiffChange {
  path: string;
  before: unknown;
  after: unknown;
}

export interface SkillDiff {
  skill_id: string;
  from_version: number;
  to_version: number;
  components: { meta: DiffChange[]; load_data_schema: DiffChange[]; prompt: DiffChange[] };
}

export interface KnowledgeEntryDoc {
  entry_id: string;
  kind: string;
  key: Record<string, string> | null;
  text: string;
  provenance: string;
  hit_count: number;
}

export interface KnowledgeSearchResult {
  mode: string;
  results: (KnowledgeEntryDoc | { entry: KnowledgeEntryDoc; cosine: number })[];
}

export interface DriftDay {
  day: number;
  total: number;
  correct: number;
  accuracy: number;
}

export interface DriftReport {
  scenario_id: string;
  feedback_enabled: boolean;
  days: DriftDay[];
}
