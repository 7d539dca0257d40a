// Typed client for the session service HTTP+JSON API. The UI never computes
// scores or predictions itself; everything rendered comes from these payloads.

export interface TopEntry {
  readonly label: string;
  readonly index: number;
  readonly p: number;
}

export interface ConceptInfo {
  readonly name: string;
  readonly arity: number;
  readonly costs: Record<string, number>;
}

export interface Catalog {
  readonly concepts: ReadonlyArray<ConceptInfo>;
  readonly labels: ReadonlyArray<string>;
  readonly policies: ReadonlyArray<string>;
  readonly cost_models: ReadonlyArray<string>;
  readonly datasets: Record<string, ReadonlyArray<string>>;
}

export interface ScoreTerms {
  readonly raw_cpu: number;
  readonly raw_cis: number;
  readonly cost: number;
  readonly norm_cpu: number;
  readonly norm_cis: number;
  readonly combined: number;
}

export type ScoreBreakdown = Record<string, ScoreTerms> | null;

export interface CreateResponse {
  readonly session_id: string;
  readonly status: string;
  readonly policy: string;
  readonly budget: number;
  readonly remaining_budget: number;
  readonly initial_top: ReadonlyArray<TopEntry>;
}

export interface NextQuery {
  readonly finished: false;
  readonly concept: string;
  readonly arity: number;
  readonly cost: number;
  readonly score_breakdown: ScoreBreakdown;
  readonly remaining_budget: number;
}

export interface NextFinished {
  readonly finished: true;
  readonly reason: string;
  readonly prediction: ReadonlyArray<TopEntry>;
}

export type NextResponse = NextQuery | NextFinished;

export interface Step {
  readonly concept: string;
  readonly concept_index: number;
  readonly cost: number;
  readonly value: number;
  readonly label_dist: ReadonlyArray<number>;
  readonly top_label: number;
}

export interface AnswerResponse {
  readonly step: Step;
  readonly top: ReadonlyArray<TopEntry>;
  readonly remaining_budget: number;
  readonly status: string;
  readonly reason: string | null;
}

export interface SessionState {
  readonly session_id: string;
  readonly policy: string;
  readonly budget: number;
  readonly cost_model: string;
  readonly status: string;
  readonly reason: string | null;
  readonly spent: number;
  readonly remaining_budget: number;
  readonly steps: ReadonlyArray<Step>;
  readonly pending: {
    readonly concept: string;
    readonly cost: number;
    readonly score_breakdown: ScoreBreakdown;
  } | null;
  readonly label_dist: ReadonlyArray<number>;
  readonly top: ReadonlyArray<TopEntry>;
}

export interface ApiError {
  readonly code: string;
  readonly message: string;
}

export class ServiceError extends Error {
  constructor(readonly payload: ApiError, readonly status: number) {
    super(payload.message);
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  const res = await fetch(path, init);
  const body = await res.json();
  if (!res.ok) {
    throw new ServiceError(body as ApiError, res.status);
  }
  return body as T;
}

export function getCatalog(): Promise<Catalog> {
  return request<Catalog>('/v1/catalog');
}

export interface CreateParams {
  readonly instance_id: string;
  readonly policy: string;
  readonly budget: number;
  readonly cost_model: string;
}

export function createSession(params: CreateParams): Promise<CreateResponse> {
  return request<CreateResponse>('/v1/sessions', {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify(params),
  });
}

export function getSession(id: string): Promise<SessionState> {
  return request<SessionState>(`/v1/sessions/${id}`);
}

export function getNext(id: string): Promise<NextResponse> {
  return request<NextResponse>(`/v1/sessions/${id}/next`);
}

export function postAnswer(
  id: string,
  concept: string,
  value: number,
): Promise<AnswerResponse> {
  return request<AnswerResponse>(`/v1/sessions/${id}/answer`, {
    method: 'POST',
    headers: { 'content-type': 'application/json' },
    body: JSON.stringify({ concept, value }),
  });
}

export interface FinishResponse {
  readonly session_id: string;
  readonly status: string;
  readonly reason: string;
  readonly prediction: string;
  readonly prediction_index: number;
  readonly spent: number;
  readonly top: ReadonlyArray<TopEntry>;
}

export function finishSession(id: string): Promise<FinishResponse> {
  return request<FinishResponse>(`/v1/sessions/${id}/finish`, { method: 'POST' });
}
