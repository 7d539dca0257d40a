// Pure view-state projection. The view is derived from server payloads only;
// reloading a page and re-projecting GET /v1/sessions/{id} must yield the
// same view the step-by-step flow produced.

import type { Catalog, ScoreBreakdown, SessionState, TopEntry } from './api.js';

export interface StepView {
  readonly concept: string;
  readonly value: number;
  readonly cost: number;
  readonly top: ReadonlyArray<TopEntry>;
}

export interface PendingView {
  readonly concept: string;
  readonly arity: number;
  readonly cost: number;
  readonly breakdown: ScoreBreakdown;
}

export interface SessionView {
  readonly sessionId: string;
  readonly policy: string;
  readonly budget: number;
  readonly spent: number;
  readonly remaining: number;
  readonly finished: boolean;
  readonly reason: string | null;
  readonly steps: ReadonlyArray<StepView>;
  readonly pending: PendingView | null;
  readonly top: ReadonlyArray<TopEntry>;
}

export function topFromDist(
  dist: ReadonlyArray<number>,
  labels: ReadonlyArray<string>,
  n = 5,
): TopEntry[] {
  const entries = dist.map((p, i) => ({ label: labels[i], index: i + 1, p }));
  entries.sort((a, b) => (b.p - a.p) || (a.index - b.index));
  return entries.slice(0, n);
}

export function conceptArity(catalog: Catalog, name: string): number {
  const found = catalog.concepts.find((c) => c.name === name);
  if (!found) {
    throw new Error(`unknown concept ${name}`);
  }
  return found.arity;
}

export function projectSession(state: SessionState, catalog: Catalog): SessionView {
  const steps = state.steps.map((s) => ({
    concept: s.concept,
    value: s.value,
    cost: s.cost,
    top: topFromDist(s.label_dist, catalog.labels),
  }));
  return {
    sessionId: state.session_id,
    policy: state.policy,
    budget: state.budget,
    spent: state.spent,
    remaining: state.remaining_budget,
    finished: state.status === 'finished',
    reason: state.reason,
    steps,
    pending: state.pending
      ? {
          concept: state.pending.concept,
          arity: conceptArity(catalog, state.pending.concept),
          cost: state.pending.cost,
          breakdown: state.pending.score_breakdown,
        }
      : null,
    top: state.top,
  };
}

// Inline answer validation: an answer is a 1-based category index. Invalid
// values never reach the network.
export function validateAnswer(raw: string, arity: number): number | null {
  if (!/^\d+$/.test(raw.trim())) {
    return null;
  }
  const value = Number(raw.trim());
  if (!Number.isInteger(value) || value < 1 || value > arity) {
    return null;
  }
  return value;
}

export function formatBudget(spent: number, budget: number): string {
  const fmt = (x: number) =>
    Number.isInteger(x) ? String(x) : x.toFixed(2).replace(/0+$/, '').replace(/\.$/, '');
  return `${fmt(spent)} / ${fmt(budget)}`;
}
