// DOM rendering. Every render call rebuilds its container from a SessionView
// projection, so the UI after a page reload (re-projected from GET
// /v1/sessions/{id}) is identical to the UI built up step by step.

import type { Catalog, TopEntry } from './api.js';
import type { PendingView, SessionView, StepView } from './state.js';
import { formatBudget } from './state.js';

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

export function renderTop(container: HTMLElement, top: ReadonlyArray<TopEntry>): void {
  container.replaceChildren();
  for (const entry of top) {
    const row = el('div', 'prob-row');
    row.appendChild(el('span', 'prob-label', entry.label));
    const track = el('div', 'prob-track');
    const bar = el('div', 'prob-bar');
    bar.style.width = `${(entry.p * 100).toFixed(2)}%`;
    track.appendChild(bar);
    row.appendChild(track);
    row.appendChild(el('span', 'prob-value', `${(entry.p * 100).toFixed(1)}%`));
    container.appendChild(row);
  }
}

function renderStep(step: StepView, index: number): HTMLElement {
  const box = el('div', 'step');
  const head = el(
    'div',
    'step-head',
    `${index + 1}. ${step.concept} = ${step.value} (cost ${step.cost})`,
  );
  box.appendChild(head);
  const bars = el('div', 'step-bars');
  renderTop(bars, step.top);
  box.appendChild(bars);
  return box;
}

export function renderHistory(container: HTMLElement, steps: ReadonlyArray<StepView>): void {
  container.replaceChildren();
  if (steps.length === 0) {
    container.appendChild(el('p', 'muted', 'No interventions yet.'));
    return;
  }
  steps.forEach((step, i) => container.appendChild(renderStep(step, i)));
}

export function renderBreakdown(container: HTMLElement, pending: PendingView): void {
  container.replaceChildren();
  if (!pending.breakdown) {
    return;
  }
  const table = el('table', 'breakdown');
  const head = el('tr');
  for (const col of ['concept', 'uncertainty', 'influence', 'cost', 'score']) {
    head.appendChild(el('th', undefined, col));
  }
  table.appendChild(head);
  const rows = Object.entries(pending.breakdown).sort(
    (a, b) => b[1].combined - a[1].combined,
  );
  for (const [name, terms] of rows) {
    const tr = el('tr', name === pending.concept ? 'selected' : undefined);
    tr.appendChild(el('td', undefined, name));
    tr.appendChild(el('td', undefined, terms.norm_cpu.toFixed(4)));
    tr.appendChild(el('td', undefined, terms.norm_cis.toFixed(4)));
    tr.appendChild(el('td', undefined, String(terms.cost)));
    tr.appendChild(el('td', undefined, terms.combined.toFixed(4)));
    table.appendChild(tr);
  }
  container.appendChild(table);
}

export interface QueryHandlers {
  onAnswer(concept: string, value: number): void;
  onFinish(): void;
  onInvalid(message: string): void;
}

export function renderQuery(
  container: HTMLElement,
  view: SessionView,
  handlers: QueryHandlers,
): void {
  container.replaceChildren();
  if (view.finished) {
    const done = el('div', 'finished');
    done.appendChild(el('h3', undefined, 'Session finished'));
    done.appendChild(el('p', undefined, `Reason: ${view.reason ?? 'unknown'}`));
    container.appendChild(done);
    return;
  }
  const pending = view.pending;
  if (!pending) {
    container.appendChild(el('p', 'muted', 'Waiting for the next query…'));
    return;
  }
  const box = el('div', 'query');
  box.appendChild(el('h3', undefined, `Reveal: ${pending.concept}`));
  box.appendChild(
    el('p', 'muted', `cost ${pending.cost} — enter the true category (1–${pending.arity})`),
  );
  const form = el('form');
  const input = el('input');
  input.type = 'text';
  input.inputMode = 'numeric';
  input.autocomplete = 'off';
  input.placeholder = `1–${pending.arity}`;
  const submit = el('button', undefined, 'Answer');
  submit.type = 'submit';
  form.appendChild(input);
  form.appendChild(submit);
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const raw = input.value;
    const parsed = parseAnswerOrNull(raw, pending.arity);
    if (parsed === null) {
      handlers.onInvalid(`"${raw}" is not a category between 1 and ${pending.arity}`);
      return;
    }
    handlers.onAnswer(pending.concept, parsed);
  });
  box.appendChild(form);
  const finish = el('button', 'secondary', 'Finish early');
  finish.type = 'button';
  finish.addEventListener('click', () => handlers.onFinish());
  box.appendChild(finish);
  container.appendChild(box);
  const breakdown = el('div');
  renderBreakdown(breakdown, pending);
  container.appendChild(breakdown);
  input.focus();
}

import { validateAnswer } from './state.js';

function parseAnswerOrNull(raw: string, arity: number): number | null {
  return validateAnswer(raw, arity);
}

export function renderStatus(container: HTMLElement, view: SessionView): void {
  container.replaceChildren();
  container.appendChild(el('span', 'pill', view.policy));
  container.appendChild(el('span', 'pill', `budget ${formatBudget(view.spent, view.budget)}`));
  const meter = el('div', 'meter');
  const fill = el('div', 'meter-fill');
  const frac = view.budget > 0 ? Math.min(1, view.spent / view.budget) : 1;
  fill.style.width = `${(frac * 100).toFixed(1)}%`;
  meter.appendChild(fill);
  container.appendChild(meter);
}

export function renderError(
  container: HTMLElement,
  message: string,
  onRetry?: () => void,
): void {
  container.replaceChildren();
  if (!message) {
    return;
  }
  const box = el('div', 'error');
  box.appendChild(el('span', undefined, message));
  if (onRetry) {
    const retry = el('button', 'secondary', 'Retry');
    retry.type = 'button';
    retry.addEventListener('click', onRetry);
    box.appendChild(retry);
  }
  container.appendChild(box);
}

export interface CreateFormValues {
  instanceId: string;
  policy: string;
  budget: number;
  costModel: string;
}

export function renderCreateForm(
  container: HTMLElement,
  catalog: Catalog,
  onCreate: (values: CreateFormValues) => void,
  onInvalid: (message: string) => void,
): void {
  container.replaceChildren();
  const form = el('form', 'create-form');

  const instanceSelect = el('select');
  for (const [dataset, ids] of Object.entries(catalog.datasets)) {
    const group = document.createElement('optgroup');
    group.label = dataset;
    for (const id of ids) {
      const opt = document.createElement('option');
      opt.value = id;
      opt.textContent = id;
      group.appendChild(opt);
    }
    instanceSelect.appendChild(group);
  }

  const policySelect = el('select');
  for (const policy of catalog.policies) {
    const opt = document.createElement('option');
    opt.value = policy;
    opt.textContent = policy;
    policySelect.appendChild(opt);
  }

  const costSelect = el('select');
  for (const cm of catalog.cost_models) {
    const opt = document.createElement('option');
    opt.value = cm;
    opt.textContent = cm;
    costSelect.appendChild(opt);
  }

  const budgetInput = el('input');
  budgetInput.type = 'number';
  budgetInput.min = '0';
  budgetInput.step = 'any';
  budgetInput.value = '5';

  const labeled = (label: string, node: HTMLElement) => {
    const wrap = el('label');
    wrap.appendChild(el('span', undefined, label));
    wrap.appendChild(node);
    return wrap;
  };
  form.appendChild(labeled('instance', instanceSelect));
  form.appendChild(labeled('policy', policySelect));
  form.appendChild(labeled('cost model', costSelect));
  form.appendChild(labeled('budget', budgetInput));
  const start = el('button', undefined, 'Start session');
  start.type = 'submit';
  form.appendChild(start);
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const budget = Number(budgetInput.value);
    if (!Number.isFinite(budget) || budget < 0) {
      onInvalid('budget must be a non-negative number');
      return;
    }
    if (!instanceSelect.value) {
      onInvalid('no instance available');
      return;
    }
    onCreate({
      instanceId: instanceSelect.value,
      policy: policySelect.value,
      budget,
      costModel: costSelect.value,
    });
  });
  container.appendChild(form);
}
