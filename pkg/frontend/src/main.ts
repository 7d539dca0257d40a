// Application wiring. The active session id lives in the URL hash so a page
// reload re-fetches GET /v1/sessions/{id} and re-projects the identical view.

import {
  Catalog,
  ServiceError,
  createSession,
  finishSession,
  getCatalog,
  getNext,
  getSession,
  postAnswer,
} from './api.js';
import { projectSession } from './state.js';
import {
  renderCreateForm,
  renderError,
  renderHistory,
  renderQuery,
  renderStatus,
  renderTop,
} from './render.js';

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

const dom = {
  create: () => byId('create'),
  status: () => byId('status'),
  top: () => byId('top'),
  query: () => byId('query'),
  history: () => byId('history'),
  error: () => byId('error'),
  sessionPanel: () => byId('session-panel'),
  newSession: () => byId('new-session'),
};

let catalog: Catalog | null = null;

function sessionIdFromHash(): string | null {
  const hash = window.location.hash.replace(/^#/, '');
  return hash.startsWith('s/') ? hash.slice(2) : null;
}

function setSessionHash(id: string | null): void {
  const next = id ? `#s/${id}` : '';
  if (window.location.hash !== next) {
    // replaceState avoids re-entrant hashchange handling mid-refresh
    history.replaceState(null, '', `${window.location.pathname}${next}`);
  }
}

function showError(message: string, onRetry?: () => void): void {
  renderError(dom.error(), message, onRetry);
}

function describeError(err: unknown): string {
  if (err instanceof ServiceError) {
    return `${err.payload.code}: ${err.payload.message}`;
  }
  return err instanceof Error ? err.message : String(err);
}

async function refresh(sessionId: string): Promise<void> {
  if (!catalog) return;
  const state = await getSession(sessionId);
  const view = projectSession(state, catalog);
  dom.sessionPanel().hidden = false;
  renderStatus(dom.status(), view);
  renderTop(dom.top(), view.top);
  renderHistory(dom.history(), view.steps);
  renderQuery(dom.query(), view, {
    onAnswer: (concept, value) => {
      void answer(sessionId, concept, value);
    },
    onFinish: () => {
      void finishEarly(sessionId);
    },
    onInvalid: (message) => showError(message),
  });
}

async function ensurePending(sessionId: string): Promise<void> {
  // Drives the server to materialize the next query (idempotent), then
  // re-renders from the canonical session state.
  await getNext(sessionId);
  await refresh(sessionId);
}

async function answer(sessionId: string, concept: string, value: number): Promise<void> {
  showError('');
  try {
    await postAnswer(sessionId, concept, value);
    await ensurePending(sessionId);
  } catch (err) {
    showError(describeError(err), () => void ensurePending(sessionId));
  }
}

async function finishEarly(sessionId: string): Promise<void> {
  showError('');
  try {
    await finishSession(sessionId);
    await refresh(sessionId);
  } catch (err) {
    showError(describeError(err), () => void refresh(sessionId));
  }
}

async function openSession(sessionId: string): Promise<void> {
  showError('');
  try {
    setSessionHash(sessionId);
    await ensurePending(sessionId);
  } catch (err) {
    showError(describeError(err), () => void openSession(sessionId));
  }
}

function renderLobby(): void {
  if (!catalog) return;
  renderCreateForm(
    dom.create(),
    catalog,
    (values) => {
      void (async () => {
        showError('');
        try {
          const created = await createSession({
            instance_id: values.instanceId,
            policy: values.policy,
            budget: values.budget,
            cost_model: values.costModel,
          });
          await openSession(created.session_id);
        } catch (err) {
          showError(describeError(err));
        }
      })();
    },
    (message) => showError(message),
  );
}

async function boot(): Promise<void> {
  try {
    catalog = await getCatalog();
  } catch (err) {
    showError(describeError(err), () => void boot());
    return;
  }
  renderLobby();
  dom.newSession().addEventListener('click', () => {
    setSessionHash(null);
    dom.sessionPanel().hidden = true;
    showError('');
  });
  window.addEventListener('hashchange', () => {
    const id = sessionIdFromHash();
    if (id) void openSession(id);
  });
  const existing = sessionIdFromHash();
  if (existing) {
    await openSession(existing);
  }
}

void boot();
