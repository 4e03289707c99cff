// Wires the dashboard together: plan a round, work the checklist, key in
// MVRs, watch measured risk, escalate when sampling is pointless.

import {
  escalateContest,
  getContests,
  getRetrievalList,
  getState,
  planRound,
  type ApiClient,
} from './api';
import {
  markSubmitted,
  newForm,
  setNotFound,
  supersede,
  toRecord,
  toggleCandidate,
  withMarks,
  type MvrEntryForm,
} from './mvr-form';
import { pollAssertions } from './poll';
import { flushQueue, newQueue, pendingCount, submitWithQueue } from './queue';
import type { ContestInfo, RetrievalEntry } from './types';
import {
  el,
  renderChecklist,
  renderEntryForm,
  renderEscalatePanel,
  renderPlanView,
  renderRiskPanel,
  renderRoundBanner,
  renderStatusChips,
  showInlineError,
} from './views';

interface AppState {
  client: ApiClient;
  contests: ContestInfo[];
  round: number;
  forms: Map<string, MvrEntryForm>;
  openCard: string | null;
  queue: ReturnType<typeof newQueue>;
  stopped: boolean;
}

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node;
}

async function refreshHeader(app: AppState): Promise<void> {
  const [state, contests] = await Promise.all([getState(app.client), getContests(app.client)]);
  if (contests.ok) app.contests = contests.data;
  if (state.ok) app.round = state.data.round;
  const header = byId('status');
  header.replaceChildren(renderStatusChips(app.contests));
  if (state.ok && state.data.warnings.length) {
    header.append(el('p', { class: 'note' }, [state.data.warnings.join(' · ')]));
  }
  const pending = pendingCount(app.queue);
  if (pending > 0) {
    header.append(el('span', { class: 'badge badge-pending' }, [`${pending} pending (offline)`]));
  }
}

async function refreshChecklist(app: AppState): Promise<void> {
  const target = byId('checklist');
  if (app.round === 0) {
    target.replaceChildren(el('p', { class: 'note' }, ['no round planned yet']));
    return;
  }
  const result = await getRetrievalList(app.client, app.round);
  if (!result.ok) {
    target.replaceChildren(el('p', { class: 'error' }, [result.error]));
    return;
  }
  target.replaceChildren(
    renderChecklist(result.data.entries, result.data.phantoms, result.data.not_locatable, {
      onOpen: (entry) => openEntry(app, entry),
    })
  );
}

function contestSpecs(app: AppState, entry: RetrievalEntry) {
  return entry.contests
    .map((cid) => app.contests.find((c) => c.id === cid))
    .filter((c): c is ContestInfo => Boolean(c))
    .map((c) => ({ id: c.id, candidates: c.candidates, n_winners: c.n_winners }));
}

function openEntry(app: AppState, entry: RetrievalEntry): void {
  let form = app.forms.get(entry.card_id);
  if (!form) {
    form = newForm(entry.card_id, contestSpecs(app, entry));
  } else if (form.submitted) {
    form = supersede(form); // correction: new entry superseding the old one
  }
  app.forms.set(entry.card_id, form);
  app.openCard = entry.card_id;
  renderOpenForm(app);
}

function renderOpenForm(app: AppState): void {
  const target = byId('entry');
  const cardId = app.openCard;
  if (!cardId) {
    target.replaceChildren();
    return;
  }
  const form = app.forms.get(cardId);
  if (!form) return;
  const root = renderEntryForm(form, {
    onToggle: (contestId, candidate) => {
      app.forms.set(cardId, toggleCandidate(form, contestId, candidate));
      renderOpenForm(app);
    },
    onNotFound: (flag) => {
      app.forms.set(cardId, setNotFound(form, flag));
      renderOpenForm(app);
    },
    onSubmit: () => void submitOpenForm(app, root),
    onCancel: () => {
      app.openCard = null;
      renderOpenForm(app);
    },
  });
  target.replaceChildren(root);
  root.focus();
}

async function submitOpenForm(app: AppState, root: HTMLElement): Promise<void> {
  const cardId = app.openCard;
  if (!cardId) return;
  const form = app.forms.get(cardId);
  if (!form || form.submitted) return;
  const result = await submitWithQueue(app.client, app.queue, toRecord(form));
  if (result.kind === 'rejected') {
    showInlineError(root, `${result.status}: ${result.error}`);
    return; // nothing queued, nothing checked off
  }
  app.forms.set(cardId, markSubmitted(form));
  app.openCard = null;
  renderOpenForm(app);
  await refreshHeader(app);
  await refreshChecklist(app);
}

async function refreshPlanAndEscalate(app: AppState): Promise<void> {
  byId('plan').replaceChildren(
    renderPlanView(app.contests, {
      onPlan: async (targets) => {
        const result = await planRound(app.client, targets);
        const banner = byId('round-banner');
        if (result.ok) {
          app.round = result.data.round;
          banner.replaceChildren(renderRoundBanner(result.data));
        } else {
          banner.replaceChildren(
            el('p', { class: 'error' }, [
              result.status === 409 ? 'another change in progress' : result.error,
            ])
          );
        }
        await refreshHeader(app);
        await refreshChecklist(app);
        await refreshPlanAndEscalate(app);
      },
    })
  );
  byId('escalate').replaceChildren(
    renderEscalatePanel(app.contests, {
      onEscalate: async (contestId) => {
        const result = await escalateContest(app.client, contestId);
        if (!result.ok) {
          byId('round-banner').replaceChildren(
            el('p', { class: 'error' }, [
              result.status === 409 ? 'another change in progress' : result.error,
            ])
          );
        }
        await refreshHeader(app);
        await refreshPlanAndEscalate(app);
      },
    })
  );
}

export async function startApp(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const client: ApiClient = {
    base: params.get('api') ?? 'http://127.0.0.1:8700',
    token: params.get('token') ?? '',
  };
  const app: AppState = {
    client,
    contests: [],
    round: 0,
    forms: new Map(),
    openCard: null,
    queue: newQueue(),
    stopped: false,
  };
  await refreshHeader(app);
  await refreshChecklist(app);
  await refreshPlanAndEscalate(app);
  window.addEventListener('online', () => void flushQueue(app.client, app.queue));
  void pollAssertions(
    app.client,
    (assertions) => byId('risk').replaceChildren(renderRiskPanel(assertions)),
    () => app.stopped
  );
}

if (typeof document !== 'undefined' && document.getElementById('status')) {
  void startApp();
}
