// DOM rendering. Every number shown here came from the server; the views
// format, they never compute.

import type { AssertionInfo, ContestInfo, RetrievalEntry, RoundPlanInfo } from './types';
import type { MvrEntryForm } from './mvr-form';
import { validate } from './mvr-form';

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  children: (Node | string)[] = []
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === 'class') node.className = v;
    else node.setAttribute(k, v);
  }
  for (const child of children) node.append(child);
  return node;
}

const fmtP = (p: number) => (p < 0.0001 ? '<0.0001' : p.toFixed(4));
const fmtMargin = (m: number | null) => (m === null ? '—' : `${(m * 100).toFixed(2)}%`);

export function renderStatusChips(contests: ContestInfo[]): HTMLElement {
  const chips = contests.map((c) =>
    el('span', { class: `chip chip-${c.status}`, 'data-contest': c.id }, [
      `${c.name}: ${c.status === 'hand_count' ? 'full hand count' : c.status}`,
    ])
  );
  return el('div', { class: 'chips' }, chips);
}

export function renderRiskPanel(assertions: AssertionInfo[]): HTMLElement {
  const rows = assertions.map((a) =>
    el('tr', { class: a.status === 'confirmed' ? 'row-confirmed' : '' }, [
      el('td', {}, [a.contest]),
      el('td', {}, [a.claim]),
      el('td', { class: 'num' }, [fmtMargin(a.margin)]),
      el('td', { class: 'num', 'data-p': String(a.p_value) }, [fmtP(a.p_value)]),
      el('td', {}, [a.status]),
    ])
  );
  return el('table', { class: 'risk-panel' }, [
    el('thead', {}, [
      el('tr', {}, [
        el('th', {}, ['contest']),
        el('th', {}, ['claim']),
        el('th', {}, ['margin']),
        el('th', {}, ['measured risk (p)']),
        el('th', {}, ['status']),
      ]),
    ]),
    el('tbody', {}, rows),
  ]);
}

export interface PlanCallbacks {
  onPlan: (targets: Record<string, number>) => void;
}

/** Round planning: server estimates with editable cumulative targets. */
export function renderPlanView(contests: ContestInfo[], cb: PlanCallbacks): HTMLElement {
  const active = contests.filter((c) => c.status === 'active');
  const inputs = new Map<string, HTMLInputElement>();
  const rows = active.map((c) => {
    const suggested = c.cards_consumed + (c.projected_remaining ?? 0);
    const input = el('input', {
      type: 'number',
      min: String(c.cards_consumed),
      max: String(c.cards),
      value: String(Math.min(suggested, c.cards)),
      'data-contest': c.id,
    });
    inputs.set(c.id, input);
    return el('tr', {}, [
      el('td', {}, [c.name]),
      el('td', { class: 'num' }, [String(c.cards)]),
      el('td', { class: 'num' }, [fmtMargin(c.diluted_margin)]),
      el('td', { class: 'num' }, [String(c.cards_consumed)]),
      el('td', { class: 'num' }, [String(c.projected_remaining ?? '—')]),
      el('td', {}, [input]),
    ]);
  });
  const warning = el('p', { class: 'error', hidden: '' });
  const button = el('button', { class: 'primary' }, ['Plan round']);
  button.addEventListener('click', () => {
    const targets: Record<string, number> = {};
    for (const [cid, input] of inputs) {
      const value = Number(input.value);
      const cap = Number(input.max);
      if (!Number.isInteger(value) || value < 0 || value > cap) {
        warning.textContent = `${cid}: target must be a whole number of cards, at most ${cap}`;
        warning.hidden = false;
        return;
      }
      targets[cid] = value;
    }
    warning.hidden = true;
    cb.onPlan(targets);
  });
  return el('section', { class: 'plan-view' }, [
    el('table', {}, [
      el('thead', {}, [
        el('tr', {}, [
          el('th', {}, ['contest']),
          el('th', {}, ['cards']),
          el('th', {}, ['margin']),
          el('th', {}, ['drawn so far']),
          el('th', {}, ['projected remaining']),
          el('th', {}, ['cumulative target']),
        ]),
      ]),
      el('tbody', {}, rows),
    ]),
    warning,
    button,
  ]);
}

export interface ChecklistCallbacks {
  onOpen: (entry: RetrievalEntry) => void;
}

/** Retrieval checklist grouped by container/tabulator/batch. */
export function renderChecklist(
  entries: RetrievalEntry[],
  phantoms: string[],
  notLocatable: string[],
  cb: ChecklistCallbacks
): HTMLElement {
  const groups = new Map<string, RetrievalEntry[]>();
  for (const entry of entries) {
    const key = `${entry.container} / ${entry.tabulator} / batch ${entry.batch}`;
    const group = groups.get(key) ?? [];
    group.push(entry);
    groups.set(key, group);
  }
  const sections: Node[] = [];
  for (const [key, group] of groups) {
    const items = group.map((entry) => {
      const button = el(
        'button',
        { class: entry.entered ? 'card-item entered' : 'card-item', 'data-card': entry.card_id },
        [`${entry.card_id} (position ${entry.position})${entry.entered ? ' ✓' : ''}`]
      );
      button.addEventListener('click', () => cb.onOpen(entry));
      return el('li', {}, [button]);
    });
    sections.push(el('details', { open: '' }, [el('summary', {}, [key]), el('ul', {}, items)]));
  }
  if (phantoms.length) {
    sections.push(
      el('p', { class: 'note' }, [`${phantoms.length} phantom record(s) — no card to retrieve`])
    );
  }
  if (notLocatable.length) {
    sections.push(
      el('p', { class: 'error' }, [`not locatable in the manifest: ${notLocatable.join(', ')}`])
    );
  }
  return el('section', { class: 'checklist' }, sections);
}

export interface EntryCallbacks {
  onToggle: (contestId: string, candidate: string) => void;
  onNotFound: (flag: boolean) => void;
  onSubmit: () => void;
  onCancel: () => void;
}

/** Card-entry grid; number keys toggle choices, N toggles not-found. */
export function renderEntryForm(form: MvrEntryForm, cb: EntryCallbacks): HTMLElement {
  const validation = validate(form);
  const grids = form.grids.map((g) => {
    const boxes = g.candidates.map((cand, i) => {
      const checkbox = el('input', { type: 'checkbox', 'data-candidate': cand });
      (checkbox as HTMLInputElement).checked = g.selected.includes(cand);
      (checkbox as HTMLInputElement).disabled = form.notFound;
      checkbox.addEventListener('change', () => cb.onToggle(g.contestId, cand));
      return el('label', { class: 'choice' }, [checkbox, `${i + 1}. ${cand}`]);
    });
    const over = validation.overvotes.includes(g.contestId)
      ? el('span', { class: 'badge badge-overvote' }, ['overvote'])
      : '';
    const under = g.selected.length === 0 && !form.notFound
      ? el('span', { class: 'badge' }, ['blank / undervote'])
      : '';
    return el('fieldset', { 'data-contest': g.contestId }, [
      el('legend', {}, [g.contestId, ' ', over, ' ', under]),
      ...boxes,
    ]);
  });
  const notFound = el('input', { type: 'checkbox', id: 'not-found' });
  (notFound as HTMLInputElement).checked = form.notFound;
  notFound.addEventListener('change', () =>
    cb.onNotFound((notFound as HTMLInputElement).checked)
  );
  const submit = el('button', { class: 'primary' }, ['Submit (Enter)']);
  submit.addEventListener('click', cb.onSubmit);
  const cancel = el('button', {}, ['Back (Esc)']);
  cancel.addEventListener('click', cb.onCancel);
  const error = el('p', { class: 'error inline-error', hidden: '' });
  const root = el('section', { class: 'entry-form', tabindex: '0' }, [
    el('h3', {}, [`Card ${form.cardId}`]),
    ...grids,
    el('label', { class: 'not-found' }, [notFound, ' card not found (N)']),
    error,
    el('div', { class: 'actions' }, [submit, cancel]),
  ]);
  root.addEventListener('keydown', (event) => {
    const key = (event as KeyboardEvent).key;
    if (key === 'Enter') cb.onSubmit();
    else if (key === 'Escape') cb.onCancel();
    else if (key.toLowerCase() === 'n') cb.onNotFound(!form.notFound);
    else if (/^[1-9]$/.test(key)) {
      const grid = form.grids[0];
      const cand = grid?.candidates[Number(key) - 1];
      if (grid && cand) cb.onToggle(grid.contestId, cand);
    }
  });
  return root;
}

export function showInlineError(formRoot: HTMLElement, message: string): void {
  const node = formRoot.querySelector<HTMLElement>('.inline-error');
  if (node) {
    node.textContent = message;
    node.hidden = false;
  }
}

export interface EscalateCallbacks {
  onEscalate: (contestId: string) => void;
}

/** Escalation card with the remaining-sample vs full-count tradeoff. */
export function renderEscalatePanel(contests: ContestInfo[], cb: EscalateCallbacks): HTMLElement {
  const rows = contests
    .filter((c) => c.status === 'active')
    .map((c) => {
      const button = el('button', { class: 'danger', 'data-escalate': c.id }, [
        'Escalate to full hand count',
      ]);
      button.addEventListener('click', () => {
        const remaining = c.projected_remaining ?? c.cards;
        const ok = window.confirm(
          `Escalate ${c.name}?\n\nProjected remaining sample: ${remaining} cards.\n` +
            `Full hand count: every one of the ${c.cards} cards containing the contest.`
        );
        if (ok) cb.onEscalate(c.id);
      });
      return el('div', { class: 'escalate-row' }, [
        el('span', {}, [`${c.name} — drawn ${c.cards_consumed}, projected remaining `,
          String(c.projected_remaining ?? '—'), ` of ${c.cards}`]),
        button,
      ]);
    });
  return el('section', { class: 'escalate-panel' }, rows.length ? rows : ['no active contests']);
}

export function renderRoundBanner(plan: RoundPlanInfo): HTMLElement {
  return el('p', { class: 'round-banner' }, [
    `Round ${plan.round}: ${plan.selected} cards selected ` +
      `(${plan.estimated_total.toFixed(1)} expected), ${plan.newly_selected.length} new.`,
  ]);
}
