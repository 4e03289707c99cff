// Entry form model for one card's manual vote record. Pure data + pure
// updates so the tests can drive exactly what the UI drives.

import type { Marks, MvrRecord } from './types';

export interface ContestGrid {
  contestId: string;
  candidates: string[];
  nWinners: number;
  selected: string[];
}

export interface MvrEntryForm {
  cardId: string;
  grids: ContestGrid[];
  notFound: boolean;
  submitted: boolean;
}

export interface ContestSpecLite {
  id: string;
  candidates: string[];
  n_winners: number;
}

/** Build an empty form for a card, given which contests it should contain. */
export function newForm(cardId: string, contests: ContestSpecLite[]): MvrEntryForm {
  return {
    cardId,
    grids: contests.map((c) => ({
      contestId: c.id,
      candidates: [...c.candidates],
      nWinners: c.n_winners,
      selected: [],
    })),
    notFound: false,
    submitted: false,
  };
}

/** A submitted form is immutable; corrections go through supersede(). */
function assertEditable(form: MvrEntryForm): void {
  if (form.submitted) {
    throw new Error(`card ${form.cardId}: form already submitted; supersede it instead`);
  }
}

export function toggleCandidate(
  form: MvrEntryForm,
  contestId: string,
  candidate: string
): MvrEntryForm {
  assertEditable(form);
  if (form.notFound) return form; // a missing card has no marks to record
  return {
    ...form,
    grids: form.grids.map((g) => {
      if (g.contestId !== contestId) return g;
      if (!g.candidates.includes(candidate)) return g;
      const selected = g.selected.includes(candidate)
        ? g.selected.filter((c) => c !== candidate)
        : [...g.selected, candidate];
      return { ...g, selected };
    }),
  };
}

/** Turning not-found on wipes every mark: the two are mutually exclusive. */
export function setNotFound(form: MvrEntryForm, notFound: boolean): MvrEntryForm {
  assertEditable(form);
  return {
    ...form,
    notFound,
    grids: notFound ? form.grids.map((g) => ({ ...g, selected: [] })) : form.grids,
  };
}

export interface ValidationResult {
  ok: boolean;
  problems: string[];
  overvotes: string[]; // informational: an overvote is a legitimate reading
}

export function validate(form: MvrEntryForm): ValidationResult {
  const problems: string[] = [];
  const overvotes: string[] = [];
  if (form.notFound && form.grids.some((g) => g.selected.length > 0)) {
    problems.push('a card marked not-found cannot carry votes');
  }
  for (const g of form.grids) {
    if (g.selected.length > g.nWinners) overvotes.push(g.contestId);
  }
  return { ok: problems.length === 0, problems, overvotes };
}

/** The canonical MVR record the server expects. */
export function toRecord(form: MvrEntryForm): MvrRecord {
  if (form.notFound) {
    return { id: form.cardId, contests: {}, not_found: true };
  }
  const contests: Record<string, Marks> = {};
  for (const g of form.grids) {
    const marks: Marks = {};
    for (const c of g.selected) marks[c] = true;
    contests[g.contestId] = marks;
  }
  return { id: form.cardId, contests };
}

export function markSubmitted(form: MvrEntryForm): MvrEntryForm {
  return { ...form, submitted: true };
}

/** A fresh editable copy carrying the previous entries, for corrections. */
export function supersede(form: MvrEntryForm): MvrEntryForm {
  return { ...form, submitted: false };
}

/** Prefill a form from known marks (e.g. re-opening a superseded entry). */
export function withMarks(form: MvrEntryForm, contests: Record<string, Marks>): MvrEntryForm {
  assertEditable(form);
  return {
    ...form,
    grids: form.grids.map((g) => {
      const marks = contests[g.contestId];
      if (!marks) return g;
      return { ...g, selected: g.candidates.filter((c) => Boolean(marks[c])) };
    }),
  };
}
