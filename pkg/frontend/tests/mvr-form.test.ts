import { describe, expect, it } from 'vitest';

import {
  markSubmitted,
  newForm,
  setNotFound,
  supersede,
  toRecord,
  toggleCandidate,
  validate,
  withMarks,
} from '../src/mvr-form';

const CONTESTS = [
  { id: 'mayor', candidates: ['alice', 'bob', 'carol'], n_winners: 1 },
  { id: 'board', candidates: ['x', 'y', 'z'], n_winners: 2 },
];

describe('MVR entry form', () => {
  it('starts blank with every expected contest', () => {
    const form = newForm('card-1', CONTESTS);
    expect(form.grids.map((g) => g.contestId)).toEqual(['mayor', 'board']);
    expect(validate(form).ok).toBe(true);
    expect(toRecord(form)).toEqual({
      id: 'card-1',
      contests: { mayor: {}, board: {} },
    });
  });

  it('toggles candidates on and off', () => {
    let form = newForm('card-1', CONTESTS);
    form = toggleCandidate(form, 'mayor', 'alice');
    expect(toRecord(form).contests['mayor']).toEqual({ alice: true });
    form = toggleCandidate(form, 'mayor', 'alice');
    expect(toRecord(form).contests['mayor']).toEqual({});
  });

  it('ignores candidates that are not on the grid', () => {
    let form = newForm('card-1', CONTESTS);
    form = toggleCandidate(form, 'mayor', 'nobody');
    expect(toRecord(form).contests['mayor']).toEqual({});
  });

  it('records overvotes as data, flagged but not blocked', () => {
    let form = newForm('card-1', CONTESTS);
    form = toggleCandidate(form, 'mayor', 'alice');
    form = toggleCandidate(form, 'mayor', 'bob');
    const result = validate(form);
    expect(result.ok).toBe(true);
    expect(result.overvotes).toEqual(['mayor']);
    expect(toRecord(form).contests['mayor']).toEqual({ alice: true, bob: true });
  });

  it('not-found wipes marks and they stay excluded', () => {
    let form = newForm('card-1', CONTESTS);
    form = toggleCandidate(form, 'mayor', 'alice');
    form = setNotFound(form, true);
    expect(form.grids.every((g) => g.selected.length === 0)).toBe(true);
    // further toggles are ignored while not-found is on
    form = toggleCandidate(form, 'mayor', 'bob');
    expect(toRecord(form)).toEqual({ id: 'card-1', contests: {}, not_found: true });
  });

  it('clearing not-found restores an editable empty grid', () => {
    let form = newForm('card-1', CONTESTS);
    form = setNotFound(form, true);
    form = setNotFound(form, false);
    form = toggleCandidate(form, 'board', 'x');
    expect(toRecord(form).contests['board']).toEqual({ x: true });
    expect(toRecord(form).not_found).toBeUndefined();
  });

  it('submitted forms are immutable until superseded', () => {
    let form = newForm('card-1', CONTESTS);
    form = toggleCandidate(form, 'mayor', 'alice');
    form = markSubmitted(form);
    expect(() => toggleCandidate(form, 'mayor', 'bob')).toThrow(/supersede/);
    expect(() => setNotFound(form, true)).toThrow(/supersede/);
    const corrected = toggleCandidate(supersede(form), 'mayor', 'bob');
    expect(toRecord(corrected).contests['mayor']).toEqual({ alice: true, bob: true });
  });

  it('prefills from existing marks', () => {
    const form = withMarks(newForm('card-1', CONTESTS), {
      mayor: { carol: true },
      board: { x: true, z: true },
    });
    expect(toRecord(form).contests).toEqual({
      mayor: { carol: true },
      board: { x: true, z: true },
    });
  });
});
