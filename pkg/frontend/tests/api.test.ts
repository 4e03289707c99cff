import { afterEach, describe, expect, it, vi } from 'vitest';

import { escalateContest, getAssertions, planRound, submitMvrs } from '../src/api';
import { flushQueue, newQueue, pendingCount, submitWithQueue } from '../src/queue';

const client = { base: 'http://test', token: 'tok' };

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

afterEach(() => vi.unstubAllGlobals());

describe('api client', () => {
  it('sends the bearer token on mutations only', async () => {
    const calls: RequestInit[] = [];
    vi.stubGlobal('fetch', async (_url: string, init?: RequestInit) => {
      calls.push(init ?? {});
      return jsonResponse(200, []);
    });
    await getAssertions(client);
    await submitMvrs(client, [{ id: 'x', contests: {} }]);
    const getHeaders = (calls[0]?.headers ?? {}) as Record<string, string>;
    const postHeaders = (calls[1]?.headers ?? {}) as Record<string, string>;
    expect(getHeaders['Authorization']).toBeUndefined();
    expect(postHeaders['Authorization']).toBe('Bearer tok');
  });

  it('surfaces 422 payloads for inline display', async () => {
    vi.stubGlobal('fetch', async () =>
      jsonResponse(422, { error: 'records for cards not on the retrieval list', unknown: ['g-1'], unselected: [] })
    );
    const result = await submitMvrs(client, [{ id: 'g-1', contests: {} }]);
    expect(result.ok).toBe(false);
    if (!result.ok) {
      expect(result.status).toBe(422);
      expect(result.error).toMatch(/retrieval list/);
      expect((result.detail as { unknown: string[] }).unknown).toEqual(['g-1']);
    }
  });

  it('passes target overrides through', async () => {
    let sent: unknown;
    vi.stubGlobal('fetch', async (_url: string, init?: RequestInit) => {
      sent = JSON.parse(String(init?.body));
      return jsonResponse(200, { round: 2, targets: {}, selected: 0, newly_selected: [], estimated_total: 0 });
    });
    await planRound(client, { county: 120 });
    expect(sent).toEqual({ targets: { county: 120 } });
  });

  it('reports network failure with status 0', async () => {
    vi.stubGlobal('fetch', async () => {
      throw new Error('network down');
    });
    const result = await escalateContest(client, 'x');
    expect(result.ok).toBe(false);
    if (!result.ok) expect(result.status).toBe(0);
  });
});

describe('offline queue', () => {
  it('queues on network failure, not on server rejection', async () => {
    const queue = newQueue();
    vi.stubGlobal('fetch', async () => {
      throw new Error('offline');
    });
    const queued = await submitWithQueue(client, queue, { id: 'a', contests: {} });
    expect(queued.kind).toBe('queued');
    expect(pendingCount(queue)).toBe(1);

    vi.stubGlobal('fetch', async () => jsonResponse(422, { error: 'bad', unknown: [], unselected: [] }));
    const rejected = await submitWithQueue(client, queue, { id: 'b', contests: {} });
    expect(rejected.kind).toBe('rejected');
    expect(pendingCount(queue)).toBe(1); // the rejected record was not queued
  });

  it('flushes queued records once the network returns', async () => {
    const queue = newQueue();
    vi.stubGlobal('fetch', async () => {
      throw new Error('offline');
    });
    await submitWithQueue(client, queue, { id: 'a', contests: {} });
    await submitWithQueue(client, queue, { id: 'b', contests: {} });
    expect(pendingCount(queue)).toBe(2);
    vi.stubGlobal('fetch', async () =>
      jsonResponse(200, { accepted: ['x'], superseded: [], p_values: {} })
    );
    await flushQueue(client, queue);
    expect(pendingCount(queue)).toBe(0);
  });
});
