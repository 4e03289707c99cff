// Offline handling for MVR submission: a failed network call parks the
// record in a local queue with a visible pending badge; server rejections
// (4xx) are surfaced inline instead and never queued.

import { submitMvrs, type ApiClient, type ApiResult } from './api';
import type { MvrRecord, SubmitOutcome } from './types';

export interface PendingQueue {
  records: MvrRecord[];
}

export type SubmitResult =
  | { kind: 'accepted'; outcome: SubmitOutcome }
  | { kind: 'rejected'; status: number; error: string; detail?: unknown }
  | { kind: 'queued'; pending: number };

export function newQueue(): PendingQueue {
  return { records: [] };
}

export async function submitWithQueue(
  client: ApiClient,
  queue: PendingQueue,
  record: MvrRecord
): Promise<SubmitResult> {
  const result = await submitMvrs(client, [record]);
  if (result.ok) return { kind: 'accepted', outcome: result.data };
  if (result.status === 0) {
    queue.records.push(record);
    return { kind: 'queued', pending: queue.records.length };
  }
  return { kind: 'rejected', status: result.status, error: result.error, detail: result.detail };
}

/** Retry everything in the queue; stops at the first failure. */
export async function flushQueue(
  client: ApiClient,
  queue: PendingQueue
): Promise<ApiResult<SubmitOutcome> | null> {
  let last: ApiResult<SubmitOutcome> | null = null;
  while (queue.records.length > 0) {
    const record = queue.records[0]!;
    last = await submitMvrs(client, [record]);
    if (!last.ok) break;
    queue.records.shift();
  }
  return last;
}

export const pendingCount = (queue: PendingQueue): number => queue.records.length;
