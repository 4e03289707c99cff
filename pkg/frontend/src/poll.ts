// Light polling for the risk panel: back off while nothing changes.

import { getAssertions, type ApiClient } from './api';
import type { AssertionInfo } from './types';

function sleep(ms: number) {
  return new Promise((r) => setTimeout(r, ms));
}

export async function pollAssertions(
  client: ApiClient,
  onUpdate: (assertions: AssertionInfo[]) => void,
  shouldStop: () => boolean
): Promise<void> {
  let delay = 2000;
  let lastSerialized = '';
  while (!shouldStop()) {
    const result = await getAssertions(client);
    if (result.ok) {
      const serialized = JSON.stringify(result.data);
      if (serialized !== lastSerialized) {
        lastSerialized = serialized;
        onUpdate(result.data);
        delay = 2000;
      } else {
        delay = Math.min(10_000, Math.floor(delay * 1.5));
      }
    } else {
      delay = Math.min(10_000, Math.floor(delay * 1.5));
    }
    await sleep(delay);
  }
}
