import type {
  AssertionInfo,
  ContestInfo,
  MvrRecord,
  RetrievalListInfo,
  RoundPlanInfo,
  StateSummary,
  SubmitOutcome,
} from './types';

export interface ApiClient {
  base: string;
  token: string;
}

export type ApiResult<T> =
  | { ok: true; data: T }
  | { ok: false; status: number; error: string; detail?: unknown };

async function request<T>(
  client: ApiClient,
  method: 'GET' | 'POST',
  path: string,
  body?: unknown
): Promise<ApiResult<T>> {
  const headers: Record<string, string> = {};
  if (method === 'POST') {
    headers['Content-Type'] = 'application/json';
    if (client.token) headers['Authorization'] = `Bearer ${client.token}`;
  }
  let response: Response;
  try {
    response = await fetch(`${client.base}${path}`, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
  } catch (err) {
    const message = err instanceof Error ? err.message : 'network unreachable';
    return { ok: false, status: 0, error: message };
  }
  const data = await response.json().catch(() => ({}));
  if (!response.ok) {
    const error =
      typeof (data as { error?: unknown }).error === 'string'
        ? (data as { error: string }).error
        : `HTTP ${response.status}`;
    return { ok: false, status: response.status, error, detail: data };
  }
  return { ok: true, data: data as T };
}

export const getState = (c: ApiClient) => request<StateSummary>(c, 'GET', '/api/state');

export const getContests = (c: ApiClient) => request<ContestInfo[]>(c, 'GET', '/api/contests');

export const getAssertions = (c: ApiClient) =>
  request<AssertionInfo[]>(c, 'GET', '/api/assertions');

export const planRound = (c: ApiClient, targets?: Record<string, number>) =>
  request<RoundPlanInfo>(c, 'POST', '/api/rounds', targets ? { targets } : {});

export const getRetrievalList = (c: ApiClient, round: number) =>
  request<RetrievalListInfo>(c, 'GET', `/api/rounds/${round}/retrieval-list`);

export const submitMvrs = (c: ApiClient, records: MvrRecord[]) =>
  request<SubmitOutcome>(c, 'POST', '/api/mvrs', { records });

export const escalateContest = (c: ApiClient, contestId: string) =>
  request<{ contest: string; status: string }>(
    c,
    'POST',
    `/api/contests/${encodeURIComponent(contestId)}/escalate`,
    {}
  );

export const getReportText = async (
  client: ApiClient,
  threshold?: number
): Promise<ApiResult<string>> => {
  const query = threshold === undefined ? '' : `?threshold=${threshold}`;
  try {
    const response = await fetch(`${client.base}/api/report${query}`);
    if (!response.ok) return { ok: false, status: response.status, error: `HTTP ${response.status}` };
    return { ok: true, data: await response.text() };
  } catch (err) {
    const message = err instanceof Error ? err.message : 'network unreachable';
    return { ok: false, status: 0, error: message };
  }
};
