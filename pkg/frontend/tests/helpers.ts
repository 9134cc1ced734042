/** Shared test scaffolding: canned wire payloads and a scripted fetch. */

import { FetchLike, GenericManifest, Report, SessionState } from '../src/api.js';

export const emptyReport: Report = { violations: [], gaps: [], fullRecheck: false };

export const manifest: GenericManifest = {
  id: 'sale',
  title: 'Agreement for Sale',
  schemaVersion: 1,
  units: [
    { id: 'root', kind: 'document', heading: 'Agreement for Sale', children: ['p1'], roleTags: [] },
    { id: 'p1', kind: 'part', heading: 'Operative Part', children: ['s-parties', 's-dates'], roleTags: [] },
    { id: 's-parties', kind: 'section', heading: 'Parties', children: [], roleTags: [] },
    { id: 's-dates', kind: 'section', heading: 'Dates', children: [], roleTags: [] },
  ],
  parameters: [
    { name: 'buyer', ptype: 'party', description: 'the buying party' },
    { name: 'seller', ptype: 'party', description: 'the selling party' },
  ],
  versions: [
    {
      id: 's-parties:v1',
      unitId: 's-parties',
      fragmentSha256: '0'.repeat(64),
      rationale: 'base wording',
      provenance: 'office precedent',
      createdAt: '',
    },
    {
      id: 's-parties:v2',
      unitId: 's-parties',
      fragmentSha256: '1'.repeat(64),
      rationale: 'negotiated change',
      provenance: 'negotiated contract',
      createdAt: '',
      derivedFrom: 's-parties:v1',
    },
  ],
  sha256: 'f'.repeat(64),
};

export function sessionState(over: Partial<SessionState> = {}): SessionState {
  return {
    sessionId: 's1',
    genericId: 'sale',
    mode: 'notify',
    revision: 0,
    included: ['root'],
    selections: {},
    bindings: {},
    finalized: false,
    report: emptyReport,
    ...over,
  };
}

export interface RecordedCall {
  method: string;
  path: string;
  headers: Record<string, string>;
  body: unknown;
}

export type Route = (call: RecordedCall) => { status: number; body: unknown };

/**
 * Scripted fetch: dispatches "METHOD /path" to a handler and records
 * every call so tests can assert on headers and payloads.
 */
export function scriptedFetch(routes: Record<string, Route>): {
  fetchFn: FetchLike;
  calls: RecordedCall[];
} {
  const calls: RecordedCall[] = [];
  const fetchFn: FetchLike = async (url, init) => {
    const path = url.replace(/^http:\/\/[^/]+/, '');
    const call: RecordedCall = {
      method: init?.method ?? 'GET',
      path,
      headers: init?.headers ?? {},
      body: init?.body === undefined ? undefined : JSON.parse(init.body),
    };
    calls.push(call);
    const route = routes[`${call.method} ${path}`];
    if (route === undefined) throw new Error(`unrouted: ${call.method} ${path}`);
    const { status, body } = route(call);
    return { status, json: async () => body };
  };
  return { fetchFn, calls };
}
