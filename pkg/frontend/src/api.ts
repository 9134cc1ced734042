/**
 * Typed fetch client for the contractcad HTTP service.
 *
 * Every method maps 1:1 to a service endpoint and returns the parsed
 * JSON body unchanged. The client adds no semantics: interpretation of
 * reports, blocks, and revisions belongs to the store layer, and the
 * constraint engine itself lives entirely on the server.
 */

// ---- wire types (mirror the service JSON exactly) -------------------

export interface GenericSummary {
  id: string;
  title: string;
}

export interface UnitView {
  id: string;
  kind: string;
  heading: string;
  children: string[];
  roleTags: string[];
}

export interface ParameterView {
  name: string;
  ptype: string;
  description: string;
  enumValues?: string[];
}

export interface VersionView {
  id: string;
  unitId: string;
  fragmentSha256: string;
  rationale: string;
  provenance: string;
  createdAt: string;
  derivedFrom?: string;
}

export interface GenericManifest {
  id: string;
  title: string;
  schemaVersion: number;
  units: UnitView[];
  parameters: ParameterView[];
  versions: VersionView[];
  sha256: string;
}

export interface Violation {
  constraintId: string;
  kind: string;
  involved: string[];
  message: string;
}

export interface Gap {
  kind: string;
  subject: string;
  message: string;
}

export interface Report {
  violations: Violation[];
  gaps: Gap[];
  fullRecheck: boolean;
}

export interface SessionState {
  sessionId: string;
  genericId: string;
  mode: 'notify' | 'enforce';
  revision: number;
  included: string[];
  selections: Record<string, string>;
  bindings: Record<string, string>;
  finalized: boolean;
  report: Report;
}

export type Delta =
  | { op: 'include'; unit: string }
  | { op: 'exclude'; unit: string }
  | { op: 'select'; unit: string; version: string }
  | { op: 'deselect'; unit: string }
  | { op: 'bind'; param: string; value: string }
  | { op: 'unbind'; param: string };

export interface EditOutcome {
  revision: number;
  sideEffects: string[];
  report: Report;
}

export interface BlockedStep {
  /** null for the triggering atom / ancestor-closure steps. */
  constraintId: string | null;
  atom: string;
}

/** Body of a 422 response for an edit refused in enforce mode. */
export interface BlockedDetail {
  blocked: true;
  reason: string;
  chain: BlockedStep[];
  revision: number;
}

export type PreviewOutcome =
  | { blocked: true; reason: string; revision: number }
  | { blocked: false; revision: number; sideEffects: string[]; report: Report };

export interface FinalizeBlocker {
  kind: string;
  subject: string;
  message: string;
}

export type FinalizeOutcome =
  | { finalized: false; revision: number; blockers: FinalizeBlocker[] }
  | { finalized: true; revision: number; genericSha256: string };

export interface RenderResult {
  revision: number;
  draft: boolean;
  text: string;
}

export interface PromoteResult {
  versionId: string;
  revision: number;
  report: Report;
}

// ---- errors ---------------------------------------------------------

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: unknown,
  ) {
    super(typeof detail === 'string' ? detail : JSON.stringify(detail));
    this.name = 'ApiError';
  }
}

export function isBlockedDetail(detail: unknown): detail is BlockedDetail {
  return (
    typeof detail === 'object' &&
    detail !== null &&
    (detail as { blocked?: unknown }).blocked === true
  );
}

// ---- client ---------------------------------------------------------

export type FetchLike = (
  url: string,
  init?: {
    method?: string;
    headers?: Record<string, string>;
    body?: string;
  },
) => Promise<{ status: number; json(): Promise<unknown> }>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
    headers: Record<string, string> = {},
  ): Promise<T> {
    const init: Parameters<FetchLike>[1] = { method, headers: { ...headers } };
    if (body !== undefined) {
      init.headers!['Content-Type'] = 'application/json';
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.baseUrl + path, init);
    const payload = (await response.json()) as Record<string, unknown>;
    if (response.status >= 400) {
      throw new ApiError(response.status, payload['detail'] ?? payload);
    }
    return payload as T;
  }

  listGenerics(): Promise<{ generics: GenericSummary[] }> {
    return this.request('GET', '/generics');
  }

  getGeneric(id: string): Promise<GenericManifest> {
    return this.request('GET', `/generics/${id}`);
  }

  openSession(genericId: string, mode: 'notify' | 'enforce'): Promise<SessionState> {
    return this.request('POST', '/sessions', { genericId, mode });
  }

  getSession(sessionId: string): Promise<SessionState> {
    return this.request('GET', `/sessions/${sessionId}`);
  }

  applyEdit(sessionId: string, delta: Delta, revision: number): Promise<EditOutcome> {
    return this.request('POST', `/sessions/${sessionId}/edits`, delta, {
      'If-Revision': String(revision),
    });
  }

  previewEdit(sessionId: string, delta: Delta): Promise<PreviewOutcome> {
    return this.request('POST', `/sessions/${sessionId}/preview`, delta);
  }

  finalize(sessionId: string): Promise<FinalizeOutcome> {
    return this.request('POST', `/sessions/${sessionId}/finalize`);
  }

  render(sessionId: string): Promise<RenderResult> {
    return this.request('GET', `/sessions/${sessionId}/render`);
  }

  promote(
    sessionId: string,
    unitId: string,
    template: string,
    rationale: string,
  ): Promise<PromoteResult> {
    return this.request('POST', `/sessions/${sessionId}/versions`, {
      unitId,
      template,
      rationale,
    });
  }

  save(sessionId: string): Promise<{ revision: number; instanceId: string }> {
    return this.request('POST', `/sessions/${sessionId}/save`);
  }
}
