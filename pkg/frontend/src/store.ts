/**
 * Workbench session store.
 *
 * Holds the state behind the drafting screens and talks to the service
 * through the ApiClient. The store is a thin client: it never evaluates
 * a constraint itself — every violation, gap, cascade, and block shown
 * to the drafter is copied verbatim from a service response, and the
 * displayed revision always echoes the server's.
 *
 * Concurrency: one active session per tab, optimistic concurrency via
 * the If-Revision echo. A 409 (someone else moved the session forward)
 * triggers an automatic refetch plus a "session changed" notice; a 422
 * block is surfaced inline and leaves local state untouched.
 */

import {
  ApiClient,
  ApiError,
  BlockedStep,
  Delta,
  FinalizeBlocker,
  GenericManifest,
  Report,
  SessionState,
  isBlockedDetail,
} from './api.js';

export interface Notice {
  kind: 'info' | 'error' | 'blocked';
  message: string;
  chain?: BlockedStep[];
}

/** Result of a what-if preview, kept until applied or discarded. */
export interface WhatIf {
  delta: Delta;
  blocked: boolean;
  reason?: string;
  sideEffects?: string[];
  report?: Report;
  /** Revision the preview was computed against (never applied). */
  revision: number;
}

export interface WorkbenchState {
  sessionId: string;
  genericId: string;
  mode: 'notify' | 'enforce';
  revision: number;
  manifest: GenericManifest;
  included: string[];
  selections: Record<string, string>;
  bindings: Record<string, string>;
  finalized: boolean;
  report: Report;
  /** Rendered draft/final text, or null when rendering is refused. */
  previewText: string | null;
  renderFault: string | null;
  pendingWhatIf: WhatIf | null;
  notices: Notice[];
}

export interface PromoteOutcome {
  submitted: boolean;
  versionId?: string;
  reason?: string;
}

export class Workbench {
  private state_: WorkbenchState | null = null;

  constructor(private readonly client: ApiClient) {}

  get state(): WorkbenchState {
    if (this.state_ === null) throw new Error('no open session');
    return this.state_;
  }

  async open(genericId: string, mode: 'notify' | 'enforce' = 'notify'): Promise<WorkbenchState> {
    const manifest = await this.client.getGeneric(genericId);
    const session = await this.client.openSession(genericId, mode);
    this.state_ = {
      sessionId: session.sessionId,
      genericId,
      mode: session.mode,
      revision: session.revision,
      manifest,
      included: session.included,
      selections: session.selections,
      bindings: session.bindings,
      finalized: session.finalized,
      report: session.report,
      previewText: null,
      renderFault: null,
      pendingWhatIf: null,
      notices: [],
    };
    await this.refreshRender();
    return this.state;
  }

  // ---- edits --------------------------------------------------------

  /** Include the unit if excluded, exclude it if included (root stays). */
  toggleUnit(unitId: string): Promise<WorkbenchState> {
    const included = this.state.included.includes(unitId);
    return this.applyDelta(
      included ? { op: 'exclude', unit: unitId } : { op: 'include', unit: unitId },
    );
  }

  pickVersion(unitId: string, versionId: string): Promise<WorkbenchState> {
    return this.applyDelta({ op: 'select', unit: unitId, version: versionId });
  }

  bindParam(name: string, value: string): Promise<WorkbenchState> {
    return this.applyDelta({ op: 'bind', param: name, value });
  }

  unbindParam(name: string): Promise<WorkbenchState> {
    return this.applyDelta({ op: 'unbind', param: name });
  }

  async applyDelta(delta: Delta): Promise<WorkbenchState> {
    const state = this.state;
    try {
      const outcome = await this.client.applyEdit(state.sessionId, delta, state.revision);
      // The report and revision come straight from the edit response;
      // inclusion/selection/binding views are refetched because enforce
      // mode and subtree exclusion can change units beyond the delta.
      await this.adoptSession();
      this.state.report = outcome.report;
      this.state.revision = outcome.revision;
      await this.refreshRender();
    } catch (error) {
      await this.absorbEditFailure(error);
    }
    return this.state;
  }

  private async absorbEditFailure(error: unknown): Promise<void> {
    if (!(error instanceof ApiError)) throw error;
    if (error.status === 409) {
      // Another writer advanced the session: refresh, then tell the user.
      await this.adoptSession();
      await this.refreshRender();
      this.state.notices.push({ kind: 'info', message: 'session changed — refreshed' });
    } else if (error.status === 422 && isBlockedDetail(error.detail)) {
      this.state.notices.push({
        kind: 'blocked',
        message: error.detail.reason,
        chain: error.detail.chain,
      });
      // blocked edits change nothing server-side; keep state as-is
    } else if (error.status === 422) {
      this.state.notices.push({ kind: 'error', message: String(error.detail) });
    } else {
      throw error;
    }
  }

  /** Re-pull the authoritative session view (tree, picks, bindings). */
  private async adoptSession(): Promise<void> {
    const session = await this.client.getSession(this.state.sessionId);
    const s = this.state;
    s.revision = session.revision;
    s.mode = session.mode;
    s.included = session.included;
    s.selections = session.selections;
    s.bindings = session.bindings;
    s.finalized = session.finalized;
    s.report = session.report;
  }

  /** Public refresh used after a 409 notice or on demand. */
  async refresh(): Promise<WorkbenchState> {
    await this.adoptSession();
    await this.refreshRender();
    return this.state;
  }

  private async refreshRender(): Promise<void> {
    try {
      const rendered = await this.client.render(this.state.sessionId);
      this.state.previewText = rendered.text;
      this.state.renderFault = null;
    } catch (error) {
      if (error instanceof ApiError && error.status === 422) {
        this.state.previewText = null;
        this.state.renderFault = String(error.detail);
        return;
      }
      throw error;
    }
  }

  // ---- what-if ------------------------------------------------------

  async whatIf(delta: Delta): Promise<WhatIf> {
    const state = this.state;
    const outcome = await this.client.previewEdit(state.sessionId, delta);
    const pending: WhatIf = outcome.blocked
      ? { delta, blocked: true, reason: outcome.reason, revision: outcome.revision }
      : {
          delta,
          blocked: false,
          sideEffects: outcome.sideEffects,
          report: outcome.report,
          revision: outcome.revision,
        };
    state.pendingWhatIf = pending;
    return pending;
  }

  /** Promote the pending what-if into a real edit. */
  async applyWhatIf(): Promise<WorkbenchState> {
    const pending = this.state.pendingWhatIf;
    if (pending === null) throw new Error('no pending what-if');
    if (pending.blocked) throw new Error('cannot apply a blocked what-if');
    this.state.pendingWhatIf = null;
    return this.applyDelta(pending.delta);
  }

  discardWhatIf(): void {
    this.state.pendingWhatIf = null;
  }

  // ---- mode / finalize / promote ------------------------------------

  /**
   * Switch Notify <-> Enforce. The service fixes the mode at session
   * creation, so switching opens a fresh session and replays the
   * current inclusion, selections, and bindings through /edits.
   */
  async setMode(mode: 'notify' | 'enforce'): Promise<WorkbenchState> {
    const old = this.state;
    if (old.mode === mode) return old;
    const session = await this.client.openSession(old.genericId, mode);
    const replay: Delta[] = [];
    for (const unit of this.preorderIncluded(old)) {
      if (unit !== old.manifest.units[0]!.id) replay.push({ op: 'include', unit });
    }
    for (const [unit, version] of Object.entries(old.selections)) {
      replay.push({ op: 'select', unit, version });
    }
    for (const [param, value] of Object.entries(old.bindings)) {
      replay.push({ op: 'bind', param, value });
    }
    let revision = session.revision;
    for (const delta of replay) {
      try {
        const outcome = await this.client.applyEdit(session.sessionId, delta, revision);
        revision = outcome.revision;
      } catch (error) {
        if (error instanceof ApiError && error.status === 422) continue; // already in, or blocked
        throw error;
      }
    }
    this.state_ = { ...old, sessionId: session.sessionId, mode, pendingWhatIf: null };
    await this.adoptSession();
    await this.refreshRender();
    this.state.notices.push({ kind: 'info', message: `mode switched to ${mode}` });
    return this.state;
  }

  private preorderIncluded(state: WorkbenchState): string[] {
    // manifest.units is already in document preorder
    return state.manifest.units.map((u) => u.id).filter((id) => state.included.includes(id));
  }

  async finalizeFlow(): Promise<{ finalized: boolean; blockers: FinalizeBlocker[] }> {
    const outcome = await this.client.finalize(this.state.sessionId);
    if (outcome.finalized) {
      this.state.finalized = true;
      await this.refreshRender();
      return { finalized: true, blockers: [] };
    }
    return { finalized: false, blockers: outcome.blockers };
  }

  /**
   * Promote edited text as a new generic version. The submit is
   * disabled client-side until a rationale is given; the service
   * enforces the same rule with a 422.
   */
  async promoteFlow(unitId: string, template: string, rationale: string): Promise<PromoteOutcome> {
    if (rationale.trim() === '') {
      return { submitted: false, reason: 'a rationale is required before submitting' };
    }
    try {
      const result = await this.client.promote(this.state.sessionId, unitId, template, rationale);
      await this.adoptSession();
      this.state.report = result.report;
      this.state.revision = result.revision;
      await this.refreshRender();
      return { submitted: true, versionId: result.versionId };
    } catch (error) {
      if (error instanceof ApiError && error.status === 422) {
        return { submitted: false, reason: String(error.detail) };
      }
      throw error;
    }
  }
}

export type { SessionState };
