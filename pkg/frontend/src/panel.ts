/**
 * Pure view-model builders for the workbench panels.
 *
 * Every function here is a projection: it rearranges service data for
 * display and never derives new constraint facts. The label numbering
 * is the same positional scheme the server uses when rendering (index
 * among included siblings, joined with dashes), kept purely as a tree
 * affordance — the authoritative labels are the ones in the rendered
 * text.
 */

import {
  FinalizeBlocker,
  Gap,
  GenericManifest,
  Report,
  UnitView,
  VersionView,
  Violation,
} from './api.js';

// ---- document tree --------------------------------------------------

export interface TreeNode {
  unitId: string;
  kind: string;
  heading: string;
  depth: number;
  included: boolean;
  /** Positional label like "14-6"; empty for the root and excluded units. */
  label: string;
  selectedVersion: string | null;
}

export function buildTree(
  manifest: GenericManifest,
  included: string[],
  selections: Record<string, string>,
): TreeNode[] {
  const byId = new Map<string, UnitView>(manifest.units.map((u) => [u.id, u]));
  const inSet = new Set(included);
  const nodes: TreeNode[] = [];
  const walk = (unit: UnitView, depth: number, prefix: number[]) => {
    const label = depth === 0 ? '' : prefix.join('-');
    nodes.push({
      unitId: unit.id,
      kind: unit.kind,
      heading: unit.heading,
      depth,
      included: inSet.has(unit.id),
      label: inSet.has(unit.id) ? label : '',
      selectedVersion: selections[unit.id] ?? null,
    });
    let ordinal = 0;
    for (const childId of unit.children) {
      const child = byId.get(childId);
      if (child === undefined) continue;
      if (inSet.has(childId)) ordinal += 1;
      walk(child, depth + 1, inSet.has(childId) ? [...prefix, ordinal] : prefix);
    }
  };
  const root = manifest.units[0];
  if (root !== undefined) walk(root, 0, []);
  return nodes;
}

// ---- constraint panel ----------------------------------------------

export interface PanelLine {
  type: 'violation' | 'gap';
  /** constraintId for violations, gap kind for gaps. */
  id: string;
  subjects: string[];
  message: string;
}

export interface ConstraintPanel {
  revision: number;
  clean: boolean;
  lines: PanelLine[];
}

export function buildConstraintPanel(report: Report, revision: number): ConstraintPanel {
  const lines: PanelLine[] = [
    ...report.violations.map(
      (v: Violation): PanelLine => ({
        type: 'violation',
        id: v.constraintId,
        subjects: v.involved,
        message: v.message,
      }),
    ),
    ...report.gaps.map(
      (g: Gap): PanelLine => ({
        type: 'gap',
        id: g.kind,
        subjects: [g.subject],
        message: g.message,
      }),
    ),
  ];
  return { revision, clean: lines.length === 0, lines };
}

// ---- version side panel ---------------------------------------------

export interface VersionEntry {
  versionId: string;
  rationale: string;
  provenance: string;
  selected: boolean;
  /** Ancestry chain, newest first, e.g. "s4-1:negotiated ← s4-1:model". */
  lineage: string;
}

export function buildVersionPanel(
  manifest: GenericManifest,
  unitId: string,
  selections: Record<string, string>,
): VersionEntry[] {
  const byId = new Map<string, VersionView>(manifest.versions.map((v) => [v.id, v]));
  return manifest.versions
    .filter((v) => v.unitId === unitId)
    .map((v) => {
      const chain = [v.id];
      let cursor: VersionView | undefined = v;
      while (cursor?.derivedFrom !== undefined) {
        chain.push(cursor.derivedFrom);
        cursor = byId.get(cursor.derivedFrom);
      }
      return {
        versionId: v.id,
        rationale: v.rationale,
        provenance: v.provenance,
        selected: selections[unitId] === v.id,
        lineage: chain.join(' ← '),
      };
    });
}

// ---- parameter form -------------------------------------------------

export interface ParamField {
  name: string;
  ptype: string;
  description: string;
  enumValues: string[];
  value: string | null;
  /** True when the report lists an unbound-parameter gap for this name. */
  unbound: boolean;
}

export function buildParamForm(
  manifest: GenericManifest,
  bindings: Record<string, string>,
  report: Report,
): ParamField[] {
  const unbound = new Set(
    report.gaps.filter((g) => g.kind === 'unbound-parameter').map((g) => g.subject),
  );
  return manifest.parameters.map((decl) => ({
    name: decl.name,
    ptype: decl.ptype,
    description: decl.description,
    enumValues: decl.enumValues ?? [],
    value: bindings[decl.name] ?? null,
    unbound: unbound.has(decl.name),
  }));
}

// ---- finalize checklist ---------------------------------------------

export interface ChecklistItem {
  kind: string;
  subject: string;
  message: string;
  /** Which panel resolves this blocker. */
  link: 'parameter-form' | 'document-tree' | 'constraint-panel';
}

export function buildFinalizeChecklist(blockers: FinalizeBlocker[]): ChecklistItem[] {
  return blockers.map((b) => ({
    kind: b.kind,
    subject: b.subject,
    message: b.message,
    link:
      b.kind === 'unbound-parameter'
        ? 'parameter-form'
        : b.kind === 'no-selection' || b.kind === 'exactly-one-empty' || b.kind === 'empty-leaf'
          ? 'document-tree'
          : 'constraint-panel',
  }));
}
