/** Theme review board: baseline themes in rows, the k variability-test
 * variants in columns, consistency scores and weak flags alongside. The
 * analyst marks keep/replace/drop per theme; submit stays disabled until
 * every baseline theme has a mark, and a valid submit is exactly one POST. */

import type { ApiClient } from "./api.js";
import { escapeHtml } from "./render.js";
import type {
  ConsistencyReport,
  DecisionAction,
  DecisionVerb,
  DimensionName,
  ReviewDecisionBody,
  ThemeBook,
} from "./types.js";

export interface ThemeMark {
  action: DecisionVerb;
  replacementVariant?: number;
  replacementThemeId?: string;
}

export interface ReviewBoardState {
  runId: string;
  dimension: DimensionName;
  baseline: ThemeBook;
  variants: ThemeBook[];
  consistency: ConsistencyReport;
  marks: Map<string, ThemeMark>;
  analystNote: string;
  decidedBy: string;
  submittedDigest: string | null;
}

/** Rebuilds the board purely from service reads (reload-safe). */
export async function loadReviewBoard(
  api: ApiClient,
  runId: string,
  dimension: DimensionName,
  decidedBy: string,
): Promise<ReviewBoardState> {
  const [baselines, variants, consistency] = await Promise.all([
    api.themeBooks(runId, dimension, "baseline"),
    api.themeBooks(runId, dimension, "variant"),
    api.consistency(runId, dimension),
  ]);
  return {
    runId,
    dimension,
    baseline: baselines[0],
    variants,
    consistency,
    marks: new Map(),
    analystNote: "",
    decidedBy,
    submittedDigest: null,
  };
}

export function markTheme(
  state: ReviewBoardState,
  themeId: string,
  mark: ThemeMark,
): void {
  if (!state.baseline.themes.some((t) => t.theme_id === themeId)) {
    throw new Error(`unknown baseline theme: ${themeId}`);
  }
  if (mark.action === "replace") {
    if (mark.replacementVariant === undefined || !mark.replacementThemeId) {
      throw new Error("replace requires a variant index and a variant theme id");
    }
    const variant = state.variants[mark.replacementVariant];
    if (!variant?.themes.some((t) => t.theme_id === mark.replacementThemeId)) {
      throw new Error(
        `variant ${mark.replacementVariant} has no theme ${mark.replacementThemeId}`,
      );
    }
  }
  state.marks.set(themeId, mark);
}

export function isComplete(state: ReviewBoardState): boolean {
  return state.baseline.themes.every((t) => state.marks.has(t.theme_id));
}

export function toDecision(state: ReviewBoardState): ReviewDecisionBody {
  if (!isComplete(state)) {
    const missing = state.baseline.themes
      .filter((t) => !state.marks.has(t.theme_id))
      .map((t) => t.theme_id);
    throw new Error(`decision incomplete; unmarked themes: ${missing.join(", ")}`);
  }
  const actions: DecisionAction[] = state.baseline.themes.map((theme) => {
    const mark = state.marks.get(theme.theme_id)!;
    return {
      action: mark.action,
      baseline_theme_id: theme.theme_id,
      replacement_variant: mark.replacementVariant ?? null,
      replacement_theme_id: mark.replacementThemeId ?? null,
    };
  });
  return {
    dimension: state.dimension,
    actions,
    analyst_note: state.analystNote,
    decided_by: state.decidedBy,
  };
}

export async function submitDecision(
  api: ApiClient,
  state: ReviewBoardState,
): Promise<string> {
  const decision = toDecision(state); // throws while incomplete: no POST happens
  const result = await api.submitDecision(state.runId, decision);
  state.submittedDigest = result.digest;
  return result.digest;
}

function markBadge(mark: ThemeMark | undefined): string {
  if (!mark) return `<span class="mark unmarked">unmarked</span>`;
  const detail =
    mark.action === "replace"
      ? ` &rarr; v${mark.replacementVariant}:${escapeHtml(mark.replacementThemeId ?? "")}`
      : "";
  return `<span class="mark ${mark.action}">${mark.action}${detail}</span>`;
}

export function renderReviewBoard(state: ReviewBoardState): string {
  const k = state.variants.length;
  const rowsById = new Map(state.consistency.rows.map((r) => [r.theme_id, r]));
  const header = [
    "<th>baseline theme</th>",
    "<th>codes</th>",
    ...Array.from({ length: k }, (_, i) => `<th>variant ${i}</th>`),
    "<th>consistency</th>",
    "<th>mark</th>",
  ].join("");

  const body = state.baseline.themes
    .map((theme) => {
      const row = rowsById.get(theme.theme_id);
      const matches = row?.matches_per_variant ?? Array(k).fill(null);
      const variantCells = matches
        .map((m) => `<td>${m === null ? "&mdash;" : escapeHtml(m)}</td>`)
        .join("");
      const weak = row?.weak_flag
        ? ` <span class="weak-flag" title="theme did not recur">weak</span>`
        : "";
      return (
        `<tr data-theme-id="${escapeHtml(theme.theme_id)}">` +
        `<td>${escapeHtml(theme.name)}${weak}</td>` +
        `<td>${row?.code_count ?? theme.member_code_ids.length}</td>` +
        variantCells +
        `<td>${row ? row.consistency_score.toFixed(2) : "?"}</td>` +
        `<td>${markBadge(state.marks.get(theme.theme_id))}</td>` +
        `</tr>`
      );
    })
    .join("\n");

  const complete = isComplete(state);
  const unmarked = state.baseline.themes.length - state.marks.size;
  const submitted = state.submittedDigest
    ? `<p class="submitted">decision recorded: ${escapeHtml(state.submittedDigest)}</p>`
    : "";
  return (
    `<section class="review-board" data-dimension="${state.dimension}">` +
    `<h2>${state.dimension} themes &mdash; baseline vs ${k} variability tests</h2>` +
    `<table><thead><tr>${header}</tr></thead><tbody>\n${body}\n</tbody></table>` +
    `<button class="submit-decision" ${complete ? "" : "disabled "}` +
    `data-unmarked="${unmarked}">submit decision</button>` +
    (complete ? "" : `<p class="gate-hint">${unmarked} theme(s) still unmarked</p>`) +
    submitted +
    `</section>`
  );
}
