/** Page assembly: pick a run, then render the review board for both
 * dimensions plus the persona studio. All state comes from service reads, so
 * a full reload reproduces the visible page. */

import { ApiClient } from "./api.js";
import { loadPersonaStudio, renderPersonaStudio } from "./personas.js";
import { loadReviewBoard, renderReviewBoard } from "./review.js";

export interface PageState {
  runId: string;
  html: string;
}

export async function renderPage(
  api: ApiClient,
  runId: string,
  decidedBy: string,
): Promise<PageState> {
  const [challengeBoard, needBoard, studio] = await Promise.all([
    loadReviewBoard(api, runId, "challenge", decidedBy),
    loadReviewBoard(api, runId, "need", decidedBy),
    loadPersonaStudio(api, runId, decidedBy),
  ]);
  const html =
    `<main data-run-id="${runId}">` +
    renderReviewBoard(challengeBoard) +
    renderReviewBoard(needBoard) +
    renderPersonaStudio(studio) +
    `</main>`;
  return { runId, html };
}

export async function mount(
  root: { innerHTML: string },
  baseUrl: string,
  decidedBy: string,
): Promise<void> {
  const api = new ApiClient(baseUrl);
  const runs = await api.listRuns();
  if (runs.length === 0) {
    root.innerHTML = `<main><p>no runs found</p></main>`;
    return;
  }
  const page = await renderPage(api, runs[runs.length - 1], decidedBy);
  root.innerHTML = page.html;
}
