import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";
import {
  isComplete,
  loadReviewBoard,
  markTheme,
  renderReviewBoard,
  submitDecision,
  toDecision,
} from "../src/review.js";
import { makeFetch, serviceRoutes } from "./fixtures.js";

async function boardWithRequests(
  postHandlers: Parameters<typeof makeFetch>[1] = {},
) {
  const { fetchImpl, requests } = makeFetch(serviceRoutes(), postHandlers);
  const api = new ApiClient("http://svc", fetchImpl);
  const board = await loadReviewBoard(api, "run-1", "challenge", "analyst");
  return { api, board, requests };
}

describe("review board", () => {
  it("shows 12 baseline rows, 3 variant columns, and 4 weak flags", async () => {
    const { board } = await boardWithRequests();
    const html = renderReviewBoard(board);
    expect(html.match(/<tr data-theme-id=/g)).toHaveLength(12);
    expect(html).toContain("<th>variant 0</th>");
    expect(html).toContain("<th>variant 2</th>");
    expect(html).not.toContain("<th>variant 3</th>");
    expect(html.match(/class="weak-flag"/g)).toHaveLength(4);
  });

  it("enables submit after 11 keep + 1 replace and posts the decision once", async () => {
    const { api, board, requests } = await boardWithRequests({
      "http://svc/runs/run-1/decisions": () => ({
        status: 200,
        body: { digest: "decision-digest", dimension: "challenge" },
      }),
    });
    for (let i = 2; i <= 12; i += 1) {
      markTheme(board, `challenge:baseline:${i}`, { action: "keep" });
    }
    markTheme(board, "challenge:baseline:1", {
      action: "replace",
      replacementVariant: 0,
      replacementThemeId: "challenge:variant:1",
    });
    expect(isComplete(board)).toBe(true);
    expect(renderReviewBoard(board)).not.toContain("disabled");

    const digest = await submitDecision(api, board);
    expect(digest).toBe("decision-digest");
    const posts = requests.filter((r) => r.method === "POST");
    expect(posts).toHaveLength(1);
    const body = posts[0].body as {
      dimension: string;
      actions: { action: string; baseline_theme_id: string }[];
      decided_by: string;
    };
    expect(body.dimension).toBe("challenge");
    expect(body.actions).toHaveLength(12);
    expect(body.actions.filter((a) => a.action === "keep")).toHaveLength(11);
    expect(body.actions.filter((a) => a.action === "replace")).toHaveLength(1);
    expect(body.decided_by).toBe("analyst");
    expect(renderReviewBoard(board)).toContain("decision recorded: decision-digest");
  });

  it("keeps submit disabled with an indicator while a theme is unmarked", async () => {
    const { api, board, requests } = await boardWithRequests();
    for (let i = 1; i <= 11; i += 1) {
      markTheme(board, `challenge:baseline:${i}`, { action: "keep" });
    }
    const html = renderReviewBoard(board);
    expect(html).toContain('<button class="submit-decision" disabled');
    expect(html).toContain("1 theme(s) still unmarked");

    await expect(submitDecision(api, board)).rejects.toThrow(
      /unmarked themes: challenge:baseline:12/,
    );
    expect(requests.filter((r) => r.method === "POST")).toHaveLength(0);
  });

  it("rejects marks that reference unknown themes or incomplete replacements", async () => {
    const { board } = await boardWithRequests();
    expect(() => markTheme(board, "challenge:baseline:99", { action: "keep" }))
      .toThrow(/unknown baseline theme/);
    expect(() =>
      markTheme(board, "challenge:baseline:1", { action: "replace" }),
    ).toThrow(/replace requires/);
    expect(() =>
      markTheme(board, "challenge:baseline:1", {
        action: "replace",
        replacementVariant: 1,
        replacementThemeId: "challenge:variant:99",
      }),
    ).toThrow(/has no theme/);
  });

  it("orders decision actions by baseline theme and carries replacement detail", async () => {
    const { board } = await boardWithRequests();
    for (let i = 1; i <= 12; i += 1) {
      markTheme(board, `challenge:baseline:${i}`, { action: i === 3 ? "drop" : "keep" });
    }
    markTheme(board, "challenge:baseline:2", {
      action: "replace",
      replacementVariant: 2,
      replacementThemeId: "challenge:variant:5",
    });
    const decision = toDecision(board);
    expect(decision.actions.map((a) => a.baseline_theme_id)).toEqual(
      board.baseline.themes.map((t) => t.theme_id),
    );
    expect(decision.actions[1]).toEqual({
      action: "replace",
      baseline_theme_id: "challenge:baseline:2",
      replacement_variant: 2,
      replacement_theme_id: "challenge:variant:5",
    });
    expect(decision.actions[2].action).toBe("drop");
  });

  it("surfaces service validation failures as ApiError", async () => {
    const { api, board } = await boardWithRequests({
      "http://svc/runs/run-1/decisions": () => ({
        status: 422,
        body: { detail: { problems: ["baseline theme x has no action"] } },
      }),
    });
    for (let i = 1; i <= 12; i += 1) {
      markTheme(board, `challenge:baseline:${i}`, { action: "keep" });
    }
    await expect(submitDecision(api, board)).rejects.toThrowError(ApiError);
    expect(board.submittedDigest).toBeNull();
  });
});
