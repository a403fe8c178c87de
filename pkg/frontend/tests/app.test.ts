import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { mount, renderPage } from "../src/app.js";
import { makeFetch, serviceRoutes } from "./fixtures.js";

describe("page assembly", () => {
  it("renders both review boards and the persona studio from reads alone", async () => {
    const { fetchImpl, requests } = makeFetch(serviceRoutes());
    const api = new ApiClient("http://svc", fetchImpl);
    const page = await renderPage(api, "run-1", "analyst");
    expect(page.html).toContain('data-dimension="challenge"');
    expect(page.html).toContain('data-dimension="need"');
    expect(page.html).toContain('class="persona-studio"');
    expect(requests.every((r) => r.method === "GET")).toBe(true);
  });

  it("full reload reproduces the same page from the service", async () => {
    const { fetchImpl } = makeFetch(serviceRoutes());
    const api = new ApiClient("http://svc", fetchImpl);
    const first = await renderPage(api, "run-1", "analyst");
    const reloaded = await renderPage(api, "run-1", "analyst");
    expect(reloaded.html).toBe(first.html);
  });

  it("mount picks the latest run and fills the root element", async () => {
    const { fetchImpl } = makeFetch(serviceRoutes());
    const globalWithFetch = globalThis as { fetch: typeof fetch };
    const original = globalWithFetch.fetch;
    globalWithFetch.fetch = fetchImpl as typeof fetch;
    try {
      const root = { innerHTML: "" };
      await mount(root, "http://svc", "analyst");
      expect(root.innerHTML).toContain('data-run-id="run-1"');
    } finally {
      globalWithFetch.fetch = original;
    }
  });
});
