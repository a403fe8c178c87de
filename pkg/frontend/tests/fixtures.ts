import type {
  ConsistencyReport,
  ConsistencyRow,
  DimensionName,
  Persona,
  Theme,
  ThemeBook,
  TraceReport,
} from "../src/types.js";
import type { FetchLike } from "../src/api.js";

export function makeTheme(
  dimension: DimensionName,
  stage: string,
  index: number,
  codeCount: number,
  name?: string,
): Theme {
  return {
    theme_id: `${dimension}:${stage}:${index}`,
    dimension,
    name: name ?? `${dimension} theme ${index}`,
    description: `description ${index}`,
    member_code_ids: Array.from(
      { length: codeCount },
      (_, i) => `${dimension}:c${index}-${i}`,
    ),
  };
}

/** 12 baseline themes, the first four carrying a single code. */
export function makeBaseline(dimension: DimensionName): ThemeBook {
  return {
    dimension,
    stage: "baseline",
    themes: Array.from({ length: 12 }, (_, i) =>
      makeTheme(dimension, "baseline", i + 1, i < 4 ? 1 : 3),
    ),
    digest: `${dimension}-baseline-digest`,
  };
}

export function makeVariants(dimension: DimensionName): ThemeBook[] {
  return [0, 1, 2].map((v) => ({
    dimension,
    stage: "variant",
    themes: Array.from({ length: 12 }, (_, i) =>
      makeTheme(dimension, "variant", i + 1, 2, `${dimension} regrouping ${v}-${i + 1}`),
    ),
    digest: `${dimension}-variant-${v}`,
  }));
}

/** The four one-code themes never recur; the rest recur in all variants. */
export function makeConsistency(dimension: DimensionName): ConsistencyReport {
  const rows: ConsistencyRow[] = Array.from({ length: 12 }, (_, i) => {
    const weak = i < 4;
    return {
      theme_id: `${dimension}:baseline:${i + 1}`,
      code_count: weak ? 1 : 3,
      matches_per_variant: weak
        ? [null, null, null]
        : [0, 1, 2].map((v) => `${dimension}:variant:${i + 1}@${v}`),
      consistency_score: weak ? 0 : 1,
      weak_flag: weak,
    };
  });
  return {
    dimension,
    k: 3,
    rows,
    replacement_candidates: [
      {
        name: `${dimension} regrouping 0-1`,
        variant: 0,
        theme_id: `${dimension}:variant:1`,
        seen_in_variants: [0, 1],
      },
    ],
    digest: `${dimension}-consistency`,
  };
}

export function makeFinal(dimension: DimensionName): ThemeBook {
  return {
    dimension,
    stage: "final",
    themes: Array.from({ length: 12 }, (_, i) =>
      makeTheme(dimension, "final", i + 1, 2),
    ),
    digest: `${dimension}-final`,
  };
}

export function makePersona(digest = "persona-1"): Persona {
  return {
    name: "Katarina",
    age_bracket: "middle",
    stated_age: null,
    country: "Poland",
    goal: "Improve animal health on her farm",
    background: "Runs a family dairy farm.",
    needs: ["Reliable information", "Fabricated synergy dashboards"],
    challenges: ["Language barriers"],
    it_skills: "medium",
    attitude_digital: "high",
    quote: "Digital sources can help optimize work on the farm.",
    source_selection: {
      need_pair: ["need:final:1", "need:final:2"],
      challenge_pair: ["challenge:final:1", "challenge:final:2"],
      seed: 3,
      mode: "manual",
    },
    raw_response: "Name: Katarina\nGoal: ...",
    digest,
  };
}

export function makeTrace(personaDigest = "persona-1"): TraceReport {
  return {
    persona_ref: personaDigest,
    quote_match: {
      code_id: "need:c1-0",
      theme_id: "need:final:1",
      similarity: 0.93,
      matched_span: "digital sources can help optimize work",
    },
    element_links: [
      { kind: "goal", text: "Improve animal health on her farm", candidates: [["need:c1-0", 0.8]] },
      { kind: "need", text: "Reliable information", candidates: [["need:c2-1", 0.7]] },
      { kind: "challenge", text: "Language barriers", candidates: [["challenge:c1-0", 0.9]] },
    ],
    unmatched_elements: [["need", "Fabricated synergy dashboards"]],
    link_threshold: 0.5,
    digest: "trace-1",
  };
}

export interface RecordedRequest {
  url: string;
  method: string;
  body: unknown;
}

/** In-memory service double: canned GET routes plus scripted POST handlers. */
export function makeFetch(
  routes: Record<string, unknown>,
  postHandlers: Record<string, (body: unknown) => { status: number; body: unknown }> = {},
): { fetchImpl: FetchLike; requests: RecordedRequest[] } {
  const requests: RecordedRequest[] = [];
  const fetchImpl: FetchLike = async (url, init) => {
    const method = init?.method ?? "GET";
    const body = init?.body ? JSON.parse(String(init.body)) : null;
    requests.push({ url, method, body });
    if (method === "POST") {
      const handler = postHandlers[url];
      if (!handler) {
        return new Response(JSON.stringify({ detail: "not found" }), { status: 404 });
      }
      const result = handler(body);
      return new Response(JSON.stringify(result.body), { status: result.status });
    }
    if (!(url in routes)) {
      return new Response(JSON.stringify({ detail: "not found" }), { status: 404 });
    }
    return new Response(JSON.stringify(routes[url]), { status: 200 });
  };
  return { fetchImpl, requests };
}

export function serviceRoutes(runId = "run-1"): Record<string, unknown> {
  const base = `http://svc/runs/${runId}`;
  const persona = makePersona();
  return {
    "http://svc/runs": { runs: [runId] },
    [`${base}/themebooks/challenge/baseline`]: { books: [makeBaseline("challenge")] },
    [`${base}/themebooks/need/baseline`]: { books: [makeBaseline("need")] },
    [`${base}/themebooks/challenge/variant`]: { books: makeVariants("challenge") },
    [`${base}/themebooks/need/variant`]: { books: makeVariants("need") },
    [`${base}/themebooks/challenge/final`]: { books: [makeFinal("challenge")] },
    [`${base}/themebooks/need/final`]: { books: [makeFinal("need")] },
    [`${base}/consistency/challenge`]: makeConsistency("challenge"),
    [`${base}/consistency/need`]: makeConsistency("need"),
    [`${base}/personas`]: { personas: [persona] },
    [`${base}/traces`]: { traces: [makeTrace(persona.digest)] },
    [`${base}/manifest`]: { entries: [] },
  };
}
