/** Persona studio: pick one theme pair per dimension (manually or with a
 * seeded randomizer), generate persona cards, and overlay each card with its
 * trace report so every element is visibly grounded — or visibly not. Cards
 * persist across regenerations for side-by-side comparison, and a full
 * reload rebuilds the same gallery from service reads alone. */

import type { ApiClient } from "./api.js";
import { escapeHtml } from "./render.js";
import type {
  Persona,
  ThemeBook,
  TraceReport,
} from "./types.js";

export interface PairSelection {
  needPair: [string, string];
  challengePair: [string, string];
  seed: number;
}

export interface PersonaCard {
  persona: Persona;
  trace: TraceReport | null;
  showRaw: boolean;
}

export interface PersonaStudioState {
  runId: string;
  finalNeeds: ThemeBook;
  finalChallenges: ThemeBook;
  selection: PairSelection;
  cards: PersonaCard[];
  decidedBy: string;
}

/** Deterministic PRNG so "randomize with seed N" is reproducible. */
export function seededRandom(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function randomPair(ids: string[], next: () => number): [string, string] {
  const first = ids[Math.floor(next() * ids.length)];
  const second = ids[Math.floor(next() * ids.length)];
  return [first, second];
}

export async function loadPersonaStudio(
  api: ApiClient,
  runId: string,
  decidedBy: string,
): Promise<PersonaStudioState> {
  const [needBooks, challengeBooks, personas, traces] = await Promise.all([
    api.themeBooks(runId, "need", "final"),
    api.themeBooks(runId, "challenge", "final"),
    api.personas(runId),
    api.traces(runId),
  ]);
  const tracesByPersona = new Map(traces.map((t) => [t.persona_ref, t]));
  const state: PersonaStudioState = {
    runId,
    finalNeeds: needBooks[0],
    finalChallenges: challengeBooks[0],
    selection: {
      needPair: ["", ""],
      challengePair: ["", ""],
      seed: 0,
    },
    cards: personas.map((persona) => ({
      persona,
      trace: tracesByPersona.get(persona.digest) ?? null,
      showRaw: false,
    })),
    decidedBy,
  };
  randomize(state, 0);
  return state;
}

export function randomize(state: PersonaStudioState, seed: number): PairSelection {
  const next = seededRandom(seed);
  state.selection = {
    needPair: randomPair(state.finalNeeds.themes.map((t) => t.theme_id), next),
    challengePair: randomPair(
      state.finalChallenges.themes.map((t) => t.theme_id),
      next,
    ),
    seed,
  };
  return state.selection;
}

export function pickManually(
  state: PersonaStudioState,
  needPair: [string, string],
  challengePair: [string, string],
): PairSelection {
  const needIds = new Set(state.finalNeeds.themes.map((t) => t.theme_id));
  const challengeIds = new Set(state.finalChallenges.themes.map((t) => t.theme_id));
  for (const id of needPair) {
    if (!needIds.has(id)) throw new Error(`unknown need theme: ${id}`);
  }
  for (const id of challengePair) {
    if (!challengeIds.has(id)) throw new Error(`unknown challenge theme: ${id}`);
  }
  state.selection = { needPair, challengePair, seed: state.selection.seed };
  return state.selection;
}

/** One POST per generate click; earlier cards stay for comparison. */
export async function generatePersona(
  api: ApiClient,
  state: PersonaStudioState,
): Promise<PersonaCard> {
  const persona = await api.generatePersona(state.runId, {
    need_pair: state.selection.needPair,
    challenge_pair: state.selection.challengePair,
    seed: state.selection.seed,
    decided_by: state.decidedBy,
  });
  const card: PersonaCard = { persona, trace: null, showRaw: false };
  state.cards.push(card);
  return card;
}

export async function tracePersona(
  api: ApiClient,
  state: PersonaStudioState,
  card: PersonaCard,
): Promise<TraceReport> {
  const trace = await api.requestTrace(
    state.runId,
    card.persona.digest,
    state.decidedBy,
  );
  card.trace = trace;
  return trace;
}

function traceClass(card: PersonaCard, kind: string, text: string): string {
  if (!card.trace) return "untraced";
  if (card.trace.unmatched_elements.some(([k, t]) => k === kind && t === text)) {
    return "unmatched";
  }
  if (card.trace.element_links.some((l) => l.kind === kind && l.text === text)) {
    return "grounded";
  }
  return "untraced";
}

function renderElement(card: PersonaCard, kind: string, text: string): string {
  const cls = traceClass(card, kind, text);
  return `<li class="${cls}" data-kind="${kind}">${escapeHtml(text)}` +
    (cls === "unmatched"
      ? ` <span class="flag" title="no source code supports this">untraced</span>`
      : "") +
    `</li>`;
}

export function renderPersonaCard(card: PersonaCard): string {
  const p = card.persona;
  const selection = p.source_selection;
  const facts = [
    ["age", p.stated_age !== null ? `${p.stated_age} (${p.age_bracket})` : p.age_bracket],
    ["country", p.country],
    ["IT skills", p.it_skills],
    ["attitude to digital tools", p.attitude_digital],
  ]
    .map(([label, value]) => `<dt>${label}</dt><dd>${escapeHtml(String(value))}</dd>`)
    .join("");
  const quoteSim = card.trace
    ? `<span class="quote-similarity">quote grounding ${card.trace.quote_match.similarity.toFixed(2)}</span>`
    : "";
  const raw = card.showRaw
    ? `<pre class="raw-response">${escapeHtml(p.raw_response)}</pre>`
    : "";
  return (
    `<article class="persona-card" data-digest="${escapeHtml(p.digest)}">` +
    `<h3>${escapeHtml(p.name)}</h3>` +
    `<p class="tuple">needs ${selection.need_pair.join(" + ")} / ` +
    `challenges ${selection.challenge_pair.join(" + ")} (seed ${selection.seed})</p>` +
    `<dl>${facts}</dl>` +
    `<p class="goal ${traceClass(card, "goal", p.goal)}">${escapeHtml(p.goal)}</p>` +
    `<p class="background">${escapeHtml(p.background)}</p>` +
    `<ul class="needs">${p.needs.map((n) => renderElement(card, "need", n)).join("")}</ul>` +
    `<ul class="challenges">${p.challenges
      .map((c) => renderElement(card, "challenge", c))
      .join("")}</ul>` +
    `<blockquote>${escapeHtml(p.quote)}</blockquote>${quoteSim}` +
    `<button class="toggle-raw">${card.showRaw ? "hide" : "show"} raw response</button>` +
    raw +
    `</article>`
  );
}

export function renderPersonaStudio(state: PersonaStudioState): string {
  const options = (book: ThemeBook): string =>
    book.themes
      .map(
        (t) =>
          `<option value="${escapeHtml(t.theme_id)}">${escapeHtml(t.name)}</option>`,
      )
      .join("");
  const selection = state.selection;
  return (
    `<section class="persona-studio">` +
    `<h2>persona studio</h2>` +
    `<div class="tuple-picker" data-seed="${selection.seed}">` +
    `<p>needs: ${selection.needPair.join(" + ")} | ` +
    `challenges: ${selection.challengePair.join(" + ")} | seed ${selection.seed}</p>` +
    `<select class="need-picker" multiple>${options(state.finalNeeds)}</select>` +
    `<select class="challenge-picker" multiple>${options(state.finalChallenges)}</select>` +
    `<button class="randomize">randomize</button>` +
    `<button class="generate">generate persona</button>` +
    `</div>` +
    `<div class="cards">${state.cards.map(renderPersonaCard).join("\n")}</div>` +
    `</section>`
  );
}
