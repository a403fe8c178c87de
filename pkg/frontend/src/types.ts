/** JSON shapes returned by the review service. */

export type DimensionName = "challenge" | "need";

export interface Theme {
  theme_id: string;
  dimension: DimensionName;
  name: string;
  description: string;
  member_code_ids: string[];
}

export interface ExpandedCodeRow {
  code_id: string;
  name: string;
  description: string;
  quote: string;
}

export interface ExpandedTheme {
  theme_id: string;
  dimension: DimensionName;
  name: string;
  description: string;
  rows: ExpandedCodeRow[];
}

export interface ThemeBook {
  dimension: DimensionName;
  stage: string;
  themes: Theme[];
  expansions?: ExpandedTheme[] | null;
  digest: string;
}

export interface ConsistencyRow {
  theme_id: string;
  code_count: number;
  matches_per_variant: (string | null)[];
  consistency_score: number;
  weak_flag: boolean;
}

export interface ConsistencyReport {
  dimension: DimensionName;
  k: number;
  rows: ConsistencyRow[];
  replacement_candidates: {
    name: string;
    variant: number;
    theme_id: string;
    seen_in_variants: number[];
  }[];
  digest: string;
}

export type DecisionVerb = "keep" | "replace" | "drop";

export interface DecisionAction {
  action: DecisionVerb;
  baseline_theme_id: string;
  replacement_variant?: number | null;
  replacement_theme_id?: string | null;
}

export interface ReviewDecisionBody {
  dimension: DimensionName;
  actions: DecisionAction[];
  analyst_note: string;
  decided_by: string;
}

export interface TupleSelection {
  need_pair: [string, string];
  challenge_pair: [string, string];
  seed: number;
  mode: string;
}

export interface Persona {
  name: string;
  age_bracket: string;
  stated_age: number | null;
  country: string;
  goal: string;
  background: string;
  needs: string[];
  challenges: string[];
  it_skills: string;
  attitude_digital: string;
  quote: string;
  source_selection: TupleSelection;
  raw_response: string;
  digest: string;
}

export interface QuoteMatch {
  code_id: string;
  theme_id: string;
  similarity: number;
  matched_span: string;
}

export interface ElementLink {
  kind: string;
  text: string;
  candidates: [string, number][];
}

export interface TraceReport {
  persona_ref: string;
  quote_match: QuoteMatch;
  element_links: ElementLink[];
  unmatched_elements: [string, string][];
  link_threshold: number;
  digest: string;
}

export interface ManifestEntry {
  sequence: number;
  purpose_tag: string;
  [key: string]: unknown;
}
