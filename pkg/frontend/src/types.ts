/**
 * Response document shapes for the analysis service.
 * Mirrors the JSON Schemas the service publishes; fields the client
 * does not consume are left open via index signatures.
 */

export interface DatasetSummary {
  persons: number;
  items: number;
  item_names: string[];
  item_types: string[];
  group_present: boolean;
  criterion_present: boolean;
  matching_present: boolean;
}

export interface ClassicalItem {
  item: string;
  difficulty: number | null;
  rit: number | null;
  rir: number | null;
  uli: number | null;
  n_valid: number;
}

export interface ClassicalDocument {
  items: ClassicalItem[];
  alpha: number | null;
  criterion_validity: { r: number; p_value: number; n: number } | null;
}

export interface RegressionDocument {
  item: string;
  model: string;
  coef: Record<string, number>;
  loglik: number;
  converged: boolean;
  curve: { theta: number[]; p: number[] };
  config: Record<string, unknown>;
}

export interface IrtDocument {
  model: { items: unknown[]; loglik: number; em_cycles: number; converged: boolean };
  summary: { loglik: number; em_cycles: number; converged: boolean; diagnostics: string[] };
  config: { families: string[]; max_cycles: number; n_quad: number };
}

export interface DifResult {
  item: string;
  beta: number[] | null;
  lrt_stat: number | null;
  df: number | null;
  p_value: number | null;
  dif_type: string;
  error: string | null;
}

export interface DifDocument {
  results: DifResult[];
  counts: Record<string, number>;
  alpha: number;
  matching: string;
  bh_flags: boolean[] | null;
  config: Record<string, unknown>;
}

export interface CatStep {
  item: number;
  item_name: string;
  response: number;
  theta: number;
  se: number;
}

export interface CatDocument {
  true_theta: number;
  seed: number;
  config: { min_sem: number; max_items: number; [key: string]: unknown };
  trajectory: {
    steps: CatStep[];
    final_theta: number;
    final_se: number | null;
    termination: string;
  };
  /** Per-step [lower, upper] interval; kept as plain arrays for JSON ease. */
  ci: number[][];
}

export interface ModuleEntry {
  id: string;
  title: string;
  category: string;
  declared_category: string;
  available: boolean;
  diagnostic: string | null;
}

export interface ModulesList {
  categories: { name: string; modules: ModuleEntry[] }[];
  diagnostics: string[];
}

/** One output panel of a module document; `kind` selects the renderer. */
export interface ModulePanel {
  kind: string;
  title?: string;
  body?: string;
  message?: string;
  columns?: string[];
  rows?: (string | number | null)[][];
  x?: (number | null)[];
  series?: { name: string; y: (number | null)[] }[];
  [key: string]: unknown;
}

export interface ModuleDocument {
  module?: string;
  panels: ModulePanel[];
}

export interface FormControl {
  control: "slider" | "select" | "number" | "checkbox" | "text";
  name: string;
  label?: string;
  min?: number;
  max?: number;
  step?: number;
  default?: unknown;
  options?: { value: string; label: string }[];
}

/** A module's declarative UI: either an input form or static output panels. */
export interface ModuleUi {
  module?: string;
  form?: FormControl[];
  panels?: ModulePanel[];
}
