/**
 * Pure DOM builders: every view is a function of response documents and
 * parameter values only, so replaying recorded responses reproduces the
 * exact same rendered output. All data lands via textContent; numeric
 * cells keep the raw value in data-value and show a rounded form.
 */

import { curveChart } from "./chart";
import type {
  CatDocument,
  ClassicalDocument,
  DatasetSummary,
  DifDocument,
  DifResult,
  ModuleDocument,
  ModulePanel,
  ModuleUi,
  RegressionDocument,
} from "./types";

function h<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function fmt(value: unknown): string {
  if (value === null || value === undefined) return "";
  if (typeof value === "number") {
    if (!isFinite(value)) return String(value);
    return Number.isInteger(value) ? String(value) : value.toFixed(3);
  }
  return String(value);
}

export function dataTable(columns: string[], rows: (string | number | null)[][]): HTMLTableElement {
  const table = h("table", "data-table");
  const thead = h("thead");
  const headRow = h("tr");
  for (const col of columns) headRow.appendChild(h("th", undefined, col));
  thead.appendChild(headRow);
  const body = h("tbody");
  for (const row of rows) {
    const tr = h("tr");
    for (const cell of row) {
      const td = h("td", undefined, fmt(cell));
      if (cell !== null && cell !== undefined) td.dataset.value = String(cell);
      tr.appendChild(td);
    }
    body.appendChild(tr);
  }
  table.append(thead, body);
  return table;
}

export function renderSummary(summary: DatasetSummary): HTMLElement {
  const box = h("div", "dataset-summary");
  box.appendChild(h("p", "summary-line", `${summary.persons} persons, ${summary.items} items`));
  const flags: string[] = [];
  if (summary.group_present) flags.push("group");
  if (summary.criterion_present) flags.push("criterion");
  if (summary.matching_present) flags.push("external matching");
  if (flags.length > 0) box.appendChild(h("p", "summary-extras", `extra columns: ${flags.join(", ")}`));
  box.appendChild(
    dataTable(
      ["item", "type"],
      summary.item_names.map((name, i) => [name, summary.item_types[i] ?? ""]),
    ),
  );
  return box;
}

export function renderClassical(doc: ClassicalDocument): HTMLElement {
  const box = h("div", "classical-view");
  if (doc.alpha !== null) box.appendChild(h("p", "alpha", `Cronbach's alpha: ${fmt(doc.alpha)}`));
  if (doc.criterion_validity) {
    const v = doc.criterion_validity;
    box.appendChild(h("p", "validity", `criterion validity r = ${fmt(v.r)} (p = ${v.p_value.toExponential(3)}, n = ${v.n})`));
  }
  box.appendChild(
    dataTable(
      ["item", "difficulty", "rit", "rir", "uli", "n_valid"],
      doc.items.map((it) => [it.item, it.difficulty, it.rit, it.rir, it.uli, it.n_valid]),
    ),
  );
  return box;
}

export function renderRegression(doc: RegressionDocument): HTMLElement {
  const box = h("div", "regression-view");
  const coef = Object.entries(doc.coef)
    .map(([k, v]) => `${k} = ${fmt(v)}`)
    .join(", ");
  box.appendChild(h("p", "coef", `${doc.item} (${doc.model}): ${coef}`));
  box.appendChild(curveChart(doc.curve.theta, [{ name: doc.item, y: doc.curve.p }], { yLabel: "P" }));
  return box;
}

/**
 * Reference and focal response curves for one scanned item, recomputed
 * from the fitted coefficient vector the service returned:
 * reference P = sigmoid(b0 + b1 m), focal P = sigmoid((b0+b2) + (b1+b3) m).
 */
export function renderDifPair(result: DifResult): HTMLElement {
  const box = h("div", "dif-pair");
  if (!result.beta || result.beta.length !== 4) {
    box.appendChild(renderError(result.error ? `no fit for ${result.item}: ${result.error}` : `no fit for ${result.item}`));
    return box;
  }
  const [b0, b1, b2, b3] = result.beta as [number, number, number, number];
  const grid: number[] = [];
  for (let i = 0; i <= 60; i++) grid.push(-3 + i * 0.1);
  const sigmoid = (z: number) => 1 / (1 + Math.exp(-z));
  const ref = grid.map((m) => sigmoid(b0 + b1 * m));
  const focal = grid.map((m) => sigmoid(b0 + b2 + (b1 + b3) * m));
  box.appendChild(h("p", "pair-caption", `${result.item}: ${result.dif_type ?? ""}`));
  box.appendChild(
    curveChart(grid, [
      { name: "reference", y: ref },
      { name: "focal", y: focal },
    ]),
  );
  return box;
}

export function renderDif(doc: DifDocument): HTMLElement {
  const box = h("div", "dif-view");
  const counts = Object.entries(doc.counts)
    .map(([k, v]) => `${k}: ${v}`)
    .join(", ");
  box.appendChild(h("p", "dif-summary", `matching: ${doc.matching}, alpha: ${doc.alpha}, ${counts}`));
  box.appendChild(
    dataTable(
      ["item", "statistic", "df", "p_value", "classification"],
      doc.results.map((r) => [r.item, r.lrt_stat, r.df, r.p_value, r.error ? `error: ${r.error}` : r.dif_type]),
    ),
  );
  return box;
}

export function renderCat(doc: CatDocument): HTMLElement {
  const box = h("div", "cat-view");
  const t = doc.trajectory;
  const finalSe = t.final_se === null ? "n/a" : fmt(t.final_se);
  box.appendChild(
    h("p", "cat-summary", `${t.steps.length} items, final theta ${fmt(t.final_theta)} (se ${finalSe}), stopped: ${t.termination}`),
  );
  const x = t.steps.map((_, i) => i + 1);
  const band = doc.ci
    .filter((pair) => pair.length === 2)
    .map((pair) => [pair[0]!, pair[1]!] as [number, number]);
  box.appendChild(
    curveChart(x, [{ name: "estimate", y: t.steps.map((s) => s.theta) }], {
      band,
      refLine: doc.true_theta,
    }),
  );
  box.appendChild(
    dataTable(
      ["item", "response", "theta", "se"],
      t.steps.map((s) => [s.item_name, s.response, s.theta, s.se]),
    ),
  );
  return box;
}

export function renderError(message: string): HTMLElement {
  return h("div", "panel panel-error", message);
}

function renderPanel(panel: ModulePanel): HTMLElement {
  const box = h("section", `panel panel-${panel.kind}`);
  if (panel.title) box.appendChild(h("h3", "panel-title", panel.title));
  switch (panel.kind) {
    case "text":
      box.appendChild(h("p", "panel-body", panel.body ?? ""));
      break;
    case "error":
      box.appendChild(h("p", "panel-message", panel.message ?? "module error"));
      break;
    case "table":
      box.appendChild(dataTable(panel.columns ?? [], panel.rows ?? []));
      break;
    case "curves":
      box.appendChild(curveChart(panel.x ?? [], panel.series ?? []));
      break;
    default:
      // Forward-compatible: an unrecognized kind degrades to its JSON.
      box.appendChild(h("pre", "panel-raw", JSON.stringify(panel, null, 2)));
  }
  return box;
}

export function renderModuleDocument(doc: ModuleDocument): HTMLElement {
  const box = h("div", "module-document");
  for (const panel of doc.panels) box.appendChild(renderPanel(panel));
  return box;
}

/** Build a form from a module's declarative UI; values are read on submit. */
export function renderModuleForm(ui: ModuleUi): HTMLFormElement {
  const form = h("form", "module-form") as HTMLFormElement;
  for (const control of ui.form ?? []) {
    const row = h("label", "form-row");
    row.appendChild(h("span", "form-label", control.label ?? control.name));
    let input: HTMLInputElement | HTMLSelectElement;
    if (control.control === "select") {
      input = h("select") as HTMLSelectElement;
      for (const opt of control.options ?? []) {
        const option = h("option", undefined, opt.label);
        option.value = opt.value;
        input.appendChild(option);
      }
      if (control.default !== undefined) input.value = String(control.default);
    } else {
      input = h("input") as HTMLInputElement;
      if (control.control === "slider") input.type = "range";
      else if (control.control === "number") input.type = "number";
      else if (control.control === "checkbox") input.type = "checkbox";
      else input.type = "text";
      if (control.min !== undefined) input.min = String(control.min);
      if (control.max !== undefined) input.max = String(control.max);
      if (control.step !== undefined) input.step = String(control.step);
      if (control.control === "checkbox") input.checked = Boolean(control.default);
      else if (control.default !== undefined) input.value = String(control.default);
    }
    input.name = control.name;
    input.dataset.control = control.control;
    row.appendChild(input);
    form.appendChild(row);
  }
  const submit = h("button", "invoke-button", "Run") as HTMLButtonElement;
  submit.type = "submit";
  form.appendChild(submit);
  return form;
}

/** Read a rendered module form back into an invoke request body. */
export function formValues(form: HTMLFormElement): Record<string, unknown> {
  const values: Record<string, unknown> = {};
  for (const node of Array.from(form.elements)) {
    const input = node as HTMLInputElement;
    if (!input.name) continue;
    const control = input.dataset.control;
    if (control === "checkbox") values[input.name] = input.checked;
    else if (control === "slider" || control === "number") values[input.name] = Number(input.value);
    else values[input.name] = input.value;
  }
  return values;
}
