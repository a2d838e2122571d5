import { ApiError, ServiceClient, SupersededError } from "./api";
import { FALLBACK_TAB, TabModel } from "./tabs";
import {
  formValues,
  renderCat,
  renderClassical,
  renderDif,
  renderDifPair,
  renderError,
  renderModuleDocument,
  renderModuleForm,
  renderRegression,
  renderSummary,
} from "./render";
import type { DatasetSummary, DifDocument, ModuleEntry, ModulesList } from "./types";

export const CAT_SLIDER = { min: -4, max: 4, step: 0.1, default: 1 } as const;
export const DEBOUNCE_MS = 250;

export function debounce<A extends unknown[]>(fn: (...args: A) => void, wait: number): (...args: A) => void {
  let timer: ReturnType<typeof setTimeout> | undefined;
  return (...args: A) => {
    clearTimeout(timer);
    timer = setTimeout(() => fn(...args), wait);
  };
}

export function clampTheta(value: number): number {
  return Math.min(CAT_SLIDER.max, Math.max(CAT_SLIDER.min, value));
}

/** Single-page client; every view renders from service responses only. */
export class App {
  readonly tabs = new TabModel();
  private summary: DatasetSummary | null = null;
  private tabBar: HTMLElement;
  private content: HTMLElement;
  private uploadStatus: HTMLElement;

  constructor(
    private root: HTMLElement,
    private client: ServiceClient = new ServiceClient(),
  ) {
    this.root.innerHTML = "";
    const uploadBox = document.createElement("div");
    uploadBox.className = "upload-view";
    const fileInput = document.createElement("input");
    fileInput.type = "file";
    fileInput.accept = ".csv,text/csv";
    fileInput.id = "csv-file";
    const uploadBtn = document.createElement("button");
    uploadBtn.textContent = "Upload";
    uploadBtn.id = "upload-btn";
    this.uploadStatus = document.createElement("span");
    this.uploadStatus.className = "upload-status";
    uploadBox.append(fileInput, uploadBtn, this.uploadStatus);

    this.tabBar = document.createElement("nav");
    this.tabBar.className = "tab-bar";
    this.content = document.createElement("main");
    this.content.className = "tab-content";
    this.root.append(uploadBox, this.tabBar, this.content);

    uploadBtn.addEventListener("click", () => {
      const file = fileInput.files?.[0];
      if (file) void this.uploadFile(file);
    });
    this.renderTabBar();
    void this.refreshModules(false);
  }

  get datasetLoaded(): boolean {
    return this.summary !== null;
  }

  async uploadFile(file: File): Promise<void> {
    await this.uploadText(await file.text());
  }

  /** POST the CSV; a parse failure stays inline and keeps tabs disabled. */
  async uploadText(csv: string): Promise<void> {
    try {
      this.summary = await this.client.uploadCsv(csv);
      this.uploadStatus.textContent = `${this.summary.persons} persons, ${this.summary.items} items`;
      this.uploadStatus.className = "upload-status ok";
    } catch (err) {
      if (err instanceof SupersededError) return;
      this.summary = null;
      this.uploadStatus.textContent = err instanceof ApiError ? err.message : String(err);
      this.uploadStatus.className = "upload-status error";
    }
    this.renderTabBar();
    this.renderActiveTab();
  }

  async refreshModules(rerender = true): Promise<void> {
    try {
      this.tabs.setModules(await this.client.modules());
    } catch (err) {
      if (err instanceof SupersededError) return;
      // Service unreachable: tabs still render, module sections show nothing.
    }
    this.renderTabBar();
    if (rerender) this.renderActiveTab();
  }

  /** Rediscover on the server, then repaint the module sections in place. */
  async rediscover(): Promise<void> {
    try {
      const listing: ModulesList = await this.client.rediscover();
      this.tabs.setModules(listing);
    } catch (err) {
      if (err instanceof SupersededError) return;
    }
    this.renderTabBar();
    this.renderActiveTab();
  }

  activate(tab: string): void {
    this.tabs.activate(tab);
    this.renderTabBar();
    this.renderActiveTab();
  }

  private renderTabBar(): void {
    this.tabBar.innerHTML = "";
    for (const tab of this.tabs.tabs) {
      const btn = document.createElement("button");
      btn.textContent = tab;
      btn.dataset.tab = tab;
      btn.className = tab === this.tabs.active ? "tab active" : "tab";
      const needsData = tab !== FALLBACK_TAB;
      btn.disabled = needsData && !this.datasetLoaded;
      btn.addEventListener("click", () => this.activate(tab));
      this.tabBar.appendChild(btn);
    }
  }

  renderActiveTab(): void {
    this.content.innerHTML = "";
    const tab = this.tabs.active;
    const view = document.createElement("div");
    view.className = "analysis-view";
    view.dataset.tab = tab;
    this.content.appendChild(view);
    this.paintAnalysis(tab, view);
    this.paintModuleSection(tab);
  }

  private paintAnalysis(tab: string, view: HTMLElement): void {
    if (tab !== FALLBACK_TAB && !this.datasetLoaded) {
      view.appendChild(renderError("upload a dataset first"));
      return;
    }
    switch (tab) {
      case "Scores":
        if (this.summary) view.appendChild(renderSummary(this.summary));
        break;
      case "Validity":
      case "Reliability":
      case "Item analysis":
        void this.loadClassical(tab, view);
        break;
      case "Regression":
        this.buildRegressionPanel(view);
        break;
      case "IRT models":
        this.buildCatPanel(view);
        break;
      case "DIF/Fairness":
        this.buildDifPanel(view);
        break;
      default:
        break;
    }
  }

  private async loadClassical(tab: string, view: HTMLElement): Promise<void> {
    try {
      const doc = await this.client.classical();
      const rendered = renderClassical(doc);
      if (tab === "Validity") {
        view.appendChild(rendered.querySelector(".validity") ?? renderError("no criterion column in this dataset"));
      } else if (tab === "Reliability") {
        view.appendChild(rendered.querySelector(".alpha") ?? renderError("reliability undefined for this dataset"));
      } else {
        view.appendChild(rendered);
      }
    } catch (err) {
      this.showError(view, err);
    }
  }

  private buildRegressionPanel(view: HTMLElement): void {
    const select = document.createElement("select");
    select.id = "regression-item";
    for (const name of this.summary?.item_names ?? []) {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      select.appendChild(opt);
    }
    const output = document.createElement("div");
    output.className = "regression-output";
    view.append(select, output);
    const stored = this.tabs.params("Regression")["item"];
    if (typeof stored === "string" && stored) select.value = stored;
    const load = async () => {
      this.tabs.setParam("Regression", "item", select.value);
      try {
        const doc = await this.client.regression(select.value);
        output.replaceChildren(renderRegression(doc));
      } catch (err) {
        this.showError(output, err, true);
      }
    };
    select.addEventListener("change", () => void load());
    if (select.value) void load();
  }

  /** What-if panel: ability slider drives seeded replays over the fitted model. */
  private buildCatPanel(view: HTMLElement): void {
    const params = this.tabs.params("IRT models");
    const slider = document.createElement("input");
    slider.type = "range";
    slider.id = "cat-theta";
    slider.min = String(CAT_SLIDER.min);
    slider.max = String(CAT_SLIDER.max);
    slider.step = String(CAT_SLIDER.step);
    slider.value = String(params["true_theta"] ?? CAT_SLIDER.default);
    const readout = document.createElement("span");
    readout.className = "theta-readout";
    readout.textContent = slider.value;
    const minSem = document.createElement("input");
    minSem.type = "number";
    minSem.id = "cat-min-sem";
    minSem.step = "0.05";
    minSem.value = String(params["min_sem"] ?? 0.4);
    const output = document.createElement("div");
    output.className = "cat-output";
    const label = document.createElement("label");
    label.textContent = "true ability";
    label.append(slider, readout);
    const semLabel = document.createElement("label");
    semLabel.textContent = "min SEM";
    semLabel.appendChild(minSem);
    view.append(label, semLabel, output);

    const load = async () => {
      const theta = clampTheta(Number(slider.value));
      const sem = Number(minSem.value);
      this.tabs.setParam("IRT models", "true_theta", theta);
      this.tabs.setParam("IRT models", "min_sem", sem);
      try {
        const doc = await this.client.cat({ true_theta: theta, min_sem: sem, seed: 1 });
        output.replaceChildren(renderCat(doc));
      } catch (err) {
        this.showError(output, err, true);
      }
    };
    const debounced = debounce(() => void load(), DEBOUNCE_MS);
    slider.addEventListener("input", () => {
      readout.textContent = slider.value;
      debounced();
    });
    minSem.addEventListener("change", debounced);
    void load();
  }

  private buildDifPanel(view: HTMLElement): void {
    const matching = document.createElement("select");
    matching.id = "dif-matching";
    const sources = ["total", "standardized"];
    if (this.summary?.matching_present) sources.push("external");
    for (const source of sources) {
      const opt = document.createElement("option");
      opt.value = source;
      opt.textContent = source === "external" ? "external matching criterion" : `${source} score`;
      matching.appendChild(opt);
    }
    const itemSelect = document.createElement("select");
    itemSelect.id = "dif-item";
    const output = document.createElement("div");
    output.className = "dif-output";
    const pair = document.createElement("div");
    pair.className = "dif-pair-output";
    view.append(matching, itemSelect, output, pair);
    const stored = this.tabs.params("DIF/Fairness")["matching"];
    if (typeof stored === "string" && sources.includes(stored)) matching.value = stored;

    let current: DifDocument | null = null;
    const paintPair = () => {
      const result = current?.results.find((r) => r.item === itemSelect.value);
      pair.replaceChildren(result ? renderDifPair(result) : document.createTextNode(""));
    };
    const load = async () => {
      this.tabs.setParam("DIF/Fairness", "matching", matching.value);
      try {
        const doc = await this.client.dif({ matching: matching.value as never });
        current = doc;
        output.replaceChildren(renderDif(doc));
        const chosen = itemSelect.value;
        itemSelect.innerHTML = "";
        for (const r of doc.results) {
          const opt = document.createElement("option");
          opt.value = r.item;
          opt.textContent = r.item;
          itemSelect.appendChild(opt);
        }
        if (doc.results.some((r) => r.item === chosen)) itemSelect.value = chosen;
        paintPair();
      } catch (err) {
        if (err instanceof ApiError && err.status === 409) {
          output.replaceChildren(renderError("provide a group column (__group) to run DIF"));
          return;
        }
        this.showError(output, err, true);
      }
    };
    matching.addEventListener("change", () => void load());
    itemSelect.addEventListener("change", paintPair);
    void load();
  }

  private paintModuleSection(tab: string): void {
    const entries = tab === FALLBACK_TAB ? this.tabs.allModules() : this.tabs.modulesFor(tab);
    const section = document.createElement("section");
    section.className = "module-section";
    if (tab === FALLBACK_TAB) {
      const rediscoverBtn = document.createElement("button");
      rediscoverBtn.id = "rediscover-btn";
      rediscoverBtn.textContent = "Rediscover modules";
      rediscoverBtn.addEventListener("click", () => void this.rediscover());
      section.appendChild(rediscoverBtn);
      const list = document.createElement("ul");
      list.className = "module-list";
      for (const entry of this.tabs.allModules()) {
        const li = document.createElement("li");
        li.dataset.moduleId = entry.id;
        li.textContent = `${entry.title} (${entry.category})${entry.available ? "" : ` unavailable: ${entry.diagnostic ?? ""}`}`;
        list.appendChild(li);
      }
      section.appendChild(list);
    }
    for (const entry of entries) {
      if (entry.available) section.appendChild(this.buildModulePanel(entry));
    }
    this.content.appendChild(section);
  }

  private buildModulePanel(entry: ModuleEntry): HTMLElement {
    const box = document.createElement("div");
    box.className = "module-panel";
    box.dataset.moduleId = entry.id;
    const title = document.createElement("h2");
    title.textContent = entry.title;
    const output = document.createElement("div");
    output.className = "module-output";
    box.append(title, output);
    void (async () => {
      try {
        const ui = await this.client.moduleUi(entry.id);
        if (ui.form) {
          const form = renderModuleForm(ui);
          form.addEventListener("submit", (event) => {
            event.preventDefault();
            void (async () => {
              try {
                const doc = await this.client.invoke(entry.id, formValues(form));
                output.replaceChildren(renderModuleDocument(doc));
              } catch (err) {
                this.showError(output, err, true);
              }
            })();
          });
          box.insertBefore(form, output);
        } else if (ui.panels) {
          output.replaceChildren(renderModuleDocument({ panels: ui.panels }));
        }
      } catch (err) {
        this.showError(output, err, true);
      }
    })();
    return box;
  }

  private showError(target: HTMLElement, err: unknown, replace = false): void {
    if (err instanceof SupersededError) return;
    const panel = renderError(err instanceof ApiError ? err.message : String(err));
    if (replace) target.replaceChildren(panel);
    else target.appendChild(panel);
  }
}

export function boot(): void {
  const root = document.getElementById("app");
  if (root) new App(root);
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  boot();
}
