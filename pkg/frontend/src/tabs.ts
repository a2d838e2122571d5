import type { ModuleEntry, ModulesList } from "./types";

export const KNOWN_CATEGORIES = [
  "Scores",
  "Validity",
  "Reliability",
  "Item analysis",
  "Regression",
  "IRT models",
  "DIF/Fairness",
] as const;

export const FALLBACK_TAB = "Modules";

/**
 * Ordered tab set and per-tab parameter state. The seven analysis
 * categories and the fallback tab are always present; categories the
 * server reports beyond those are appended after the fallback.
 */
export class TabModel {
  private moduleGroups = new Map<string, ModuleEntry[]>();
  private extraTabs: string[] = [];
  private state = new Map<string, Record<string, unknown>>();
  private activeTab: string = KNOWN_CATEGORIES[0];

  get tabs(): string[] {
    return [...KNOWN_CATEGORIES, FALLBACK_TAB, ...this.extraTabs];
  }

  get active(): string {
    return this.activeTab;
  }

  activate(tab: string): void {
    if (!this.tabs.includes(tab)) throw new Error(`unknown tab: ${tab}`);
    this.activeTab = tab;
  }

  /** Replace module placement from a fresh /modules listing. */
  setModules(listing: ModulesList): void {
    this.moduleGroups = new Map();
    this.extraTabs = [];
    for (const group of listing.categories) {
      this.moduleGroups.set(group.name, group.modules);
      if (!KNOWN_CATEGORIES.includes(group.name as never) && group.name !== FALLBACK_TAB) {
        this.extraTabs.push(group.name);
      }
    }
    if (!this.tabs.includes(this.activeTab)) this.activeTab = KNOWN_CATEGORIES[0];
  }

  /** Module entries routed to the given tab. */
  modulesFor(tab: string): ModuleEntry[] {
    return this.moduleGroups.get(tab) ?? [];
  }

  /** All module entries in listing order. */
  allModules(): ModuleEntry[] {
    return this.tabs.flatMap((tab) => this.modulesFor(tab));
  }

  params(tab: string): Record<string, unknown> {
    let store = this.state.get(tab);
    if (!store) {
      store = {};
      this.state.set(tab, store);
    }
    return store;
  }

  setParam(tab: string, name: string, value: unknown): void {
    this.params(tab)[name] = value;
  }
}
