import type {
  CatDocument,
  ClassicalDocument,
  DatasetSummary,
  DifDocument,
  IrtDocument,
  ModuleDocument,
  ModulesList,
  ModuleUi,
  RegressionDocument,
} from "./types";

/** Transport or service failure carrying the HTTP status and the server detail. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

/** Thrown when a newer request for the same panel superseded this one. */
export class SupersededError extends Error {
  constructor() {
    super("request superseded");
    this.name = "SupersededError";
  }
}

export interface CatParams {
  true_theta: number;
  min_sem?: number;
  seed?: number;
  max_items?: number;
}

export interface DifParams {
  matching?: "total" | "standardized" | "external";
  test?: string;
  bh?: boolean;
}

function query(params: Record<string, unknown>): string {
  const pairs = Object.entries(params).filter(([, v]) => v !== undefined && v !== null);
  if (pairs.length === 0) return "";
  const qs = new URLSearchParams();
  for (const [k, v] of pairs) qs.set(k, String(v));
  return `?${qs.toString()}`;
}

/**
 * Typed client for the analysis service. Each logical panel gets at most
 * one in-flight request: issuing a new one aborts the previous and the
 * superseded caller sees SupersededError (latest wins).
 */
export class ServiceClient {
  private inflight = new Map<string, AbortController>();

  constructor(
    private baseUrl = "",
    private session?: string,
  ) {}

  private async request<T>(panel: string, path: string, init: RequestInit = {}): Promise<T> {
    this.inflight.get(panel)?.abort();
    const controller = new AbortController();
    this.inflight.set(panel, controller);
    const headers = new Headers(init.headers);
    if (this.session) headers.set("X-Session", this.session);
    let response: Response;
    try {
      response = await fetch(this.baseUrl + path, { ...init, headers, signal: controller.signal });
    } catch (err) {
      if (controller.signal.aborted) throw new SupersededError();
      throw err;
    } finally {
      if (this.inflight.get(panel) === controller) this.inflight.delete(panel);
    }
    if (!response.ok) {
      let detail = `${response.status}`;
      try {
        const body = await response.json();
        detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail ?? body);
      } catch {
        /* non-JSON error body; keep the status text */
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  uploadCsv(csv: string): Promise<DatasetSummary> {
    return this.request("upload", "/datasets", {
      method: "POST",
      headers: { "content-type": "text/csv" },
      body: csv,
    });
  }

  classical(): Promise<ClassicalDocument> {
    return this.request("classical", "/analysis/classical");
  }

  regression(item: string, model?: string): Promise<RegressionDocument> {
    return this.request("regression", `/analysis/regression/${encodeURIComponent(item)}${query({ model })}`);
  }

  irt(): Promise<IrtDocument> {
    return this.request("irt", "/analysis/irt");
  }

  dif(params: DifParams = {}): Promise<DifDocument> {
    return this.request("dif", `/analysis/dif${query(params as Record<string, unknown>)}`);
  }

  cat(params: CatParams): Promise<CatDocument> {
    return this.request("cat", `/analysis/cat${query(params as unknown as Record<string, unknown>)}`);
  }

  modules(): Promise<ModulesList> {
    return this.request("modules", "/modules");
  }

  rediscover(): Promise<ModulesList> {
    return this.request("modules", "/modules/rediscover", { method: "POST" });
  }

  moduleUi(id: string): Promise<ModuleUi> {
    return this.request(`ui:${id}`, `/modules/${encodeURIComponent(id)}/ui`);
  }

  invoke(id: string, body: Record<string, unknown>): Promise<ModuleDocument> {
    return this.request(`invoke:${id}`, `/modules/${encodeURIComponent(id)}/invoke`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
  }
}
