import type {
  CommandOp,
  Health,
  MeterSummary,
  ReadingsPage,
  Ticket,
} from "./types.js";

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export interface ReadingsQuery {
  fromMs?: number;
  toMs?: number;
  afterSeq?: number;
  max?: number;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

/**
 * Thin typed client for the coordinator's HTTP API.
 *
 * `base` is prepended to every path ("" = same origin, the normal case when
 * the bundle is served from the coordinator's static route). The fetch
 * implementation is injectable so tests can run without a network.
 */
export class ApiClient {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  async meters(): Promise<MeterSummary[]> {
    return this.getJson("/api/meters");
  }

  async health(): Promise<Health> {
    return this.getJson("/api/health");
  }

  async readings(meterId: string, query: ReadingsQuery = {}): Promise<ReadingsPage> {
    const params = new URLSearchParams();
    if (query.fromMs !== undefined) params.set("from", String(query.fromMs));
    if (query.toMs !== undefined) params.set("to", String(query.toMs));
    if (query.afterSeq !== undefined) params.set("after", String(query.afterSeq));
    if (query.max !== undefined) params.set("max", String(query.max));
    const qs = params.toString();
    const path = `/api/meters/${encodeURIComponent(meterId)}/readings${qs ? "?" + qs : ""}`;
    return this.getJson(path);
  }

  async command(meterId: string, op: CommandOp, arg?: number): Promise<Ticket> {
    const body: Record<string, unknown> = { op };
    if (arg !== undefined) body.arg = arg;
    const resp = await this.fetchFn(
      `${this.base}/api/meters/${encodeURIComponent(meterId)}/command`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify(body),
      },
    );
    return this.unwrap(resp);
  }

  async ticket(commandId: number): Promise<Ticket> {
    return this.getJson(`/api/tickets/${commandId}`);
  }

  private async getJson<T>(path: string): Promise<T> {
    const resp = await this.fetchFn(this.base + path);
    return this.unwrap(resp);
  }

  private async unwrap<T>(resp: Response): Promise<T> {
    if (!resp.ok) {
      let detail = `HTTP ${resp.status}`;
      try {
        const body = await resp.json();
        if (body && typeof body.error === "string") detail = body.error;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(resp.status, detail);
    }
    return resp.json() as Promise<T>;
  }
}

/**
 * Where to find the API: `?api=` query parameter wins, then a
 * `METERSIM_API` global (settable by a hosting page), then same-origin.
 */
export function resolveApiBase(search: string, globals: Record<string, unknown>): string {
  const fromQuery = new URLSearchParams(search).get("api");
  if (fromQuery) return fromQuery.replace(/\/+$/, "");
  const fromGlobal = globals["METERSIM_API"];
  if (typeof fromGlobal === "string" && fromGlobal) return fromGlobal.replace(/\/+$/, "");
  return "";
}
