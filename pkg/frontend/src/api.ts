import type {
  ClusterCard,
  ClustersPayload,
  LabelsPayload,
  RecomputeReport,
  SectionsPayload,
  Verdict,
  WriteAck,
} from "./types";

/** Service answered with a non-2xx status. */
export class ApiError extends Error {
  readonly status: number;
  readonly detail: string;

  constructor(status: number, detail: string) {
    super(detail);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

/** Write rejected because our revision (or cluster model) was stale. */
export class ConflictError extends ApiError {
  constructor(detail: string) {
    super(409, detail);
    this.name = "ConflictError";
  }
}

/** The service could not be reached at all. */
export class ConnectionLostError extends Error {
  constructor(cause: string) {
    super(`connection lost: ${cause}`);
    this.name = "ConnectionLostError";
  }
}

interface WriteOptions {
  revision?: number;
  clusterModelId?: string;
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  let response: Response;
  try {
    response = await fetch(path, init);
  } catch (err) {
    throw new ConnectionLostError(err instanceof Error ? err.message : String(err));
  }
  if (!response.ok) {
    let detail = `${response.status} ${response.statusText}`;
    try {
      const body: unknown = await response.json();
      if (
        typeof body === "object" &&
        body !== null &&
        typeof (body as { detail?: unknown }).detail === "string"
      ) {
        detail = (body as { detail: string }).detail;
      }
    } catch {
      // non-JSON error body; keep the status line
    }
    if (response.status === 409) throw new ConflictError(detail);
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

function postJson(payload: unknown): RequestInit {
  return {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(payload),
  };
}

/** Typed client for the triage service. */
export class TriageApi {
  private readonly base: string;

  constructor(base = "") {
    this.base = base.replace(/\/$/, "");
  }

  getSections(): Promise<SectionsPayload> {
    return request<SectionsPayload>(`${this.base}/sections`);
  }

  getClusters(): Promise<ClustersPayload> {
    return request<ClustersPayload>(`${this.base}/clusters`);
  }

  getCluster(index: number): Promise<ClusterCard & { revision: number }> {
    return request<ClusterCard & { revision: number }>(
      `${this.base}/clusters/${index}`,
    );
  }

  getLabels(): Promise<LabelsPayload> {
    return request<LabelsPayload>(`${this.base}/labels`);
  }

  labelSection(name: string, verdict: Verdict, opts: WriteOptions = {}): Promise<WriteAck> {
    return request<WriteAck>(
      `${this.base}/sections/${encodeURIComponent(name)}/label`,
      postJson(this.writeBody(verdict, opts)),
    );
  }

  labelCluster(index: number, verdict: Verdict, opts: WriteOptions = {}): Promise<WriteAck> {
    return request<WriteAck>(
      `${this.base}/clusters/${index}/label`,
      postJson(this.writeBody(verdict, opts)),
    );
  }

  recompute(): Promise<RecomputeReport> {
    return request<RecomputeReport>(`${this.base}/recompute`, { method: "POST" });
  }

  private writeBody(verdict: Verdict, opts: WriteOptions): Record<string, unknown> {
    const body: Record<string, unknown> = { verdict };
    if (opts.revision !== undefined) body.revision = opts.revision;
    if (opts.clusterModelId !== undefined) body.cluster_model_id = opts.clusterModelId;
    return body;
  }
}
