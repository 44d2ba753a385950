/**
 * Minimal client SDK for the evojudge reward service.
 *
 * Scores are raw 1-5 integers, passed through unmodified; batch
 * normalization is the trainer's job. Batch scoring fans out bounded
 * concurrent single-item requests and preserves input order; one bad
 * item becomes a per-item error slot, never a whole-batch failure.
 */

export interface ClientConfig {
  /** Service root, e.g. "http://127.0.0.1:8080". */
  baseUrl: string;
  /** Per-request timeout in seconds. Must be > 0. Default 30. */
  timeoutSeconds?: number;
  /** Maximum concurrent in-flight requests during batch scoring. Default 8. */
  maxInFlight?: number;
  /** Retries after a transport failure or 5xx response. Must be >= 0. Default 2. */
  retries?: number;
}

export interface RewardItem {
  /** Base64-encoded bytes or an http(s) URL. */
  source_image: string;
  instruction: string;
  /** Base64-encoded bytes or an http(s) URL. */
  candidate: string;
  /** Optional library version override; the service default otherwise. */
  library_version?: string;
}

export interface RewardResponse {
  score: number;
  judgment_id: string;
  library_version: string;
}

export interface BatchErrorSlot {
  error: { status: number; detail: string };
}

export type BatchResult = RewardResponse | BatchErrorSlot;

export function isErrorSlot(result: BatchResult): result is BatchErrorSlot {
  return "error" in result;
}

/** An item failed local validation; no request was sent. */
export class ClientValidationError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ClientValidationError";
  }
}

/** The service answered with a non-2xx status. */
export class RewardServiceError extends Error {
  constructor(
    message: string,
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(message);
    this.name = "RewardServiceError";
  }
}

/** The request could not be completed after all retries. */
export class TransportError extends Error {
  constructor(
    message: string,
    public readonly attempts: number,
    /** Last HTTP status seen, if any response arrived at all. */
    public readonly lastStatus?: number,
  ) {
    super(message);
    this.name = "TransportError";
  }
}

const BASE64_RE = /^[A-Za-z0-9+/]+={0,2}$/;

function validateImage(field: string, value: string): void {
  if (value.startsWith("http://") || value.startsWith("https://")) {
    return;
  }
  if (!value || value.length % 4 !== 0 || !BASE64_RE.test(value)) {
    throw new ClientValidationError(`${field}: not valid base64 or an http(s) URL`);
  }
}

function validateItem(item: RewardItem): void {
  validateImage("source_image", item.source_image);
  validateImage("candidate", item.candidate);
  if (!item.instruction) {
    throw new ClientValidationError("instruction: must be non-empty");
  }
}

class Semaphore {
  private available: number;
  private waiters: Array<() => void> = [];

  constructor(capacity: number) {
    this.available = capacity;
  }

  async acquire(): Promise<void> {
    if (this.available > 0) {
      this.available -= 1;
      return;
    }
    await new Promise<void>((resolve) => this.waiters.push(resolve));
  }

  release(): void {
    const next = this.waiters.shift();
    if (next) {
      next();
    } else {
      this.available += 1;
    }
  }
}

interface ResolvedConfig {
  baseUrl: string;
  timeoutSeconds: number;
  maxInFlight: number;
  retries: number;
}

export class RewardClient {
  private readonly config: ResolvedConfig;

  constructor(config: ClientConfig) {
    const resolved: ResolvedConfig = {
      baseUrl: config.baseUrl.replace(/\/+$/, ""),
      timeoutSeconds: config.timeoutSeconds ?? 30,
      maxInFlight: config.maxInFlight ?? 8,
      retries: config.retries ?? 2,
    };
    if (!resolved.baseUrl) {
      throw new ClientValidationError("baseUrl must be non-empty");
    }
    if (resolved.timeoutSeconds <= 0) {
      throw new ClientValidationError("timeoutSeconds must be > 0");
    }
    if (resolved.maxInFlight < 1) {
      throw new ClientValidationError("maxInFlight must be >= 1");
    }
    if (resolved.retries < 0) {
      throw new ClientValidationError("retries must be >= 0");
    }
    this.config = resolved;
  }

  /** Score one candidate edit; returns the raw 1-5 integer unmodified. */
  async score(item: RewardItem): Promise<number> {
    const response = await this.scoreDetailed(item);
    return response.score;
  }

  /** Score one candidate edit; returns the full service response. */
  async scoreDetailed(item: RewardItem): Promise<RewardResponse> {
    validateItem(item);
    const { status, body } = await this.request("/v1/reward", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(item),
    });
    if (status < 200 || status >= 300) {
      const detail = typeof body?.detail === "string" ? body.detail : JSON.stringify(body);
      throw new RewardServiceError(`reward request failed (${status}): ${detail}`, status, detail);
    }
    return body as RewardResponse;
  }

  /**
   * Score many items with bounded concurrency. The result array matches
   * the input order exactly; a failed item yields an error slot.
   */
  async scoreBatch(items: RewardItem[]): Promise<BatchResult[]> {
    const results: BatchResult[] = new Array(items.length);
    const semaphore = new Semaphore(this.config.maxInFlight);
    await Promise.all(
      items.map(async (item, index) => {
        await semaphore.acquire();
        try {
          results[index] = await this.scoreDetailed(item);
        } catch (err) {
          results[index] = { error: toErrorSlot(err) };
        } finally {
          semaphore.release();
        }
      }),
    );
    return results;
  }

  /** Retrieve the reasoning chain behind a previously issued judgment. */
  async judgment(judgmentId: string): Promise<Record<string, unknown>> {
    const { status, body } = await this.request(`/v1/judgment/${judgmentId}`, { method: "GET" });
    if (status !== 200) {
      const detail = typeof body?.detail === "string" ? body.detail : JSON.stringify(body);
      throw new RewardServiceError(`judgment lookup failed (${status}): ${detail}`, status, detail);
    }
    return body as Record<string, unknown>;
  }

  async health(): Promise<{ status: string; library_version: string }> {
    const { status, body } = await this.request("/v1/health", { method: "GET" });
    if (status !== 200) {
      throw new RewardServiceError(`health check failed (${status})`, status, "");
    }
    return body as { status: string; library_version: string };
  }

  private async request(
    path: string,
    init: RequestInit,
  ): Promise<{ status: number; body: any }> {
    const url = `${this.config.baseUrl}${path}`;
    const attempts = this.config.retries + 1;
    let lastStatus: number | undefined;
    let lastError = "";
    const decode = async (response: Response) => {
      try {
        return await response.json();
      } catch {
        return null;
      }
    };
    for (let attempt = 1; attempt <= attempts; attempt += 1) {
      let response: Response;
      try {
        response = await fetch(url, {
          ...init,
          signal: AbortSignal.timeout(this.config.timeoutSeconds * 1000),
        });
      } catch (err) {
        lastError = err instanceof Error ? err.message : String(err);
        continue;
      }
      lastStatus = response.status;
      if (response.status >= 500 && attempt < attempts) {
        lastError = `server returned ${response.status}`;
        continue;
      }
      // A final 5xx still carries the service's error detail; surface it
      // as a service error rather than hiding it behind a transport one.
      return { status: response.status, body: await decode(response) };
    }
    throw new TransportError(
      `request to ${path} failed after ${attempts} attempt(s): ${lastError}`,
      attempts,
      lastStatus,
    );
  }
}

function toErrorSlot(err: unknown): { status: number; detail: string } {
  if (err instanceof RewardServiceError) {
    return { status: err.status, detail: err.detail };
  }
  if (err instanceof ClientValidationError) {
    return { status: 0, detail: err.message };
  }
  if (err instanceof TransportError) {
    return { status: err.lastStatus ?? 0, detail: err.message };
  }
  return { status: 0, detail: err instanceof Error ? err.message : String(err) };
}
