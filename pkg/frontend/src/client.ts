/**
 * Thin typed client for the recommendation service.
 *
 * Configuration is limited to the base URL plus an injectable fetch so
 * tests can replay recorded transcripts. HTTP errors are mapped onto a
 * small exception hierarchy; schema violations raise
 * MalformedResponseError so callers can show an error banner instead of
 * rendering a half-valid view.
 */

import { z } from "zod";
import {
  API_VERSION,
  dfgSchema,
  healthSchema,
  sessionViewSchema,
  type DfgDoc,
  type Health,
  type SessionView,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(message: string, readonly status: number) {
    super(message);
    this.name = new.target.name;
  }
}

/** 400: the server rejected the request; `valid` lists accepted activities when known. */
export class ValidationError extends ApiError {
  constructor(message: string, readonly valid: string[] = []) {
    super(message, 400);
  }
}

export class NotFoundError extends ApiError {
  constructor(message: string) {
    super(message, 404);
  }
}

export class ConflictError extends ApiError {
  constructor(message: string) {
    super(message, 409);
  }
}

export class UnavailableError extends ApiError {
  constructor(message: string) {
    super(message, 503);
  }
}

/** The body came back 2xx but does not match the documented schema. */
export class MalformedResponseError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "MalformedResponseError";
  }
}

// FastAPI wraps error payloads as {"detail": string | object}
const errorBodySchema = z.object({
  detail: z.union([
    z.string(),
    z.object({ error: z.string(), valid: z.array(z.string()).optional() }),
  ]),
});

function toApiError(status: number, body: unknown): ApiError {
  let message = `request failed with status ${status}`;
  let valid: string[] = [];
  const parsed = errorBodySchema.safeParse(body);
  if (parsed.success) {
    const detail = parsed.data.detail;
    if (typeof detail === "string") {
      message = detail;
    } else {
      message = detail.error;
      valid = detail.valid ?? [];
    }
  }
  switch (status) {
    case 400:
      return new ValidationError(message, valid);
    case 404:
      return new NotFoundError(message);
    case 409:
      return new ConflictError(message);
    case 503:
      return new UnavailableError(message);
    default:
      return new ApiError(message, status);
  }
}

export class NavigatorClient {
  private readonly base: string;
  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/+$/, "");
    this.fetchImpl = fetchImpl ?? ((url, init) => fetch(url, init));
  }

  async health(): Promise<Health> {
    return this.request("GET", "/health", undefined, healthSchema);
  }

  async dfg(): Promise<DfgDoc> {
    return this.request("GET", "/dfg", undefined, dfgSchema);
  }

  async startSession(firstActivity: string, firstKpi = 0): Promise<SessionView> {
    const body = { version: API_VERSION, first_activity: firstActivity, first_kpi: firstKpi };
    return this.request("POST", "/sessions", body, sessionViewSchema);
  }

  async step(
    sessionId: string,
    activity: string,
    realizedKpi?: number,
  ): Promise<SessionView> {
    const body: Record<string, unknown> = { version: API_VERSION, activity };
    if (realizedKpi !== undefined) body.realized_kpi = realizedKpi;
    return this.request(
      "POST",
      `/sessions/${encodeURIComponent(sessionId)}/step`,
      body,
      sessionViewSchema,
    );
  }

  async view(sessionId: string): Promise<SessionView> {
    return this.request(
      "GET",
      `/sessions/${encodeURIComponent(sessionId)}`,
      undefined,
      sessionViewSchema,
    );
  }

  private async request<T>(
    method: string,
    path: string,
    body: unknown,
    schema: z.ZodType<T>,
  ): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.headers = { "Content-Type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchImpl(this.base + path, init);

    let payload: unknown;
    try {
      payload = await response.json();
    } catch {
      if (!response.ok) throw toApiError(response.status, undefined);
      throw new MalformedResponseError(`${method} ${path}: response is not JSON`);
    }
    if (!response.ok) throw toApiError(response.status, payload);

    const parsed = schema.safeParse(payload);
    if (!parsed.success) {
      const issue = parsed.error.issues[0];
      const where = issue ? `${issue.path.join(".") || "$"}: ${issue.message}` : "unknown issue";
      throw new MalformedResponseError(`${method} ${path}: unexpected response shape (${where})`);
    }
    return parsed.data;
  }
}
