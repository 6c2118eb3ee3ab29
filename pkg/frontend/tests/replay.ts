/**
 * Mock server seeded from committed transcripts of the real service.
 *
 * `replayFetch` hands back the recorded responses in order and fails the
 * test on any drift: wrong method, wrong path, wrong body. That keeps
 * the suite honest — the UI only ever passes if it speaks exactly the
 * protocol the live server spoke when the fixture was recorded.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import type { FetchLike } from "../src/client.js";

export interface Exchange {
  method: string;
  path: string;
  request: unknown;
  status: number;
  response: unknown;
}

export interface Transcript {
  base: string;
  engine: {
    conformant: boolean;
    goal_value: number;
    activities: string[];
    omega: number;
    direction: string;
  };
  exchanges: Exchange[];
}

const here = dirname(fileURLToPath(import.meta.url));

export function loadTranscript(): Transcript {
  return JSON.parse(readFileSync(join(here, "fixtures", "transcript.json"), "utf8"));
}

export function loadErrorCases(): Array<Exchange & { name: string }> {
  return JSON.parse(readFileSync(join(here, "fixtures", "errors.json"), "utf8"));
}

export function errorCase(name: string): Exchange {
  const hit = loadErrorCases().find((c) => c.name === name);
  if (!hit) throw new Error(`no recorded error case named ${name}`);
  return hit;
}

export function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "Content-Type": "application/json" },
  });
}

// key-order independent comparison of request bodies
function canonical(value: unknown): string {
  const sortKeys = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(sortKeys);
    if (v !== null && typeof v === "object") {
      return Object.fromEntries(
        Object.entries(v as Record<string, unknown>)
          .sort(([a], [b]) => (a < b ? -1 : a > b ? 1 : 0))
          .map(([k, val]) => [k, sortKeys(val)]),
      );
    }
    return v;
  };
  return JSON.stringify(sortKeys(value));
}

export interface ReplayFetch extends FetchLike {
  remaining(): number;
}

export function replayFetch(base: string, exchanges: Exchange[]): ReplayFetch {
  const queue = [...exchanges];
  const fn = async (url: string, init?: RequestInit): Promise<Response> => {
    const method = init?.method ?? "GET";
    const next = queue.shift();
    if (!next) throw new Error(`transcript exhausted, unexpected ${method} ${url}`);
    if (url !== base + next.path || method !== next.method) {
      throw new Error(
        `transcript mismatch: got ${method} ${url}, expected ${next.method} ${base + next.path}`,
      );
    }
    if (next.request !== null && next.request !== undefined) {
      const got = init?.body === undefined ? undefined : JSON.parse(String(init.body));
      if (canonical(got) !== canonical(next.request)) {
        throw new Error(
          `transcript mismatch on ${method} ${next.path}: body ${canonical(got)} != recorded ${canonical(next.request)}`,
        );
      }
    }
    return jsonResponse(next.status, next.response);
  };
  return Object.assign(fn, { remaining: () => queue.length });
}
